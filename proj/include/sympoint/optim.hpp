#pragma once

// Parameter store, AdamW, gradient clipping, and the checkpoint file format
// (flat little-endian binary plus a JSON manifest of name/shape/offset/dtype).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sympoint/io.hpp"
#include "sympoint/tensor.hpp"

namespace sympoint {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered, named collection of trainable tensors.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back({name, std::move(t)});
    return params_.back().second;
  }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.second.numel();
    return n;
  }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  Tensor<T>& get(const std::string& name) { return params_.at(index_.at(name)).second; }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  void zero_grad() {
    for (auto& p : params_) p.second.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

enum class NonFinitePolicy { abort, skip };

/// First/second moment buffers aligned with a ParamStore's order.
template <typename T>
struct AdamWState {
  std::int64_t step = 0;
  std::vector<std::vector<T>> m, v;
};

/// One decoupled-weight-decay Adam update. Returns false when the step was
/// skipped because a gradient was non-finite under NonFinitePolicy::skip.
template <typename T>
bool adamw_step(ParamStore<T>& params, const AdamWConfig& cfg, AdamWState<T>& state,
                NonFinitePolicy policy = NonFinitePolicy::abort) {
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) {
      if (!std::isfinite(g)) {
        if (policy == NonFinitePolicy::skip) return false;
        throw NonFiniteError("non-finite gradient in parameter " + name);
      }
    }
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (auto& [name, p] : params) {
      state.m.emplace_back(p.numel(), T(0));
      state.v.emplace_back(p.numel(), T(0));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  std::size_t k = 0;
  for (auto& [name, p] : params) {
    auto w = p.mutable_values();
    auto& m = state.m[k];
    auto& v = state.v[k];
    ++k;
    const bool has = p.has_grad();
    const auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has ? double(g[i]) : 0.0;
      m[i] = T(cfg.beta1 * double(m[i]) + (1.0 - cfg.beta1) * gi);
      v[i] = T(cfg.beta2 * double(v[i]) + (1.0 - cfg.beta2) * gi * gi);
      double wi = double(w[i]) * (1.0 - cfg.lr * cfg.weight_decay);
      const double mh = double(m[i]) / bc1;
      const double vh = double(v[i]) / bc2;
      wi -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
      w[i] = T(wi);
    }
  }
  return true;
}

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm) {
  double sq = 0;
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += double(g) * double(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T s = T(max_norm / (norm + 1e-12));
    for (auto& [name, p] : params) {
      if (!p.has_grad()) continue;
      for (T& g : p.mutable_grad()) g *= s;
    }
  }
  return norm;
}

// ------------------------------------------------------------ checkpoints

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else return "f64";
}

/// Writes `<stem>.bin` and `<stem>.json`. `extra` is merged into the manifest.
template <typename T>
void save_checkpoint(const std::filesystem::path& stem, const ParamStore<T>& params,
                     const AdamWState<T>* opt, const nlohmann::json& extra) {
  std::string blob;
  nlohmann::json tensors = nlohmann::json::array();
  auto append = [&](const std::string& name, const Shape& shape, std::span<const T> data) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = shape;
    e["offset"] = blob.size();
    e["dtype"] = dtype_name<T>();
    tensors.push_back(e);
    blob.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(T));
  };
  for (const auto& [name, p] : params) append(name, p.shape(), p.values());
  if (opt && opt->m.size() == params.size()) {
    std::size_t k = 0;
    for (const auto& [name, p] : params) {
      append("adam.m/" + name, p.shape(), opt->m[k]);
      append("adam.v/" + name, p.shape(), opt->v[k]);
      ++k;
    }
  }
  nlohmann::json manifest = extra;
  manifest["tensors"] = tensors;
  manifest["adam_step"] = opt ? opt->step : 0;
  manifest["blob"] = stem.filename().string() + ".bin";
  write_file_atomic(std::filesystem::path(stem.string() + ".bin"), blob);
  write_file_atomic(std::filesystem::path(stem.string() + ".json"), manifest.dump(2) + "\n");
}

/// Loads parameter values (and optimizer moments when `opt` is non-null)
/// into an existing store with matching names and shapes. Returns the manifest.
template <typename T>
nlohmann::json load_checkpoint(const std::filesystem::path& stem, ParamStore<T>& params, AdamWState<T>* opt) {
  const auto manifest = nlohmann::json::parse(read_file(std::filesystem::path(stem.string() + ".json")));
  const std::string blob = read_file(std::filesystem::path(stem.string() + ".bin"));
  std::map<std::string, nlohmann::json> entries;
  for (const auto& e : manifest.at("tensors")) entries[e.at("name").get<std::string>()] = e;
  auto fill = [&](const std::string& name, const Shape& shape, std::span<T> dst) {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::runtime_error("checkpoint is missing tensor " + name);
    const auto& e = it->second;
    if (e.at("shape").get<Shape>() != shape) {
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    }
    if (e.at("dtype").get<std::string>() != dtype_name<T>()) {
      throw std::runtime_error("checkpoint dtype mismatch for " + name);
    }
    const std::size_t off = e.at("offset").get<std::size_t>();
    if (off + dst.size() * sizeof(T) > blob.size()) throw std::runtime_error("checkpoint blob truncated");
    std::memcpy(dst.data(), blob.data() + off, dst.size() * sizeof(T));
  };
  for (auto& [name, p] : params) fill(name, p.shape(), p.mutable_values());
  if (opt) {
    opt->m.clear();
    opt->v.clear();
    opt->step = manifest.value("adam_step", std::int64_t{0});
    if (opt->step > 0) {
      for (auto& [name, p] : params) {
        opt->m.emplace_back(p.numel());
        opt->v.emplace_back(p.numel());
        fill("adam.m/" + name, p.shape(), opt->m.back());
        fill("adam.v/" + name, p.shape(), opt->v.back());
      }
    }
  }
  return manifest;
}

}  // namespace sympoint
