#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sympoint/optim.hpp"
#include "sympoint/rng.hpp"
#include "sympoint/tensor.hpp"

namespace sympoint::nn {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = T(rng.uniform(-bound, bound));
  return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> constant(Shape shape, const std::vector<double>& values) {
  std::vector<T> v(values.begin(), values.end());
  return Tensor<T>(std::move(shape), std::move(v));
}

/// y = x W + b, W shaped [in, out].
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool with_bias = true) {
    const double bound = 1.0 / std::sqrt(double(in));
    weight = store.add(name + ".weight", uniform_tensor<T>({in, out}, bound, rng));
    if (with_bias) bias = store.add(name + ".bias", Tensor<T>::zeros({out}));
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = matmul(x, weight);
    return bias.defined() ? add(y, bias) : y;
  }
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t dim) {
    gain = store.add(name + ".gain", Tensor<T>::full({dim}, T(1)));
    bias = store.add(name + ".bias", Tensor<T>::zeros({dim}));
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return add(mul(layer_norm(x), gain), bias); }
};

/// Two linear layers with a ReLU between them.
template <typename T>
struct Mlp2 {
  Linear<T> first;
  Linear<T> second;

  Mlp2() = default;
  Mlp2(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
       Rng& rng)
      : first(store, name + ".0", in, hidden, rng), second(store, name + ".1", hidden, out, rng) {}
  Tensor<T> operator()(const Tensor<T>& x) const { return second(relu(first(x))); }
};

}  // namespace sympoint::nn
