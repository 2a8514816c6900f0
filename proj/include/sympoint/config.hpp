#pragma once

// Plain-text run configuration: `key = value` lines, `#` comments.

#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sympoint/backbone.hpp"
#include "sympoint/conngraph.hpp"
#include "sympoint/head.hpp"
#include "sympoint/io.hpp"
#include "sympoint/losses.hpp"
#include "sympoint/optim.hpp"
#include "sympoint/synth.hpp"

namespace sympoint {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::string profile = "toy";
  BackboneConfig backbone;
  HeadConfig head;
  double epsilon = kDefaultEpsilon;
  std::size_t connection_cap = kDefaultConnectionCap;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 1;
  AdamWConfig optimizer;
  std::uint64_t seed = 1;
  double grad_clip = 1.0;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  NonFinitePolicy nonfinite = NonFinitePolicy::abort;
  LossWeights weights;
};

struct AblationConfig {
  bool use_ccl = true;
  double ccl_tau = 1.0;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  bool augment = false;
  AugmentConfig augmentation;
  AblationConfig ablation;
};

inline void apply_profile(ModelConfig& m, const std::string& name) {
  if (name == "toy") {
    m.backbone.channels = {32, 64, 128, 256};
    m.backbone.k_nn = 8;
    m.head.num_queries = 16;
    m.head.dim = 64;
  } else if (name == "full" || name == "paper") {
    m.backbone.channels = {64, 128, 256, 512};
    m.backbone.k_nn = 16;
    m.head.num_queries = 500;
    m.head.dim = 256;
  } else {
    throw ConfigError("unknown model.profile '" + name + "' (expected toy or full)");
  }
  m.backbone.strides = {1.0, 0.25, 0.25, 0.25};
  m.head.layers = 3;
  m.head.share_weights = true;
  m.profile = name;
}

struct ConfigKey {
  const char* name;
  const char* help;
};

/// Every recognised key, in documentation order.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"model.profile", "toy | full; sets defaults that later keys override (toy)"},
      {"model.stages", "number of backbone stages R, must match channels (4)"},
      {"model.strides", "comma list, per-stage sampling ratio, first entry 1 (1,0.25,0.25,0.25)"},
      {"model.k_nn", "attention neighbourhood size (toy 8, full 16)"},
      {"model.channels", "comma list of per-stage widths (toy 32,64,128,256)"},
      {"model.use_acm", "unite kNN with connections in stage-0 attention (true)"},
      {"model.use_posenc", "relative position encoding in attention (true)"},
      {"model.num_queries", "query count O (toy 16, full 500)"},
      {"model.head_dim", "query width D (toy 64, full 256)"},
      {"model.head_layers", "query-update rounds L (3)"},
      {"model.share_head_weights", "reuse one set of query blocks across rounds (true)"},
      {"model.mask_threshold", "mask score needed to keep a point visible (0.5)"},
      {"model.epsilon", "connection distance threshold in px (1.0)"},
      {"model.connection_cap", "maximum connections kept per primitive (8)"},
      {"train.epochs", "training epochs (100)"},
      {"train.batch_size", "documents per optimizer step (1)"},
      {"train.lr", "AdamW learning rate (1e-4)"},
      {"train.weight_decay", "AdamW decoupled weight decay (1e-3)"},
      {"train.seed", "master seed (1)"},
      {"train.grad_clip", "global gradient-norm clip, 0 disables (1.0)"},
      {"train.checkpoint_every", "epochs between checkpoints, 0 = final only (0)"},
      {"train.nonfinite", "abort | skip on a non-finite loss or gradient (abort)"},
      {"train.lambda_bce", "mask BCE weight (5)"},
      {"train.lambda_dice", "mask dice weight (5)"},
      {"train.lambda_cls", "classification weight (2)"},
      {"train.lambda_ccl", "contrastive connection weight (8)"},
      {"data.augment", "enable geometric augmentation (false)"},
      {"data.rotate", "random rotation about the canvas center (true)"},
      {"data.flip", "random vertical flip (true)"},
      {"data.scale", "random scale in [0.8, 1.2] (true)"},
      {"data.shift", "random shift up to 10% of the canvas (true)"},
      {"ablation.use_ccl", "train with the contrastive connection loss (true)"},
      {"ablation.downsample", "knn_interp | knn_max | knn_avg | bilinear_surrogate (knn_interp)"},
      {"ablation.ccl_tau", "contrastive temperature (1.0)"},
  };
  return keys;
}

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d < 0 || d != std::floor(d)) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(d);
}

inline std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

}  // namespace config_detail

/// Parses key/value pairs in order. Duplicate keys: the last one wins.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    out.emplace_back(config_detail::trim(line.substr(0, eq)), config_detail::trim(line.substr(eq + 1)));
  }
  return out;
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& v) {
  using namespace config_detail;
  auto& m = cfg.model;
  auto& t = cfg.train;
  if (key == "model.profile") apply_profile(m, v);
  else if (key == "model.stages") {
    if (to_count(key, v) != m.backbone.channels.size())
      throw ConfigError("model.stages = " + v + " disagrees with model.channels");
  } else if (key == "model.strides") m.backbone.strides = to_list(key, v);
  else if (key == "model.k_nn") m.backbone.k_nn = to_count(key, v);
  else if (key == "model.channels") {
    m.backbone.channels.clear();
    for (double c : to_list(key, v)) {
      if (c < 1 || c != std::floor(c)) throw ConfigError("model.channels: entries must be positive integers");
      m.backbone.channels.push_back(static_cast<std::size_t>(c));
    }
  } else if (key == "model.use_acm") m.backbone.use_acm = to_bool(key, v);
  else if (key == "model.use_posenc") m.backbone.use_posenc = to_bool(key, v);
  else if (key == "model.num_queries") m.head.num_queries = to_count(key, v);
  else if (key == "model.head_dim") m.head.dim = to_count(key, v);
  else if (key == "model.head_layers") m.head.layers = to_count(key, v);
  else if (key == "model.share_head_weights") m.head.share_weights = to_bool(key, v);
  else if (key == "model.mask_threshold") m.head.mask_threshold = to_double(key, v);
  else if (key == "model.epsilon") m.epsilon = to_double(key, v);
  else if (key == "model.connection_cap") m.connection_cap = to_count(key, v);
  else if (key == "train.epochs") t.epochs = to_count(key, v);
  else if (key == "train.batch_size") t.batch_size = to_count(key, v);
  else if (key == "train.lr") t.optimizer.lr = to_double(key, v);
  else if (key == "train.weight_decay") t.optimizer.weight_decay = to_double(key, v);
  else if (key == "train.seed") t.seed = to_count(key, v);
  else if (key == "train.grad_clip") t.grad_clip = to_double(key, v);
  else if (key == "train.checkpoint_every") t.checkpoint_every = to_count(key, v);
  else if (key == "train.nonfinite") {
    if (v == "abort") t.nonfinite = NonFinitePolicy::abort;
    else if (v == "skip") t.nonfinite = NonFinitePolicy::skip;
    else throw ConfigError("train.nonfinite: expected abort or skip");
  } else if (key == "train.lambda_bce") t.weights.bce = to_double(key, v);
  else if (key == "train.lambda_dice") t.weights.dice = to_double(key, v);
  else if (key == "train.lambda_cls") t.weights.cls = to_double(key, v);
  else if (key == "train.lambda_ccl") t.weights.ccl = to_double(key, v);
  else if (key == "data.augment") cfg.augment = to_bool(key, v);
  else if (key == "data.rotate") cfg.augmentation.rotate = to_bool(key, v);
  else if (key == "data.flip") cfg.augmentation.flip = to_bool(key, v);
  else if (key == "data.scale") cfg.augmentation.scale = to_bool(key, v);
  else if (key == "data.shift") cfg.augmentation.shift = to_bool(key, v);
  else if (key == "ablation.use_ccl") cfg.ablation.use_ccl = to_bool(key, v);
  else if (key == "ablation.downsample") {
    try {
      m.head.downsample = parse_downsample(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("ablation.downsample: ") + e.what());
    }
  } else if (key == "ablation.ccl_tau") cfg.ablation.ccl_tau = to_double(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline void validate_config(const RunConfig& cfg) {
  try {
    cfg.model.backbone.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto& m = cfg.model;
  if (m.backbone.stages() < 4) throw ConfigError("the head needs at least 4 backbone stages");
  if (m.head.num_queries < 1 || m.head.dim < 1 || m.head.layers < 1) throw ConfigError("head sizes must be positive");
  if (!(m.epsilon > 0)) throw ConfigError("model.epsilon must be positive");
  if (m.connection_cap < 1) throw ConfigError("model.connection_cap must be >= 1");
  if (cfg.train.epochs < 1 || cfg.train.batch_size < 1) throw ConfigError("train.epochs and train.batch_size must be >= 1");
  if (!(cfg.train.optimizer.lr > 0)) throw ConfigError("train.lr must be positive");
  if (!(cfg.ablation.ccl_tau > 0)) throw ConfigError("ablation.ccl_tau must be positive");
}

/// Profile first (wherever it appears), then every other key in order.
inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  apply_profile(cfg.model, "toy");
  const auto kv = parse_key_values(text);
  for (const auto& [k, v] : kv)
    if (k == "model.profile") set_config_value(cfg, k, v);
  for (const auto& [k, v] : kv)
    if (k != "model.profile") set_config_value(cfg, k, v);
  validate_config(cfg);
  return cfg;
}

inline RunConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

namespace config_detail {
inline std::string join(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}
inline std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}
}  // namespace config_detail

/// Canonical key/value listing, stable across runs.
inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  using config_detail::join;
  using config_detail::num;
  const auto& m = cfg.model;
  const auto& t = cfg.train;
  std::vector<double> ch(m.backbone.channels.begin(), m.backbone.channels.end());
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"model.profile", m.profile},
      {"model.stages", std::to_string(m.backbone.stages())},
      {"model.strides", join(m.backbone.strides)},
      {"model.k_nn", std::to_string(m.backbone.k_nn)},
      {"model.channels", join(ch)},
      {"model.use_acm", b(m.backbone.use_acm)},
      {"model.use_posenc", b(m.backbone.use_posenc)},
      {"model.num_queries", std::to_string(m.head.num_queries)},
      {"model.head_dim", std::to_string(m.head.dim)},
      {"model.head_layers", std::to_string(m.head.layers)},
      {"model.share_head_weights", b(m.head.share_weights)},
      {"model.mask_threshold", num(m.head.mask_threshold)},
      {"model.epsilon", num(m.epsilon)},
      {"model.connection_cap", std::to_string(m.connection_cap)},
      {"train.epochs", std::to_string(t.epochs)},
      {"train.batch_size", std::to_string(t.batch_size)},
      {"train.lr", num(t.optimizer.lr)},
      {"train.weight_decay", num(t.optimizer.weight_decay)},
      {"train.seed", std::to_string(t.seed)},
      {"train.grad_clip", num(t.grad_clip)},
      {"train.checkpoint_every", std::to_string(t.checkpoint_every)},
      {"train.nonfinite", t.nonfinite == NonFinitePolicy::abort ? "abort" : "skip"},
      {"train.lambda_bce", num(t.weights.bce)},
      {"train.lambda_dice", num(t.weights.dice)},
      {"train.lambda_cls", num(t.weights.cls)},
      {"train.lambda_ccl", num(t.weights.ccl)},
      {"data.augment", b(cfg.augment)},
      {"data.rotate", b(cfg.augmentation.rotate)},
      {"data.flip", b(cfg.augmentation.flip)},
      {"data.scale", b(cfg.augmentation.scale)},
      {"data.shift", b(cfg.augmentation.shift)},
      {"ablation.use_ccl", b(cfg.ablation.use_ccl)},
      {"ablation.downsample", downsample_name(m.head.downsample)},
      {"ablation.ccl_tau", num(cfg.ablation.ccl_tau)},
  };
}

inline std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

/// FNV-1a over the model.* entries plus the class count: the parts a
/// checkpoint's parameters depend on.
inline std::string model_hash(const RunConfig& cfg, std::size_t num_classes) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  for (const auto& [k, v] : config_entries(cfg))
    if (k.rfind("model.", 0) == 0) feed(k + "=" + v);
  feed("classes=" + std::to_string(num_classes));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace sympoint
