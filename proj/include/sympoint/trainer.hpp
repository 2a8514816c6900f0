#pragma once

// Training, evaluation, and ablation over directories of documents.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "sympoint/backbone.hpp"
#include "sympoint/config.hpp"
#include "sympoint/conngraph.hpp"
#include "sympoint/head.hpp"
#include "sympoint/io.hpp"
#include "sympoint/losses.hpp"
#include "sympoint/metrics.hpp"
#include "sympoint/optim.hpp"
#include "sympoint/plot.hpp"
#include "sympoint/points.hpp"
#include "sympoint/synth.hpp"

namespace sympoint {

namespace fs = std::filesystem;

/// Worker thread cap from SYMPOINT_THREADS (default 1).
inline std::size_t worker_threads() {
  if (const char* env = std::getenv("SYMPOINT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return 1;
}

/// Runs fn(i) for i in [0, n) on up to `threads` threads.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Documents of a dataset directory (every *.json except manifest.json),
/// sorted by file name. All must share one category table.
inline std::vector<Document> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto& p = e.path();
    if (e.is_regular_file() && p.extension() == ".json" && p.filename() != "manifest.json") files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  std::vector<Document> docs;
  for (const auto& f : files) {
    try {
      docs.push_back(parse_document(read_file(f)));
    } catch (const DocumentError& e) {
      throw DocumentError(f.filename().string() + ": " + e.what());
    }
    if (docs.back().categories != docs.front().categories)
      throw DocumentError(f.filename().string() + ": category table differs from " + files.front().filename().string());
  }
  if (docs.empty()) throw IoError("no documents in " + dir.string());
  return docs;
}

/// Everything about a document that does not depend on model weights.
struct Sample {
  Document doc;
  PointSet points;
  ConnectionGraph connections;
  PyramidGeometry geometry;
  std::vector<double> input;
  SymbolTargets targets;
  ContrastSets contrast;
  std::vector<int> ccl_labels;
};

inline Sample prepare_sample(Document doc, const ModelConfig& m, std::uint64_t seed) {
  Sample s;
  s.doc = std::move(doc);
  s.points = build_point_set(s.doc);
  s.connections = build_connections(s.points, s.doc, m.epsilon, m.connection_cap, derive_seed(seed, 0xc0, 0));
  std::vector<Vec2> pos;
  for (const auto& p : s.points.points) pos.push_back(p.position);
  s.geometry = build_geometry(pos, &s.connections, m.backbone, derive_seed(seed, 0xf9, 0));
  const auto x = input_features<double>(s.points, s.doc.width, s.doc.height);
  s.input.assign(x.values().begin(), x.values().end());
  if (s.points.labels) {
    s.targets = build_targets(*s.points.labels, s.doc.categories);
    for (const auto& l : *s.points.labels) s.ccl_labels.push_back(l.semantic.value_or(-1));
  }
  s.contrast = ContrastSets::from(s.geometry.knn_lists[0], &s.connections);
  return s;
}

template <typename T>
class SymPointModel {
 public:
  SymPointModel(const RunConfig& cfg, std::vector<Category> categories)
      : cfg_(cfg), categories_(std::move(categories)) {
    if (categories_.empty()) throw ConfigError("the category table is empty");
    cfg_.model.head.num_classes = categories_.size();
    Rng rng(derive_seed(cfg.train.seed, 0x1417, 0));
    backbone_ = Backbone<T>(params_, cfg_.model.backbone, rng);
    head_ = SpottingHead<T>(params_, cfg_.model.head, cfg_.model.backbone.channels, rng);
  }
  SymPointModel(const SymPointModel&) = delete;
  SymPointModel& operator=(const SymPointModel&) = delete;

  const RunConfig& config() const { return cfg_; }
  const std::vector<Category>& categories() const { return categories_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const Backbone<T>& backbone() const { return backbone_; }
  const SpottingHead<T>& head() const { return head_; }

  struct Output {
    FeaturePyramid<T> pyramid;
    HeadOutput<T> head;
  };

  Output forward(const Sample& s, const HeadRunOptions& opt = {}) const {
    Output o;
    o.pyramid = backbone_.forward(s.geometry, nn::constant<T>({s.points.size(), 8}, s.input));
    o.head = head_.forward(o.pyramid, opt);
    return o;
  }

  std::pair<Tensor<T>, LossBreakdown> loss(const Sample& s, const Output& o) const {
    LossWeights w = cfg_.train.weights;
    if (!cfg_.ablation.use_ccl) w.ccl = 0.0;
    return spotting_loss(o.head, s.targets, o.pyramid.features[0], &s.contrast, s.ccl_labels, w, cfg_.ablation.ccl_tau);
  }

  PanopticPrediction predict(const Sample& s) const {
    NoGradGuard guard;
    const auto o = forward(s);
    return assemble_panoptic(class_probabilities(o.head.final_classes()), mask_probabilities(o.head.final_masks()),
                             cfg_.model.head.num_queries, s.points.size(), categories_, s.doc.id,
                             cfg_.model.head.mask_threshold);
  }

 private:
  RunConfig cfg_;
  std::vector<Category> categories_;
  ParamStore<T> params_;
  Backbone<T> backbone_;
  SpottingHead<T> head_;
};

using TrainScalar = float;

struct LossRow {
  std::size_t epoch = 0;
  LossBreakdown mean;
};

inline std::string loss_csv(const std::vector<LossRow>& rows) {
  std::string out = "epoch,bce,dice,cls,ccl,total\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.mean.bce, r.mean.dice, r.mean.cls,
                  r.mean.ccl, r.mean.total);
    out += buf;
  }
  return out;
}

inline std::string loss_plot(const std::vector<LossRow>& rows) {
  std::vector<PlotSeries> s{{"bce", {}}, {"dice", {}}, {"cls", {}}, {"ccl", {}}, {"total", {}}};
  for (const auto& r : rows) {
    s[0].values.push_back(r.mean.bce);
    s[1].values.push_back(r.mean.dice);
    s[2].values.push_back(r.mean.cls);
    s[3].values.push_back(r.mean.ccl);
    s[4].values.push_back(r.mean.total);
  }
  return svg_line_chart("training loss", "epoch", s);
}

struct TrainOptions {
  /// Checkpoint stem to resume from (empty: fresh start).
  std::string resume;
  /// Stop after this epoch even if the config asks for more (0: no limit).
  std::size_t stop_after = 0;
  std::function<void(const LossRow&)> on_epoch;
};

struct TrainResult {
  std::vector<LossRow> log;
  fs::path checkpoint;  // stem of the final checkpoint
};

inline nlohmann::json checkpoint_extra(const RunConfig& cfg, const std::vector<Category>& cats, std::size_t epoch,
                                       const std::vector<LossRow>& log) {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["config_hash"] = model_hash(cfg, cats.size());
  nlohmann::json kv = nlohmann::json::object();
  for (const auto& [k, v] : config_entries(cfg)) kv[k] = v;
  j["config"] = kv;
  auto jc = nlohmann::json::array();
  for (const auto& c : cats) jc.push_back(category_json(c));
  j["categories"] = jc;
  // Per-epoch randomness is derived from (seed, epoch, document), so the
  // seed and the next epoch fully determine the continuation.
  j["rng"] = {{"seed", cfg.train.seed}, {"next_epoch", epoch + 1}};
  auto jl = nlohmann::json::array();
  for (const auto& r : log)
    jl.push_back({r.epoch, r.mean.bce, r.mean.dice, r.mean.cls, r.mean.ccl, r.mean.total});
  j["loss_log"] = jl;
  return j;
}

/// Rebuilds the run configuration and category table stored in a checkpoint.
inline std::pair<RunConfig, std::vector<Category>> checkpoint_config(const fs::path& stem) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(fs::path(stem.string() + ".json")));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint manifest " + stem.string() + ".json is not valid JSON: " + e.what());
  }
  RunConfig cfg;
  apply_profile(cfg.model, j.at("config").at("model.profile").get<std::string>());
  for (const auto& [k, v] : j.at("config").items())
    if (k != "model.profile") set_config_value(cfg, k, v.get<std::string>());
  std::vector<Category> cats;
  for (const auto& c : j.at("categories"))
    cats.push_back({c.at("id").get<int>(), c.at("name").get<std::string>(), c.at("is_thing").get<bool>(),
                    c.at("color").get<std::string>()});
  return {cfg, cats};
}

inline std::string epoch_stem(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "checkpoint-%04zu", epoch);
  return buf;
}

/// Samples for the documents; fixed per-document seeds so that geometry is
/// identical across epochs and runs.
inline std::vector<Sample> prepare_samples(const std::vector<Document>& docs, const ModelConfig& m, std::uint64_t seed,
                                           std::size_t threads = 1) {
  std::vector<Sample> out(docs.size());
  parallel_for(docs.size(), threads, [&](std::size_t i) { out[i] = prepare_sample(docs[i], m, derive_seed(seed, 0xda7a, i)); });
  return out;
}

/// Single-threaded training loop. Writes `<out>/checkpoint-NNNN.*` at the
/// configured cadence, `<out>/model.*` at the end, plus loss.csv and loss.svg.
inline TrainResult train(const std::vector<Document>& docs, const RunConfig& cfg, const fs::path& out_dir,
                         const TrainOptions& opt = {}) {
  validate_config(cfg);
  for (const auto& d : docs)
    if (!d.annotated) throw DocumentError(d.id + ": training documents must be annotated");
  SymPointModel<TrainScalar> model(cfg, docs.front().categories);
  AdamWState<TrainScalar> adam;
  TrainResult res;
  std::size_t first_epoch = 1;
  if (!opt.resume.empty()) {
    const auto manifest = load_checkpoint(fs::path(opt.resume), model.params(), &adam);
    if (manifest.at("config_hash").get<std::string>() != model_hash(cfg, docs.front().categories.size()))
      throw ConfigError("checkpoint " + opt.resume + " was trained with a different model configuration");
    first_epoch = manifest.at("epoch").get<std::size_t>() + 1;
    for (const auto& r : manifest.at("loss_log"))
      res.log.push_back({r[0].get<std::size_t>(), {r[1], r[2], r[3], r[4], r[5]}});
  }
  const std::vector<Sample> fixed = cfg.augment ? std::vector<Sample>{} : prepare_samples(docs, cfg.model, cfg.train.seed);
  const std::size_t n = docs.size();
  std::size_t last = cfg.train.epochs;
  if (opt.stop_after) last = std::min(last, opt.stop_after);
  for (std::size_t epoch = first_epoch; epoch <= last; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(cfg.train.seed, 0xe90c, epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.below(i))]);
    LossBreakdown sum;
    std::size_t counted = 0;
    for (std::size_t b = 0; b < n; b += cfg.train.batch_size) {
      const std::size_t end = std::min(n, b + cfg.train.batch_size);
      model.params().zero_grad();
      for (std::size_t k = b; k < end; ++k) {
        const std::size_t idx = order[k];
        Sample aug;
        const Sample* s = nullptr;
        if (cfg.augment) {
          const auto seed = derive_seed(cfg.train.seed, epoch, idx);
          aug = prepare_sample(augment(docs[idx], cfg.augmentation, seed), cfg.model, derive_seed(cfg.train.seed, 0xda7a, idx));
          s = &aug;
        } else {
          s = &fixed[idx];
        }
        const auto out = model.forward(*s);
        std::pair<Tensor<TrainScalar>, LossBreakdown> l;
        try {
          l = model.loss(*s, out);
        } catch (const NonFiniteError& e) {
          if (cfg.train.nonfinite == NonFinitePolicy::skip) continue;
          throw NonFiniteError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(b / cfg.train.batch_size) + ", document " + docs[idx].id + ")");
        }
        scale(l.first, TrainScalar(1.0 / double(end - b))).backward();
        sum.bce += l.second.bce;
        sum.dice += l.second.dice;
        sum.cls += l.second.cls;
        sum.ccl += l.second.ccl;
        sum.total += l.second.total;
        ++counted;
      }
      if (cfg.train.grad_clip > 0) clip_grad_norm(model.params(), cfg.train.grad_clip);
      try {
        adamw_step(model.params(), cfg.train.optimizer, adam, cfg.train.nonfinite);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b / cfg.train.batch_size) + ")");
      }
    }
    const double c = double(std::max<std::size_t>(counted, 1));
    LossRow row{epoch, {sum.bce / c, sum.dice / c, sum.cls / c, sum.ccl / c, sum.total / c}};
    res.log.push_back(row);
    if (opt.on_epoch) opt.on_epoch(row);
    if (cfg.train.checkpoint_every && epoch % cfg.train.checkpoint_every == 0 && epoch != last) {
      save_checkpoint(out_dir / epoch_stem(epoch), model.params(), &adam, checkpoint_extra(cfg, model.categories(), epoch, res.log));
    }
  }
  const std::size_t final_epoch = res.log.empty() ? 0 : res.log.back().epoch;
  if (cfg.train.checkpoint_every && final_epoch % cfg.train.checkpoint_every == 0 && final_epoch)
    save_checkpoint(out_dir / epoch_stem(final_epoch), model.params(), &adam,
                    checkpoint_extra(cfg, model.categories(), final_epoch, res.log));
  res.checkpoint = out_dir / "model";
  save_checkpoint(res.checkpoint, model.params(), &adam, checkpoint_extra(cfg, model.categories(), final_epoch, res.log));
  write_file_atomic(out_dir / "loss.csv", loss_csv(res.log));
  write_file_atomic(out_dir / "loss.svg", loss_plot(res.log));
  return res;
}

/// Loads a trained model from a checkpoint stem.
inline std::unique_ptr<SymPointModel<TrainScalar>> load_model(const fs::path& stem) {
  auto [cfg, cats] = checkpoint_config(stem);
  auto model = std::make_unique<SymPointModel<TrainScalar>>(cfg, cats);
  const auto manifest = load_checkpoint<TrainScalar>(stem, model->params(), nullptr);
  if (manifest.at("config_hash").get<std::string>() != model_hash(cfg, cats.size()))
    throw ConfigError("checkpoint " + stem.string() + " does not match its recorded configuration");
  return model;
}

struct Evaluation {
  std::vector<PanopticPrediction> predictions;
  std::vector<DocumentScore> per_document;
  DocumentScore total;
  nlohmann::json report;
};

/// Predicts every document (in parallel across documents) and pools the
/// scores in document order.
template <typename T>
Evaluation evaluate(const SymPointModel<T>& model, const std::vector<Document>& docs, std::size_t threads = 1) {
  for (const auto& d : docs) {
    if (d.categories != model.categories())
      throw ConfigError(d.id + ": category table differs from the checkpoint's");
  }
  Evaluation ev;
  ev.predictions.resize(docs.size());
  ev.per_document.resize(docs.size());
  parallel_for(docs.size(), threads, [&](std::size_t i) {
    const auto s = prepare_sample(docs[i], model.config().model, derive_seed(model.config().train.seed, 0xda7a, i));
    ev.predictions[i] = model.predict(s);
    if (docs[i].annotated) ev.per_document[i] = score_document(docs[i], ev.predictions[i]);
  });
  ev.total = aggregate_scores(ev.per_document);
  ev.report = metrics_report(ev.total, model.categories(), docs.size());
  return ev;
}

/// Writes pred/<id>.json for each document and metrics.json (+ a per-class
/// PQ bar chart) under out_dir.
inline void write_evaluation(const Evaluation& ev, const std::vector<Category>& cats, const fs::path& out_dir) {
  for (const auto& p : ev.predictions) write_file_atomic(out_dir / "pred" / (p.id + ".json"), serialize_prediction(p));
  write_file_atomic(out_dir / "metrics.json", ev.report.dump(2) + "\n");
  std::vector<std::string> names;
  std::vector<double> pq;
  for (const auto& c : ev.report.at("per_class")) {
    names.push_back(c.at("name").get<std::string>());
    pq.push_back(c.at("PQ").get<double>());
  }
  (void)cats;
  write_file_atomic(out_dir / "per_class_pq.svg", svg_bar_chart("per-class PQ", names, pq));
}

enum class AblationAxis { acm, ccl, downsample };

inline AblationAxis parse_axis(const std::string& s) {
  if (s == "acm") return AblationAxis::acm;
  if (s == "ccl") return AblationAxis::ccl;
  if (s == "downsample") return AblationAxis::downsample;
  throw ConfigError("unknown ablation axis '" + s + "' (expected acm, ccl, or downsample)");
}

struct AblationVariant {
  std::string name;
  RunConfig cfg;
};

/// acm and ccl both expand to the 2 x 2 grid over (use_acm, use_ccl);
/// downsample enumerates the four mask downsampling modes.
inline std::vector<AblationVariant> ablation_variants(const RunConfig& base, AblationAxis axis) {
  std::vector<AblationVariant> out;
  if (axis == AblationAxis::downsample) {
    for (auto m : {DownsampleMode::knn_interp, DownsampleMode::knn_max, DownsampleMode::knn_avg,
                   DownsampleMode::bilinear_surrogate}) {
      RunConfig c = base;
      c.model.head.downsample = m;
      out.push_back({downsample_name(m), c});
    }
    return out;
  }
  for (bool acm : {false, true}) {
    for (bool ccl : {false, true}) {
      RunConfig c = base;
      c.model.backbone.use_acm = acm;
      c.ablation.use_ccl = ccl;
      std::string name = acm ? (ccl ? "acm+ccl" : "acm") : (ccl ? "ccl" : "baseline");
      out.push_back({name, c});
    }
  }
  return out;
}

struct AblationRow {
  std::string variant;
  RunConfig cfg;
  PanopticScore score;
};

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,use_acm,use_ccl,downsample,PQ,SQ,RQ\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%.9g,%.9g,%.9g\n", r.variant.c_str(),
                  r.cfg.model.backbone.use_acm ? "true" : "false", r.cfg.ablation.use_ccl ? "true" : "false",
                  downsample_name(r.cfg.model.head.downsample), r.score.pq, r.score.sq, r.score.rq);
    out += buf;
  }
  return out;
}

/// Trains every variant from the same seed and scores it on `eval_docs`.
/// Variants run on separate threads (each single-threaded) when allowed.
inline std::vector<AblationRow> ablate(const std::vector<Document>& train_docs, const std::vector<Document>& eval_docs,
                                       const std::vector<AblationVariant>& variants, const fs::path& out_dir,
                                       std::size_t threads = 1) {
  std::vector<AblationRow> rows(variants.size());
  parallel_for(variants.size(), threads, [&](std::size_t i) {
    const auto& v = variants[i];
    const auto res = train(train_docs, v.cfg, out_dir / v.name);
    const auto model = load_model(res.checkpoint);
    const auto ev = evaluate(*model, eval_docs);
    rows[i] = {v.name, v.cfg, score_from_counts(ev.total.overall)};
  });
  write_file_atomic(out_dir / "ablation.csv", ablation_csv(rows));
  return rows;
}

}  // namespace sympoint
