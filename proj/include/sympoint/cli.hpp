#pragma once

// Command-line front end. dispatch() is the whole program minus main(), so
// tests can drive it in-process.
//
// Exit codes: 0 ok, 2 bad flags, 3 I/O, 4 validation, 5 numerical abort.
// Failures print one line "error[<category>]: <message>" to the error stream.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sympoint/config.hpp"
#include "sympoint/conngraph.hpp"
#include "sympoint/metrics.hpp"
#include "sympoint/points.hpp"
#include "sympoint/synth.hpp"
#include "sympoint/trainer.hpp"
#include "sympoint/vgio.hpp"

namespace sympoint {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitIo = 3, kExitValidation = 4, kExitNumerical = 5 };

namespace cli_detail {

/// Canonical JSON, or the SVG subset when the file ends in .svg.
inline Document read_document(const std::string& path) {
  const std::string bytes = read_file(path);
  if (fs::path(path).extension() == ".svg") return import_svg(bytes).doc;
  return parse_document(bytes);
}

inline RunConfig build_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  std::string text = config_path.empty() ? std::string() : read_file(config_path);
  for (const auto& o : overrides) {
    if (o.find('=') == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    text += "\n" + o;
  }
  return parse_config(text);
}

inline std::string config_key_help() {
  std::string out = "\nConfig keys (key = value lines, # comments; --set key=value overrides):\n";
  for (const auto& k : config_keys()) {
    std::string name = k.name;
    name.resize(std::max<std::size_t>(name.size() + 2, 28), ' ');
    out += "  " + name + k.help + "\n";
  }
  return out;
}

inline void emit(const std::string& out_path, const std::string& bytes, std::ostream& out) {
  if (out_path.empty() || out_path == "-") out << bytes;
  else write_file_atomic(out_path, bytes);
}

}  // namespace cli_detail

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"Panoptic symbol spotting on vector-graphics primitives"};
  app.name("sympoint");
  app.require_subcommand(1);
  app.footer(config_key_help());

  // synth
  std::string synth_out;
  std::size_t synth_n = 8;
  std::uint64_t synth_seed = 1;
  SynthConfig sc;
  auto* synth = app.add_subcommand("synth", "Write N synthetic annotated documents plus manifest.json");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--n", synth_n, "number of documents")->capture_default_str();
  synth->add_option("--seed", synth_seed, "master seed")->capture_default_str();
  synth->add_option("--things", sc.thing_classes, "thing classes (1-6)")->capture_default_str();
  synth->add_option("--stuff", sc.stuff_classes, "stuff classes (0-2)")->capture_default_str();
  synth->add_option("--min-symbols", sc.min_symbols, "fewest thing symbols per document")->capture_default_str();
  synth->add_option("--max-symbols", sc.max_symbols, "most thing symbols per document")->capture_default_str();
  synth->add_option("--clutter", sc.clutter, "background clutter primitives per document")->capture_default_str();
  synth->add_option("--canvas", sc.canvas, "canvas side length in px")->capture_default_str();

  // train
  std::string data_dir, out_dir, config_path, resume;
  std::vector<std::string> overrides;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a directory of annotated documents");
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--out", out_dir, "output directory for checkpoints and logs")->required();
  train_cmd->add_option("--config", config_path, "key = value config file");
  train_cmd->add_option("--set", overrides, "config override key=value (repeatable)");
  train_cmd->add_option("--resume", resume, "checkpoint stem to continue from");

  // eval
  std::string checkpoint;
  bool gt_oracle = false;
  auto* eval_cmd = app.add_subcommand("eval", "Predict a dataset and write pred/*.json plus metrics.json");
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint stem (path without .json/.bin)");
  eval_cmd->add_option("--out", out_dir, "output directory")->required();
  eval_cmd->add_flag("--gt-oracle", gt_oracle, "use ground-truth labels as predictions");

  // ablate
  std::string eval_dir, axis = "acm";
  auto* ablate_cmd = app.add_subcommand("ablate", "Train each variant of an ablation axis and tabulate PQ/SQ/RQ");
  ablate_cmd->add_option("--data", data_dir, "training dataset directory")->required();
  ablate_cmd->add_option("--eval", eval_dir, "held-out dataset directory (default: training set)");
  ablate_cmd->add_option("--axis", axis, "acm | ccl | downsample")->capture_default_str();
  ablate_cmd->add_option("--out", out_dir, "output directory")->required();
  ablate_cmd->add_option("--config", config_path, "key = value config file");
  ablate_cmd->add_option("--set", overrides, "config override key=value (repeatable)");

  // metrics
  std::string gt_dir, pred_dir, report_path;
  auto* metrics_cmd = app.add_subcommand("metrics", "Score prediction files against ground-truth documents");
  metrics_cmd->add_option("--gt", gt_dir, "directory of annotated documents")->required();
  metrics_cmd->add_option("--pred", pred_dir, "directory of <id>.json prediction files")->required();
  metrics_cmd->add_option("--out", report_path, "report path (default: stdout)");

  // predict
  std::string doc_path, pred_path, out_path;
  auto* predict_cmd = app.add_subcommand("predict", "Predict one document");
  predict_cmd->add_option("--doc", doc_path, "document (.json or .svg)")->required();
  predict_cmd->add_option("--checkpoint", checkpoint, "checkpoint stem")->required();
  predict_cmd->add_option("--out", out_path, "prediction file (default: stdout)");

  // render
  auto* render_cmd = app.add_subcommand("render", "Render a document with panoptic labels to SVG");
  render_cmd->add_option("--doc", doc_path, "document (.json or .svg)")->required();
  render_cmd->add_option("--pred", pred_path, "prediction file (default: the document's own labels)");
  render_cmd->add_option("--out", out_path, "SVG path (default: stdout)");

  // dump-points
  auto* points_cmd = app.add_subcommand("dump-points", "Print the primitive points of a document as JSON");
  points_cmd->add_option("--doc", doc_path, "document (.json or .svg)")->required();
  points_cmd->add_option("--out", out_path, "output path (default: stdout)");

  // dump-graph
  double epsilon = kDefaultEpsilon;
  std::size_t cap = kDefaultConnectionCap;
  std::uint64_t graph_seed = 1;
  auto* graph_cmd = app.add_subcommand("dump-graph", "Print the connection sets of a document as JSON");
  graph_cmd->add_option("--doc", doc_path, "document (.json or .svg)")->required();
  graph_cmd->add_option("--epsilon", epsilon, "connection threshold in px")->capture_default_str();
  graph_cmd->add_option("--cap", cap, "maximum connections per primitive")->capture_default_str();
  graph_cmd->add_option("--seed", graph_seed, "seed for random capping")->capture_default_str();
  graph_cmd->add_option("--out", out_path, "output path (default: stdout)");

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const std::size_t threads = worker_threads();
    if (synth->parsed()) {
      sc.seed = synth_seed;
      sc.validate();
      nlohmann::json manifest;
      manifest["seed"] = synth_seed;
      manifest["count"] = synth_n;
      auto cats = nlohmann::json::array();
      for (const auto& c : synth_categories(sc)) cats.push_back(category_json(c));
      manifest["categories"] = cats;
      manifest["documents"] = nlohmann::json::array();
      for (std::size_t i = 0; i < synth_n; ++i) {
        const auto r = generate_indexed(sc, i);
        const std::string file = r.doc.id + ".json";
        write_file_atomic(fs::path(synth_out) / file, serialize_document(r.doc));
        manifest["documents"].push_back(
            {{"file", file}, {"seed", derive_seed(sc.seed, 0x5e7, i)}, {"primitives", r.doc.primitives.size()}, {"warnings", r.warnings}});
      }
      write_file_atomic(fs::path(synth_out) / "manifest.json", manifest.dump(2) + "\n");
      out << "wrote " << synth_n << " documents to " << synth_out << "\n";
    } else if (train_cmd->parsed()) {
      const auto cfg = build_config(config_path, overrides);
      const auto docs = load_dataset(data_dir);
      TrainOptions opt;
      opt.resume = resume;
      opt.on_epoch = [&](const LossRow& r) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "epoch %zu total %.6f (bce %.4f dice %.4f cls %.4f ccl %.4f)\n", r.epoch,
                      r.mean.total, r.mean.bce, r.mean.dice, r.mean.cls, r.mean.ccl);
        out << buf << std::flush;
      };
      const auto res = train(docs, cfg, out_dir, opt);
      out << "checkpoint " << res.checkpoint.string() << "\n";
    } else if (eval_cmd->parsed()) {
      const auto docs = load_dataset(data_dir);
      Evaluation ev;
      std::vector<Category> cats = docs.front().categories;
      if (gt_oracle) {
        for (const auto& d : docs) {
          ev.predictions.push_back(ground_truth_labels(d));
          ev.per_document.push_back(score_document(d, ev.predictions.back()));
        }
        ev.total = aggregate_scores(ev.per_document);
        ev.report = metrics_report(ev.total, cats, docs.size());
      } else {
        if (checkpoint.empty()) throw CLI::RequiredError("--checkpoint");
        const auto model = load_model(checkpoint);
        ev = evaluate(*model, docs, threads);
      }
      write_evaluation(ev, cats, out_dir);
      out << "PQ " << ev.report.at("PQ").get<double>() << " SQ " << ev.report.at("SQ").get<double>() << " RQ "
          << ev.report.at("RQ").get<double>() << "\n";
    } else if (ablate_cmd->parsed()) {
      const auto cfg = build_config(config_path, overrides);
      const auto train_docs = load_dataset(data_dir);
      const auto eval_docs = eval_dir.empty() ? train_docs : load_dataset(eval_dir);
      const auto rows = ablate(train_docs, eval_docs, ablation_variants(cfg, parse_axis(axis)), out_dir, threads);
      out << ablation_csv(rows);
    } else if (metrics_cmd->parsed()) {
      const auto docs = load_dataset(gt_dir);
      std::vector<DocumentScore> scores;
      for (const auto& d : docs) {
        const auto pred = parse_prediction(read_file(fs::path(pred_dir) / (d.id + ".json")));
        scores.push_back(score_document(d, pred));
      }
      const auto report = metrics_report(aggregate_scores(scores), docs.front().categories, docs.size());
      emit(report_path, report.dump(2) + "\n", out);
    } else if (predict_cmd->parsed()) {
      const auto model = load_model(checkpoint);
      const auto doc = read_document(doc_path);
      if (doc.categories.empty() || doc.categories == model->categories()) {
        Document d = doc;
        d.categories = model->categories();
        const auto s = prepare_sample(d, model->config().model, derive_seed(model->config().train.seed, 0xda7a, 0));
        emit(out_path, serialize_prediction(model->predict(s)), out);
      } else {
        throw ConfigError("document category table differs from the checkpoint's");
      }
    } else if (render_cmd->parsed()) {
      const auto doc = read_document(doc_path);
      const auto pred = pred_path.empty() ? ground_truth_labels(doc) : parse_prediction(read_file(pred_path));
      emit(out_path, render_panoptic(doc, pred), out);
    } else if (points_cmd->parsed()) {
      const auto doc = read_document(doc_path);
      const auto ps = build_point_set(doc);
      nlohmann::json j;
      j["id"] = doc.id;
      j["points"] = nlohmann::json::array();
      for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto& p = ps.points[i];
        nlohmann::json e{{"index", i}, {"x", p.position.x}, {"y", p.position.y},
                         {"feature", std::vector<double>(p.feature.begin(), p.feature.end())}};
        if (ps.labels) {
          const auto& l = (*ps.labels)[i];
          e["semantic"] = l.semantic ? nlohmann::json(*l.semantic) : nlohmann::json(nullptr);
          e["instance"] = l.instance;
        }
        j["points"].push_back(e);
      }
      emit(out_path, j.dump(1) + "\n", out);
    } else if (graph_cmd->parsed()) {
      const auto doc = read_document(doc_path);
      const auto ps = build_point_set(doc);
      const auto g = build_connections(ps, doc, epsilon, cap, graph_seed);
      const auto st = connection_stats(g);
      nlohmann::json j;
      j["id"] = doc.id;
      j["epsilon"] = epsilon;
      j["cap"] = cap;
      j["connections"] = g.neighbors;
      j["degree_histogram"] = st.degree_histogram;
      j["components"] = st.components;
      j["edges"] = st.edges;
      emit(out_path, j.dump(1) + "\n", out);
    }
  } catch (const CLI::Error& e) {
    err << "error[usage]: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error[io]: " << e.what() << "\n";
    return kExitIo;
  } catch (const NonFiniteError& e) {
    err << "error[numerical]: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const TensorError& e) {
    err << "error[numerical]: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "error[io]: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error[validation]: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace sympoint
