// SPDX-License-Identifier: Apache-2.0
#include "gradekit/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "gradekit/combine.hpp"
#include "gradekit/core.hpp"
#include "gradekit/ensemble.hpp"
#include "gradekit/errors.hpp"
#include "gradekit/format.hpp"
#include "gradekit/metrics.hpp"
#include "gradekit/optim.hpp"
#include "gradekit/synth.hpp"

namespace gradekit::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config;
  std::string out = ".";
  bool clip = false;
};

/// Accumulates what a command read and wrote for the run manifest.
class RunRecord {
 public:
  RunRecord(std::string command, std::span<const std::string> args)
      : command_(std::move(command)), args_(args.begin(), args.end()) {}

  void input(const fs::path& path) {
    if (fs::is_directory(path)) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::recursive_directory_iterator(path))
        if (entry.is_regular_file()) files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) input(f);
      return;
    }
    inputs_[path.generic_string()] = sha256_hex(read_file(path));
  }

  void output(const fs::path& path, std::string_view content) {
    write_file(path, content);
    outputs_.push_back(path.generic_string());
  }

  void produced(const fs::path& path) { outputs_.push_back(path.generic_string()); }

  void note(const std::string& key, ordered_json value) { extra_[key] = std::move(value); }

  void write_manifest(const fs::path& out_dir, const GlobalOptions& g) const {
    const fs::path path = out_dir / "manifest.json";
    ordered_json manifest;
    if (fs::exists(path)) {
      try {
        manifest = ordered_json::parse(read_file(path));
      } catch (const ordered_json::exception&) {
        spdlog::warn("replacing unreadable manifest {}", path.string());
        manifest = ordered_json::object();
      }
    }
    if (!manifest.is_object() || !manifest.contains("runs")) manifest["runs"] = ordered_json::array();

    ordered_json run;
    run["command"] = command_;
    run["args"] = args_;
    run["seed"] = g.seed;
    if (!g.config.empty()) run["config_file"] = g.config;
    run["clip"] = g.clip;
    run["inputs"] = inputs_;
    run["outputs"] = outputs_;
    for (const auto& [k, v] : extra_.items()) run[k] = v;
    const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    run["timestamp"] = fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
    manifest["runs"].push_back(std::move(run));
    write_file(path, manifest.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
  ordered_json extra_ = ordered_json::object();
};

Split split_from_path(const fs::path& path) {
  try {
    return parse_split(path.stem().string());
  } catch (const ParseError&) {
    return Split::Test;
  }
}

/// A split argument is either an existing file or a split name resolved
/// inside `data_dir`.
fs::path resolve_split(const std::string& value, const fs::path& data_dir) {
  if (fs::is_regular_file(value)) return value;
  fs::path candidate = data_dir / (value + ".jsonl");
  if (fs::is_regular_file(candidate)) return candidate;
  throw DataError("cannot find dataset '" + value + "' (tried " + candidate.string() + ")");
}

unsigned worker_cap() {
  unsigned cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GRADEKIT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) cap = std::min<unsigned>(cap, static_cast<unsigned>(v));
    } catch (const std::exception&) {
      spdlog::warn("ignoring invalid GRADEKIT_THREADS='{}'", env);
    }
  }
  return cap;
}

Grade maybe_clip(Grade score, bool clip) {
  return clip ? std::clamp(score, kMinGrade, kMaxGrade) : score;
}

std::map<PartId, GraderEnsemble> load_models(const fs::path& dir, RunRecord& record) {
  std::map<PartId, GraderEnsemble> models;
  for (PartId part : kAllParts) {
    const fs::path sub = dir / std::string(to_string(part));
    if (!fs::exists(sub / "manifest.json")) continue;
    record.input(sub);
    GraderEnsemble ensemble = load_ensemble(sub);
    if (ensemble.part != part)
      throw DataError("ensemble in " + sub.string() + " is for part " +
                      std::string(to_string(ensemble.part)));
    models.emplace(part, std::move(ensemble));
  }
  if (models.empty()) throw DataError("no trained part models under " + dir.string());
  return models;
}

PredictionTable predict_table(const std::map<PartId, GraderEnsemble>& models, const Dataset& data,
                              const std::string& grader, bool clip) {
  PredictionTable table;
  for (const auto& sub : data.submissions) {
    std::array<Grade, kNumParts> parts{};
    std::size_t scored = 0;
    for (PartId part : kAllParts) {
      auto it = models.find(part);
      if (it == models.end() || !sub.has_part(part)) continue;
      const Grade score = maybe_clip(predict_part(it->second, sub), clip);
      parts[index_of(part)] = score;
      table.push_back({sub.speaker_id, part, grader, score});
      ++scored;
    }
    if (scored == kNumParts) table.push_back({sub.speaker_id, std::nullopt, grader, overall_grade(parts)});
  }
  return table;
}

struct Evaluation {
  std::vector<std::pair<std::string, MetricsReport>> levels;
  std::vector<std::pair<std::string, std::vector<ScatterPoint>>> scatter;
};

/// Metrics per part (and overall) for predictions of speakers present in
/// `data`. Each level uses the speakers with both a prediction and a
/// reference at that level.
Evaluation evaluate_table(const PredictionTable& table, const Dataset& data) {
  std::map<int, std::vector<ScatterPoint>> by_level;  // 0..4 parts, 5 overall
  for (const auto& rec : table) {
    const Submission* sub = data.find(rec.speaker);
    if (!sub) continue;
    std::optional<Grade> ref;
    if (rec.part) {
      auto it = sub->ref_part_grades.find(*rec.part);
      if (it != sub->ref_part_grades.end()) ref = it->second;
    } else {
      ref = sub->ref_overall;
    }
    if (!ref) continue;
    const int level = rec.part ? static_cast<int>(index_of(*rec.part)) : static_cast<int>(kNumParts);
    by_level[level].push_back({rec.speaker, *ref, rec.score});
  }
  if (by_level.empty()) throw EmptyJoin("no prediction matches a reference in the dataset");
  Evaluation eval;
  for (auto& [level, points] : by_level) {
    const std::string label =
        level < static_cast<int>(kNumParts) ? std::string(to_string(kAllParts[level])) : "overall";
    std::vector<Grade> pred, ref;
    for (const auto& p : points) {
      pred.push_back(p.pred);
      ref.push_back(p.ref);
    }
    eval.levels.emplace_back(label, report(pred, ref));
    eval.scatter.emplace_back(label, std::move(points));
  }
  return eval;
}

void write_evaluation(const Evaluation& eval, const fs::path& out_dir, const std::string& name,
                      const std::string& grader, RunRecord& record) {
  std::string json = "{\"grader\": " + nlohmann::json(grader).dump() + ",\n \"metrics\": {";
  std::vector<LabelledReport> rows;
  for (std::size_t i = 0; i < eval.levels.size(); ++i) {
    const auto& [label, m] = eval.levels[i];
    json += i ? ",\n  " : "\n  ";
    json += "\"" + label + "\": " + serialize_report(m);
    rows.push_back({grader + " " + label, m});
  }
  json += "\n }}\n";
  record.output(out_dir / (name + ".metrics.json"), json);
  record.output(out_dir / (name + ".metrics.md"), render_metrics_table(rows));
  for (const auto& [label, points] : eval.scatter)
    record.output(out_dir / (name + ".scatter_" + label + ".csv"), render_scatter_csv(points));
  std::cout << render_metrics_table(rows);
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  SynthSpec spec;
  int graders = 0;
};

void cmd_synth(const GlobalOptions& g, SynthOptions opts, RunRecord& record) {
  opts.spec.seed = g.seed;
  const fs::path out(g.out);
  auto write_split = [&](const Dataset& d) {
    record.output(out / (std::string(to_string(d.split)) + ".jsonl"), serialize_dataset(d));
  };
  SynthData data;
  if (opts.graders >= 2) {
    GraderViews views = generate_grader_views(opts.spec, opts.graders);
    for (const auto& table : views.graders)
      record.output(out / "views" / (table.front().grader + ".csv"), serialize_predictions(table));
    data = std::move(views.data);
  } else if (opts.graders == 1) {
    throw DataError("--graders needs at least 2 graders (or 0 for none)");
  } else {
    data = generate(opts.spec);
  }
  write_split(data.train);
  write_split(data.calibration);
  write_split(data.test);
  record.note("synth", {{"n_train", opts.spec.n_train},
                        {"n_calibration", opts.spec.n_calibration},
                        {"n_test", opts.spec.n_test},
                        {"embedding_dim", opts.spec.embedding_dim},
                        {"frames", {opts.spec.frames_min, opts.spec.frames_max}},
                        {"sigma_part", opts.spec.sigma_part},
                        {"sigma_frame", opts.spec.sigma_frame},
                        {"graders", opts.graders},
                        {"view_sigmas", opts.spec.view_sigmas}});
  std::cout << fmt::format("wrote {} / {} / {} speakers to {}\n", data.train.submissions.size(),
                           data.calibration.submissions.size(), data.test.submissions.size(),
                           out.string());
}

struct TrainOverrides {
  std::string part;
  std::string data;
  int members = kDefaultEnsembleSize;
  std::optional<std::string> arch, activation;
  std::optional<int> batch_size, accum, epochs;
  std::optional<double> dropout, lr, weight_decay;
  std::optional<Eigen::Index> hidden_width, bottleneck_width;
};

void cmd_train(const GlobalOptions& g, const TrainOverrides& o, RunRecord& record) {
  const PartId part = parse_part(o.part);
  TrainConfig cfg = canonical_config(part);
  if (!g.config.empty()) {
    record.input(g.config);
    cfg = parse_config(read_file(g.config), cfg);
    cfg.part = part;
  }
  if (o.arch) cfg.architecture_kind = parse_head_kind(*o.arch);
  if (o.activation) cfg.activation = parse_activation(*o.activation);
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.accum) cfg.grad_accum_steps = *o.accum;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.dropout) cfg.dropout_rate = *o.dropout;
  if (o.lr) cfg.learning_rate = *o.lr;
  if (o.weight_decay) cfg.weight_decay = *o.weight_decay;
  if (o.hidden_width) cfg.hidden_width = *o.hidden_width;
  if (o.bottleneck_width) cfg.bottleneck_width = *o.bottleneck_width;
  if (g.seed_given || g.config.empty()) cfg.seed = g.seed;
  cfg.check();

  const fs::path out(g.out);
  const fs::path data_path = o.data.empty() ? out / "train.jsonl" : fs::path(o.data);
  record.input(data_path);
  const Dataset data = load_dataset(data_path, Split::Train);

  const unsigned threads = std::min<unsigned>(worker_cap(), static_cast<unsigned>(o.members));
  spdlog::info("training {} x {} head(s) for {} on {} responses ({} thread(s))", o.members,
               to_string(cfg.architecture_kind), to_string(part), data.count_responses(part),
               threads);
  GraderEnsemble ensemble = train_ensemble(data, cfg, o.members, cfg.seed, threads);

  const fs::path model_dir = out / "models" / std::string(to_string(part));
  save_ensemble(ensemble, model_dir);
  for (const auto& entry : fs::directory_iterator(model_dir))
    if (entry.path().extension() == ".json") record.produced(entry.path());
  record.output(model_dir / "config.json", serialize_config(cfg));
  record.note("config", ordered_json::parse(serialize_config(cfg)));
  std::cout << fmt::format("saved {}-member ensemble for {} to {}\n", ensemble.members.size(),
                           to_string(part), model_dir.string());
}

struct PredictOptions {
  std::string data, models, grader = "wv", output;
};

void cmd_predict(const GlobalOptions& g, const PredictOptions& o, RunRecord& record) {
  const fs::path out(g.out);
  const fs::path data_path = o.data.empty() ? out / "test.jsonl" : fs::path(o.data);
  record.input(data_path);
  const Dataset data = load_dataset(data_path, split_from_path(data_path));
  const auto models = load_models(o.models.empty() ? out / "models" : fs::path(o.models), record);
  const PredictionTable table = predict_table(models, data, o.grader, g.clip);
  const fs::path target = o.output.empty()
                              ? out / "predictions" / (o.grader + "_" + data_path.stem().string() + ".csv")
                              : fs::path(o.output);
  record.output(target, serialize_predictions(table));
  std::cout << fmt::format("wrote {} predictions to {}\n", table.size(), target.string());
}

struct EvaluateOptions {
  std::string pred, data, models, grader = "wv", name = "eval";
};

void cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o, RunRecord& record) {
  const fs::path out(g.out);
  const fs::path data_path = o.data.empty() ? out / "test.jsonl" : fs::path(o.data);
  record.input(data_path);
  const Dataset data = load_dataset(data_path, split_from_path(data_path));
  PredictionTable table;
  std::string grader = o.grader;
  if (!o.pred.empty()) {
    record.input(o.pred);
    table = load_predictions(o.pred);
    if (g.clip)
      for (auto& r : table) r.score = maybe_clip(r.score, true);
    if (!table.empty()) grader = table.front().grader;
  } else {
    const auto models = load_models(o.models.empty() ? out / "models" : fs::path(o.models), record);
    table = predict_table(models, data, grader, g.clip);
  }
  write_evaluation(evaluate_table(table, data), out, o.name, grader, record);
}

struct CombineOptions {
  std::vector<std::string> graders;
  std::string fit = "calibration";
  std::string eval;
  std::string data_dir;
  std::string name;
  std::string level = "part";
  bool equal_weight = false;
};

void cmd_combine(const GlobalOptions& g, const CombineOptions& o, RunRecord& record,
                 bool single_grader) {
  const fs::path out(g.out);
  const fs::path data_dir = o.data_dir.empty() ? out : fs::path(o.data_dir);
  if (o.level != "part" && o.level != "submission")
    throw DataError("--level must be 'part' or 'submission'");
  const bool submission_level = o.level == "submission";

  std::vector<PredictionTable> tables;
  std::set<std::string> grader_names;
  for (const auto& path : o.graders) {
    record.input(path);
    PredictionTable table = load_predictions(path);
    std::erase_if(table, [&](const PredictionRecord& r) {
      return submission_level ? r.part.has_value() : !r.part.has_value();
    });
    for (auto& r : table) {
      r.score = maybe_clip(r.score, g.clip);
      grader_names.insert(r.grader);
    }
    tables.push_back(std::move(table));
  }
  if (single_grader && grader_names.size() != 1)
    throw DataError("calibrate expects predictions from exactly one grader");

  const fs::path fit_path = resolve_split(o.fit, data_dir);
  record.input(fit_path);
  const Dataset fit_data = load_dataset(fit_path, split_from_path(fit_path));
  const PredictionMatrix fit_matrix = build_matrix(tables, fit_data);
  if (!fit_matrix.dropped_speakers.empty())
    spdlog::info("{} speaker(s) not in the fitting join", fit_matrix.dropped_speakers.size());

  CombinationModel model = o.equal_weight ? CombinationModel::equal_weight(fit_matrix.columns)
                                          : fit_ols(fit_matrix);
  if (model.regularized) spdlog::warn("collinear predictors: ridge fallback applied");

  std::string name = o.name;
  if (name.empty()) name = single_grader ? "calibrated_" + *grader_names.begin() : "combined";
  record.output(out / (name + ".model.json"), serialize_model(model));
  const std::string table_md = render_coefficient_table(model);
  record.output(out / (name + ".coefficients.md"), table_md);
  std::cout << table_md;

  if (!o.eval.empty()) {
    const fs::path eval_path = resolve_split(o.eval, data_dir);
    record.input(eval_path);
    const Dataset eval_data = load_dataset(eval_path, split_from_path(eval_path));
    const PredictionMatrix eval_matrix = build_matrix(tables, eval_data);
    const Eigen::VectorXd combined = apply(model, eval_matrix);
    PredictionTable table;
    for (Eigen::Index i = 0; i < combined.size(); ++i)
      table.push_back({eval_matrix.speakers[static_cast<std::size_t>(i)], std::nullopt, name,
                       maybe_clip(combined(i), g.clip)});
    record.output(out / "predictions" / (name + "_" + eval_path.stem().string() + ".csv"),
                  serialize_predictions(table));
    write_evaluation(evaluate_table(table, eval_data), out, name, name, record);
  }
}

void cmd_report(const GlobalOptions& g, RunRecord& record) {
  const fs::path out(g.out);
  std::vector<fs::path> metric_files, model_files;
  for (const auto& entry : fs::directory_iterator(out)) {
    const std::string fname = entry.path().filename().string();
    if (fname.ends_with(".metrics.json")) metric_files.push_back(entry.path());
    if (fname.ends_with(".model.json")) model_files.push_back(entry.path());
  }
  std::sort(metric_files.begin(), metric_files.end());
  std::sort(model_files.begin(), model_files.end());
  if (metric_files.empty() && model_files.empty())
    throw DataError("nothing to report in " + out.string());

  std::vector<LabelledReport> part_rows, overall_rows;
  for (const auto& path : metric_files) {
    record.input(path);
    ordered_json doc;
    try {
      doc = ordered_json::parse(read_file(path));
    } catch (const ordered_json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    const std::string run = path.filename().string().substr(
        0, path.filename().string().size() - std::string(".metrics.json").size());
    if (!doc.contains("metrics") || !doc["metrics"].is_object())
      throw ParseError(path.string() + ": missing 'metrics'");
    for (const auto& [label, value] : doc["metrics"].items()) {
      LabelledReport row{run + " " + label, parse_report(value.dump())};
      (label == "overall" ? overall_rows : part_rows).push_back(std::move(row));
    }
  }
  std::string md = "# Grading report\n";
  if (!part_rows.empty()) md += "\n## Part level\n\n" + render_metrics_table(part_rows);
  if (!overall_rows.empty()) md += "\n## Submission level\n\n" + render_metrics_table(overall_rows);
  if (!model_files.empty()) {
    md += "\n## Combination coefficients\n";
    for (const auto& path : model_files) {
      record.input(path);
      md += "\n### " + path.filename().string() + "\n\n" + render_coefficient_table(load_model(path));
    }
  }
  record.output(out / "report.md", md);
  std::cout << md;
}

void set_stderr_logger() {
  auto logger = std::make_shared<spdlog::logger>("gradekit",
                                                 std::make_shared<spdlog::sinks::stderr_sink_mt>());
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(std::move(logger));
}

}  // namespace

int run(std::span<const std::string> args) {
  set_stderr_logger();
  CLI::App app{"gradekit: per-part speaking-exam graders, calibration and combination"};
  app.require_subcommand(1);
  GlobalOptions g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--config", g.config, "Training config JSON");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_flag("--clip", g.clip, "Clip emitted scores to [1, 6]");
  // Global flags may follow the subcommand.
  app.fallthrough();

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic datasets");
  synth_cmd->add_option("--train", synth.spec.n_train, "Training speakers")->capture_default_str();
  synth_cmd->add_option("--calibration", synth.spec.n_calibration, "Calibration speakers")
      ->capture_default_str();
  synth_cmd->add_option("--test", synth.spec.n_test, "Test speakers")->capture_default_str();
  synth_cmd->add_option("--dim", synth.spec.embedding_dim, "Embedding width")->capture_default_str();
  synth_cmd->add_option("--frames-min", synth.spec.frames_min)->capture_default_str();
  synth_cmd->add_option("--frames-max", synth.spec.frames_max)->capture_default_str();
  synth_cmd->add_option("--sigma-part", synth.spec.sigma_part)->capture_default_str();
  synth_cmd->add_option("--sigma-frame", synth.spec.sigma_frame)->capture_default_str();
  synth_cmd->add_option("--graders", synth.graders, "Simulated grader views to emit (0 or >= 2)")
      ->capture_default_str();
  synth_cmd->add_option("--view-sigma", synth.spec.view_sigmas, "Noise per simulated grader");

  TrainOverrides train_o;
  auto* train_cmd = app.add_subcommand("train", "Train a part ensemble");
  train_cmd->add_option("--part", train_o.part, "P1..P5")->required();
  train_cmd->add_option("--data", train_o.data, "Training JSONL (default <out>/train.jsonl)");
  train_cmd->add_option("--members", train_o.members, "Ensemble size")->capture_default_str()
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--arch", train_o.arch, "Shallow or Deep");
  train_cmd->add_option("--activation", train_o.activation, "relu, tanh or gelu");
  train_cmd->add_option("--batch-size", train_o.batch_size);
  train_cmd->add_option("--accum", train_o.accum, "Gradient accumulation steps");
  train_cmd->add_option("--epochs", train_o.epochs);
  train_cmd->add_option("--dropout", train_o.dropout);
  train_cmd->add_option("--lr", train_o.lr);
  train_cmd->add_option("--weight-decay", train_o.weight_decay);
  train_cmd->add_option("--hidden-width", train_o.hidden_width);
  train_cmd->add_option("--bottleneck-width", train_o.bottleneck_width);

  PredictOptions predict_o;
  auto* predict_cmd = app.add_subcommand("predict", "Score a dataset with trained ensembles");
  predict_cmd->add_option("--data", predict_o.data, "Dataset JSONL (default <out>/test.jsonl)");
  predict_cmd->add_option("--models", predict_o.models, "Model directory (default <out>/models)");
  predict_cmd->add_option("--grader", predict_o.grader, "Grader name")->capture_default_str();
  predict_cmd->add_option("--output", predict_o.output, "Predictions CSV path");

  EvaluateOptions eval_o;
  auto* eval_cmd = app.add_subcommand("evaluate", "Compute metrics for predictions");
  eval_cmd->add_option("--pred", eval_o.pred, "Predictions CSV (default: score with <out>/models)");
  eval_cmd->add_option("--data", eval_o.data, "Reference JSONL (default <out>/test.jsonl)");
  eval_cmd->add_option("--models", eval_o.models, "Model directory (default <out>/models)");
  eval_cmd->add_option("--grader", eval_o.grader, "Grader name")->capture_default_str();
  eval_cmd->add_option("--name", eval_o.name, "Output file prefix")->capture_default_str();

  CombineOptions calib_o, combine_o;
  auto add_combine_options = [](CLI::App* cmd, CombineOptions& o) {
    cmd->add_option("--fit", o.fit, "Fitting split name or JSONL path")->capture_default_str();
    cmd->add_option("--eval", o.eval, "Evaluation split name or JSONL path");
    cmd->add_option("--data-dir", o.data_dir, "Where split names resolve (default <out>)");
    cmd->add_option("--name", o.name, "Output file prefix");
    cmd->add_option("--level", o.level, "part or submission")->capture_default_str();
    cmd->add_flag("--equal-weight", o.equal_weight, "Use equal weights instead of OLS");
  };
  auto* calib_cmd = app.add_subcommand("calibrate", "Per-part OLS calibration of one grader");
  calib_cmd->add_option("--pred", calib_o.graders, "Predictions CSV of one grader")
      ->required()->expected(1);
  add_combine_options(calib_cmd, calib_o);
  auto* combine_cmd = app.add_subcommand("combine", "Linear combination of several graders");
  combine_cmd->add_option("--graders", combine_o.graders, "Predictions CSVs")->required();
  add_combine_options(combine_cmd, combine_o);

  auto* report_cmd = app.add_subcommand("report", "Collect metrics and coefficients into report.md");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }
  g.seed_given = seed_opt->count() > 0;

  CLI::App* chosen = app.get_subcommands().front();
  RunRecord record(chosen->get_name(), args);
  try {
    if (chosen == synth_cmd) cmd_synth(g, synth, record);
    else if (chosen == train_cmd) cmd_train(g, train_o, record);
    else if (chosen == predict_cmd) cmd_predict(g, predict_o, record);
    else if (chosen == eval_cmd) cmd_evaluate(g, eval_o, record);
    else if (chosen == calib_cmd) cmd_combine(g, calib_o, record, true);
    else if (chosen == combine_cmd) cmd_combine(g, combine_o, record, false);
    else if (chosen == report_cmd) cmd_report(g, record);
    record.write_manifest(g.out, g);
  } catch (const NumericalError& e) {
    spdlog::error("{}", e.what());
    return kExitNumerical;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
  return kExitOk;
}

}  // namespace gradekit::cli
