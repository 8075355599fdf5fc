#include "gtal/experiment.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "gtal/report_io.hpp"

namespace gtal {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- configuration ----

ExperimentConfig preset_config(const std::string& scenario) {
  ExperimentConfig cfg;
  cfg.scenario = scenario;

  SynthConfig short_regime;
  short_regime.num_classes = 8;
  short_regime.feature_dim = 64;
  short_regime.videos_per_split = 120;
  short_regime.duration_median = 3.0;
  short_regime.duration_log_sigma = 0.35;
  short_regime.video_length_min = 40.0;
  short_regime.video_length_max = 80.0;
  short_regime.instances_min = 2;
  short_regime.instances_max = 6;
  short_regime.domain_offset_scale = 0.0;
  short_regime.noise_sigma = 0.2;
  short_regime.boundary_blend_width = 2.0;

  SynthConfig long_regime = short_regime;
  long_regime.duration_median = 28.5;
  long_regime.video_length_min = 60.0;
  long_regime.video_length_max = 120.0;
  long_regime.instances_min = 1;
  long_regime.instances_max = 3;

  cfg.train.learning_rate = 3e-3;
  cfg.train.epochs = 60;
  cfg.train.hidden_dim = 32;
  cfg.adapt.learning_rate = 1e-3;
  cfg.adapt.epochs = 30;
  cfg.adapt.blur_sigma = 0.3;
  cfg.adapt.lambda_cal = 0.5;
  cfg.adapt.calibration_target = CalibrationTarget::as_printed;
  cfg.inference.class_threshold = 0.12;

  if (scenario == "scale_up") {
    cfg.source = short_regime;
    cfg.target = long_regime;
    cfg.refine = {.eta = 3, .alpha = 1.4, .clamp = true};
    cfg.eval_preset = "activitynet";
    cfg.ablate_alphas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6};
  } else if (scenario == "scale_down") {
    cfg.source = long_regime;
    cfg.target = short_regime;
    cfg.refine = {.eta = 3, .alpha = 1.4, .clamp = true};
    cfg.eval_preset = "thumos14";
    cfg.ablate_alphas = {1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7};
  } else {
    throw ConfigError("unknown scenario '" + scenario + "' (expected scale_up or scale_down)");
  }
  cfg.source.distribution_id = "source";
  cfg.target.distribution_id = "target";
  cfg.source.videos_per_split = 120;
  cfg.target.videos_per_split = 120;
  cfg.resolve_seeds();
  return cfg;
}

void ExperimentConfig::resolve_seeds() {
  const std::uint64_t proto = substream_seed(seed, "prototypes");
  source.seed = substream_seed(seed, "source-distribution");
  target.seed = substream_seed(seed, "target-distribution");
  source.prototype_seed = proto;
  target.prototype_seed = proto;
  train.seed = substream_seed(seed, "train-base");
  adapt.seed = substream_seed(seed, "adapt");
}

void ExperimentConfig::validate() const {
  source.validate();
  target.validate();
  if (source.num_classes != target.num_classes || source.feature_dim != target.feature_dim)
    throw ConfigError("source and target must share num_classes and feature_dim");
  train.validate();
  refine.validate();
  adapt.validate();
  inference.validate();
  threshold_preset(eval_preset);
  if (!(diagnostic_iou > 0.0 && diagnostic_iou <= 1.0)) throw ConfigError("eval.diagnostic_iou must be in (0, 1]");
}

namespace {

json synth_to_json(const SynthConfig& s) {
  return {{"distribution_id", s.distribution_id},
          {"num_classes", s.num_classes},
          {"feature_dim", s.feature_dim},
          {"videos_per_split", s.videos_per_split},
          {"duration_median", s.duration_median},
          {"duration_log_sigma", s.duration_log_sigma},
          {"video_length_range", {s.video_length_min, s.video_length_max}},
          {"instances_per_video_range", {s.instances_min, s.instances_max}},
          {"domain_offset_scale", s.domain_offset_scale},
          {"noise_sigma", s.noise_sigma},
          {"boundary_blend_width", s.boundary_blend_width},
          {"snippet_stride", s.snippet_stride},
          {"seed", s.seed},
          {"prototype_seed", s.prototype_seed}};
}

class Reader {
 public:
  Reader(const json& j, std::string section, std::initializer_list<const char*> allowed) : j_(j), section_(std::move(section)) {
    if (!j.is_object()) throw ConfigError("config section '" + section_ + "' must be an object");
    for (const auto& [key, value] : j.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) throw ConfigError("config section '" + section_ + "': unknown key '" + key + "'");
    }
  }

  template <class T>
  void get(const char* key, T& field) const {
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config '" + section_ + "." + key + "': " + e.what());
    }
  }

  template <class T>
  void get_pair(const char* key, T& lo, T& hi) const {
    if (!j_.contains(key)) return;
    std::vector<T> v;
    get(key, v);
    if (v.size() != 2) throw ConfigError("config '" + section_ + "." + key + "' must be [min, max]");
    lo = v[0];
    hi = v[1];
  }

 private:
  const json& j_;
  std::string section_;
};

void synth_from_json(const json& j, const std::string& name, SynthConfig& s) {
  Reader r(j, name,
           {"distribution_id", "num_classes", "feature_dim", "videos_per_split", "duration_median", "duration_log_sigma",
            "video_length_range", "instances_per_video_range", "domain_offset_scale", "noise_sigma",
            "boundary_blend_width", "snippet_stride", "seed", "prototype_seed"});
  r.get("distribution_id", s.distribution_id);
  r.get("num_classes", s.num_classes);
  r.get("feature_dim", s.feature_dim);
  r.get("videos_per_split", s.videos_per_split);
  r.get("duration_median", s.duration_median);
  r.get("duration_log_sigma", s.duration_log_sigma);
  r.get_pair("video_length_range", s.video_length_min, s.video_length_max);
  r.get_pair("instances_per_video_range", s.instances_min, s.instances_max);
  r.get("domain_offset_scale", s.domain_offset_scale);
  r.get("noise_sigma", s.noise_sigma);
  r.get("boundary_blend_width", s.boundary_blend_width);
  r.get("snippet_stride", s.snippet_stride);
}

}  // namespace

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["scenario"] = cfg.scenario;
  j["seed"] = cfg.seed;
  j["source"] = synth_to_json(cfg.source);
  j["target"] = synth_to_json(cfg.target);
  const auto& t = cfg.train;
  j["train"] = {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size}, {"epochs", t.epochs},
                {"topk_ratio", t.topk_ratio},       {"dropout", t.dropout},       {"hidden_dim", t.hidden_dim},
                {"seed", t.seed}};
  j["refine"] = {{"eta", cfg.refine.eta}, {"alpha", cfg.refine.alpha}, {"clamp", cfg.refine.clamp}};
  const auto& a = cfg.adapt;
  j["adapt"] = {{"lambda_att", a.lambda_att},
                {"lambda_cas", a.lambda_cas},
                {"lambda_cal", a.lambda_cal},
                {"ema_momentum", a.ema_momentum},
                {"ema_enabled", a.ema_enabled},
                {"epochs", a.epochs},
                {"learning_rate", a.learning_rate},
                {"batch_size", a.batch_size},
                {"blur_sigma", a.blur_sigma},
                {"blur_kernel", a.blur_kernel},
                {"student_dropout", a.student_dropout},
                {"calibration_target", to_string(a.calibration_target)},
                {"seed", a.seed}};
  const auto& i = cfg.inference;
  j["inference"] = {{"class_threshold", i.class_threshold}, {"attention_thresholds", i.attention_thresholds},
                    {"nms_sigma", i.nms_sigma},             {"nms_min_score", i.nms_min_score},
                    {"outer_margin", i.outer_margin},       {"topk_ratio", i.topk_ratio}};
  j["eval"] = {{"preset", cfg.eval_preset}, {"diagnostic_iou", cfg.diagnostic_iou}};
  j["ablate_alphas"] = cfg.ablate_alphas;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  Reader top(j, "<root>",
             {"scenario", "seed", "source", "target", "train", "refine", "adapt", "inference", "eval", "ablate_alphas"});
  std::string scenario = "scale_up";
  top.get("scenario", scenario);
  ExperimentConfig cfg = preset_config(scenario);
  top.get("seed", cfg.seed);
  if (j.contains("source")) synth_from_json(j["source"], "source", cfg.source);
  if (j.contains("target")) synth_from_json(j["target"], "target", cfg.target);
  if (j.contains("train")) {
    Reader r(j["train"], "train", {"learning_rate", "batch_size", "epochs", "topk_ratio", "dropout", "hidden_dim", "seed"});
    r.get("learning_rate", cfg.train.learning_rate);
    r.get("batch_size", cfg.train.batch_size);
    r.get("epochs", cfg.train.epochs);
    r.get("topk_ratio", cfg.train.topk_ratio);
    r.get("dropout", cfg.train.dropout);
    r.get("hidden_dim", cfg.train.hidden_dim);
  }
  if (j.contains("refine")) {
    Reader r(j["refine"], "refine", {"eta", "alpha", "clamp"});
    r.get("eta", cfg.refine.eta);
    r.get("alpha", cfg.refine.alpha);
    r.get("clamp", cfg.refine.clamp);
  }
  if (j.contains("adapt")) {
    Reader r(j["adapt"], "adapt",
             {"lambda_att", "lambda_cas", "lambda_cal", "ema_momentum", "ema_enabled", "epochs", "learning_rate",
              "batch_size", "blur_sigma", "blur_kernel", "student_dropout", "calibration_target", "seed"});
    auto& a = cfg.adapt;
    r.get("lambda_att", a.lambda_att);
    r.get("lambda_cas", a.lambda_cas);
    r.get("lambda_cal", a.lambda_cal);
    r.get("ema_momentum", a.ema_momentum);
    r.get("ema_enabled", a.ema_enabled);
    r.get("epochs", a.epochs);
    r.get("learning_rate", a.learning_rate);
    r.get("batch_size", a.batch_size);
    r.get("blur_sigma", a.blur_sigma);
    r.get("blur_kernel", a.blur_kernel);
    r.get("student_dropout", a.student_dropout);
    std::string target = to_string(a.calibration_target);
    r.get("calibration_target", target);
    a.calibration_target = calibration_target_from_string(target);
  }
  if (j.contains("inference")) {
    Reader r(j["inference"], "inference",
             {"class_threshold", "attention_thresholds", "nms_sigma", "nms_min_score", "outer_margin", "topk_ratio"});
    auto& i = cfg.inference;
    r.get("class_threshold", i.class_threshold);
    r.get("attention_thresholds", i.attention_thresholds);
    r.get("nms_sigma", i.nms_sigma);
    r.get("nms_min_score", i.nms_min_score);
    r.get("outer_margin", i.outer_margin);
    r.get("topk_ratio", i.topk_ratio);
  }
  if (j.contains("eval")) {
    Reader r(j["eval"], "eval", {"preset", "diagnostic_iou"});
    r.get("preset", cfg.eval_preset);
    r.get("diagnostic_iou", cfg.diagnostic_iou);
  }
  top.get("ablate_alphas", cfg.ablate_alphas);
  cfg.resolve_seeds();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open config " + file.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": malformed JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---- pipeline ----

BenchmarkData generate_benchmark(const ExperimentConfig& cfg) {
  auto make = [](SynthConfig s, Split split) {
    s.split = split;
    return generate_synthetic_dataset(s);
  };
  return {make(cfg.source, Split::train), make(cfg.source, Split::test), make(cfg.target, Split::train),
          make(cfg.target, Split::test)};
}

ModelEvaluation evaluate_model(const std::string& name, const ModelParams& params, const Dataset& test,
                               const ExperimentConfig& cfg) {
  ModelEvaluation e;
  e.name = name;
  e.predictions = localize_dataset(params, test, cfg.inference);
  const auto gts = ground_truth_segments(test);
  const auto thresholds = threshold_preset(cfg.eval_preset);
  e.report = evaluate_map(e.predictions, gts, thresholds, test.num_classes);
  e.diagnostics = snippet_diagnostics(params, test, cfg.inference.topk_ratio);
  e.diagnostics.error_iou_threshold = cfg.diagnostic_iou;
  e.diagnostics.errors = error_breakdown(e.predictions, gts, cfg.diagnostic_iou);
  return e;
}

namespace {

TrainConfig target_train_config(const ExperimentConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = substream_seed(cfg.seed, "train-base-target");
  return t;
}

}  // namespace

ProtocolResult run_protocol(const ExperimentConfig& cfg, const BenchmarkData& data) {
  ProtocolResult r;
  TrainResult src = train_base(data.source_train, cfg.train);
  TrainResult tgt = train_base(data.target_train, target_train_config(cfg));
  AdaptResult ad = adapt_full(src.params, data.target_train, cfg.refine, cfg.adapt);
  r.base_source = std::move(src.params);
  r.source_log = std::move(src.log);
  r.base_target = std::move(tgt.params);
  r.target_log = std::move(tgt.log);
  r.adapted = ad.inference_model(cfg.adapt);
  r.adapt_log = std::move(ad.log);
  r.base_smd = evaluate_model("base-SmD", r.base_target, data.target_test, cfg);
  r.base_crd = evaluate_model("base-CrD", r.base_source, data.target_test, cfg);
  r.stat_crd = evaluate_model("STAT-CrD", r.adapted, data.target_test, cfg);
  return r;
}

double adapted_average_map(const ModelParams& base, const BenchmarkData& data, const ExperimentConfig& cfg) {
  const ModelParams m = adapt(base, data.target_train, cfg.refine, cfg.adapt);
  const auto preds = localize_dataset(m, data.target_test, cfg.inference);
  return evaluate_map(preds, ground_truth_segments(data.target_test), threshold_preset(cfg.eval_preset),
                      data.target_test.num_classes)
      .average_map;
}

std::vector<LossAblationRow> ablate_losses(const ModelParams& base, const BenchmarkData& data,
                                           const ExperimentConfig& cfg) {
  std::vector<LossAblationRow> rows;
  const auto gts = ground_truth_segments(data.target_test);
  const auto thresholds = threshold_preset(cfg.eval_preset);
  for (int ema = 0; ema < 2; ++ema)
    for (int mask = 0; mask < 8; ++mask) {
      LossAblationRow row;
      row.teacher_ema = ema == 1;
      row.att = (mask & 4) != 0;
      row.cas = (mask & 2) != 0;
      row.cal = (mask & 1) != 0;
      ExperimentConfig c = cfg;
      c.adapt.ema_enabled = row.teacher_ema;
      c.adapt.lambda_att = row.att ? cfg.adapt.lambda_att : 0.0;
      c.adapt.lambda_cas = row.cas ? cfg.adapt.lambda_cas : 0.0;
      c.adapt.lambda_cal = row.cal ? cfg.adapt.lambda_cal : 0.0;
      const ModelParams m = adapt(base, data.target_train, c.refine, c.adapt);
      row.report = evaluate_map(localize_dataset(m, data.target_test, c.inference), gts, thresholds,
                                data.target_test.num_classes);
      rows.push_back(std::move(row));
    }
  return rows;
}

// ---- CLI verbs ----

namespace {

void write_resolved(const ExperimentConfig& cfg, const fs::path& out) {
  write_text_file(out / artifacts::kResolvedConfig, to_json(cfg).dump(2) + "\n");
}

fs::path data_dir(const fs::path& out, const char* name) { return out / artifacts::kDataDir / name; }

Dataset load_required(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json"))
    throw Error("dataset not found: " + dir.string() + " (run gen-data first)");
  return load_dataset(dir);
}

std::string duration_table(const BenchmarkData& d) {
  std::ostringstream os;
  os << "split           instances      q1  median      q3    mean   (seconds)\n";
  auto row = [&](const char* name, const Dataset& ds) {
    const DurationStats s = duration_stats(ds);
    std::string label = name;
    label.resize(16, ' ');
    std::string count = std::to_string(s.count);
    os << label << std::string(9 - std::min<std::size_t>(9, count.size()), ' ') << count;
    for (double v : {s.q1, s.median, s.q3, s.mean}) {
      std::string x = format_fixed(v, 2);
      os << std::string(8 - std::min<std::size_t>(8, x.size()), ' ') << x;
    }
    os << "\n";
  };
  row(artifacts::kSourceTrain, d.source_train);
  row(artifacts::kSourceTest, d.source_test);
  row(artifacts::kTargetTrain, d.target_train);
  row(artifacts::kTargetTest, d.target_test);
  const double ratio = duration_stats(d.target_train).median / duration_stats(d.source_train).median;
  os << "median ratio target/source: " << format_fixed(ratio, 2) << "\n";
  return os.str();
}

void write_evaluation(const ModelEvaluation& e, const fs::path& dir) {
  write_text_file(dir / artifacts::kPredictions, predictions_to_json(e.predictions).dump(1) + "\n");
  write_text_file(dir / artifacts::kEvalJson, eval_report_to_json(e.report).dump(2) + "\n");
  write_text_file(dir / artifacts::kEvalText, eval_report_to_text(e.report, e.name));
  write_text_file(dir / artifacts::kEvalCsv, eval_report_to_csv(e.report));
}

void write_diagnostics(const ModelEvaluation& e, const fs::path& dir) {
  write_text_file(dir / artifacts::kDiagJson, diagnostics_to_json(e.diagnostics).dump(2) + "\n");
  write_text_file(dir / artifacts::kDiagText, diagnostics_to_text(e.diagnostics, e.name));
  write_text_file(dir / artifacts::kBinsCsv, attention_bins_to_csv(e.diagnostics));
  write_text_file(dir / artifacts::kErrorsCsv, error_breakdown_to_csv(e.diagnostics));
}

std::string protocol_table(const ProtocolResult& r) {
  std::ostringstream os;
  const auto& th = r.base_smd.report.thresholds;
  os << "setting    ";
  for (double t : th) os << "   " << format_fixed(t, 2);
  os << "    avg\n";
  for (const ModelEvaluation* e : {&r.base_smd, &r.base_crd, &r.stat_crd}) {
    std::string name = e->name;
    name.resize(11, ' ');
    os << name;
    for (double m : e->report.map) {
      std::string v = format_fixed(100.0 * m, 1);
      os << "  " << std::string(5 - std::min<std::size_t>(5, v.size()), ' ') << v;
    }
    os << "  " << format_fixed(100.0 * e->report.average_map, 2) << "\n";
  }
  return os.str();
}

}  // namespace

void cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const BenchmarkData d = generate_benchmark(cfg);
  save_dataset(d.source_train, data_dir(out, artifacts::kSourceTrain));
  save_dataset(d.source_test, data_dir(out, artifacts::kSourceTest));
  save_dataset(d.target_train, data_dir(out, artifacts::kTargetTrain));
  save_dataset(d.target_test, data_dir(out, artifacts::kTargetTest));
  write_resolved(cfg, out);
  const std::string table = duration_table(d);
  write_text_file(out / artifacts::kDurationStats, table);
  log << table;
}

void cmd_train_base(const ExperimentConfig& cfg, const fs::path& out, bool on_target, std::ostream& log) {
  const Dataset ds = load_required(data_dir(out, on_target ? artifacts::kTargetTrain : artifacts::kSourceTrain));
  const TrainConfig tc = on_target ? target_train_config(cfg) : cfg.train;
  const TrainResult r = train_base(ds, tc);
  write_resolved(cfg, out);
  save_checkpoint(r.params, out / (on_target ? artifacts::kSmdCheckpoint : artifacts::kBaseCheckpoint));
  write_text_file(out / (on_target ? artifacts::kSmdLog : artifacts::kBaseLog), train_log_to_csv(r.log));
  if (!r.log.empty()) log << "trained " << r.log.size() << " epochs, final mean loss " << format_fixed(r.log.back().mean_loss, 6) << "\n";
}

void cmd_adapt(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const ModelParams base = load_checkpoint(out / artifacts::kBaseCheckpoint);
  const Dataset target = load_required(data_dir(out, artifacts::kTargetTrain));
  const AdaptResult r = adapt_full(base, target, cfg.refine, cfg.adapt);
  write_resolved(cfg, out);
  save_checkpoint(r.inference_model(cfg.adapt), out / artifacts::kTeacherCheckpoint);
  write_text_file(out / artifacts::kAdaptLog, adapt_log_to_csv(r.log, cfg.adapt));
  log << "adapted for " << r.log.size() << " epochs\n";
}

void cmd_evaluate(const ExperimentConfig& cfg, const fs::path& out, const fs::path& checkpoint, const fs::path& dataset,
                  std::ostream& log) {
  const ModelParams m = load_checkpoint(checkpoint);
  const Dataset ds = load_required(dataset);
  const ModelEvaluation e = evaluate_model(checkpoint.stem().string(), m, ds, cfg);
  write_evaluation(e, out);
  log << eval_report_to_text(e.report, e.name + " on " + ds.distribution_id + "-" + to_string(ds.split));
}

void cmd_diagnose(const ExperimentConfig& cfg, const fs::path& out, const fs::path& checkpoint, const fs::path& dataset,
                  std::ostream& log) {
  const ModelParams m = load_checkpoint(checkpoint);
  const Dataset ds = load_required(dataset);
  const ModelEvaluation e = evaluate_model(checkpoint.stem().string(), m, ds, cfg);
  write_diagnostics(e, out);
  log << diagnostics_to_text(e.diagnostics, e.name + " on " + ds.distribution_id + "-" + to_string(ds.split));
}

void cmd_protocol(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const BenchmarkData d = generate_benchmark(cfg);
  write_resolved(cfg, out);
  write_text_file(out / artifacts::kDurationStats, duration_table(d));
  const ProtocolResult r = run_protocol(cfg, d);
  const fs::path pdir = out / artifacts::kProtocolDir;
  save_checkpoint(r.base_source, pdir / artifacts::kBaseCheckpoint);
  save_checkpoint(r.base_target, pdir / artifacts::kSmdCheckpoint);
  save_checkpoint(r.adapted, pdir / artifacts::kTeacherCheckpoint);
  write_text_file(pdir / artifacts::kBaseLog, train_log_to_csv(r.source_log));
  write_text_file(pdir / artifacts::kSmdLog, train_log_to_csv(r.target_log));
  write_text_file(pdir / artifacts::kAdaptLog, adapt_log_to_csv(r.adapt_log, cfg.adapt));
  json summary = json::array();
  std::ostringstream csv;
  csv << "setting";
  for (double t : r.base_smd.report.thresholds) csv << ",map@" << format_fixed(t, 2);
  csv << ",avg\n";
  for (const ModelEvaluation* e : {&r.base_smd, &r.base_crd, &r.stat_crd}) {
    write_evaluation(*e, pdir / e->name);
    write_diagnostics(*e, pdir / e->name);
    summary.push_back({{"setting", e->name},
                       {"thresholds", e->report.thresholds},
                       {"map", e->report.map},
                       {"average_map", e->report.average_map}});
    csv << e->name;
    for (double m : e->report.map) csv << "," << format_fixed(m, 6);
    csv << "," << format_fixed(e->report.average_map, 6) << "\n";
  }
  const std::string table = protocol_table(r);
  write_text_file(out / artifacts::kProtocolText, table);
  write_text_file(out / artifacts::kProtocolJson, summary.dump(2) + "\n");
  write_text_file(out / artifacts::kProtocolCsv, csv.str());
  log << table;
}

void cmd_ablate_alpha(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  if (cfg.ablate_alphas.empty()) throw ConfigError("ablate-alpha: empty alpha list");
  const BenchmarkData d = generate_benchmark(cfg);
  const ModelParams base = train_base(d.source_train, cfg.train).params;
  std::ostringstream csv;
  csv << "alpha,avg_map\n";
  for (double alpha : cfg.ablate_alphas) {
    ExperimentConfig c = cfg;
    c.refine.alpha = alpha;
    const double m = adapted_average_map(base, d, c);
    csv << format_fixed(alpha, 3) << "," << format_fixed(m, 6) << "\n";
    log << "alpha " << format_fixed(alpha, 2) << "  avg mAP " << format_fixed(100.0 * m, 2) << "\n";
  }
  write_resolved(cfg, out);
  write_text_file(out / artifacts::kAlphaCsv, csv.str());
}

void cmd_ablate_losses(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
  const BenchmarkData d = generate_benchmark(cfg);
  const ModelParams base = train_base(d.source_train, cfg.train).params;
  const auto rows = ablate_losses(base, d, cfg);
  std::ostringstream csv, text;
  csv << "teacher_ema,L_att,L_cas,L_cal";
  text << "teacher  L_att  L_cas  L_cal ";
  for (double t : rows.front().report.thresholds) {
    csv << ",map@" << format_fixed(t, 2);
    text << "   " << format_fixed(t, 2);
  }
  csv << ",avg\n";
  text << "    avg\n";
  auto mark = [](bool b) { return b ? "  x  " : "  -  "; };
  for (const auto& row : rows) {
    csv << row.teacher_ema << "," << row.att << "," << row.cas << "," << row.cal;
    text << (row.teacher_ema ? "  EMA  " : "frozen ") << mark(row.att) << "  " << mark(row.cas) << "  " << mark(row.cal);
    for (double m : row.report.map) {
      csv << "," << format_fixed(m, 6);
      std::string v = format_fixed(100.0 * m, 1);
      text << "  " << std::string(5 - std::min<std::size_t>(5, v.size()), ' ') << v;
    }
    csv << "," << format_fixed(row.report.average_map, 6) << "\n";
    text << "  " << format_fixed(100.0 * row.report.average_map, 2) << "\n";
  }
  write_resolved(cfg, out);
  write_text_file(out / artifacts::kLossesCsv, csv.str());
  write_text_file(out / artifacts::kLossesText, text.str());
  log << text.str();
}

}  // namespace gtal
