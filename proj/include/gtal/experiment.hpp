#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gtal/evaluator.hpp"
#include "gtal/localizer.hpp"
#include "gtal/model.hpp"
#include "gtal/snippet_data.hpp"
#include "gtal/stat_adapter.hpp"
#include "json.hpp"

namespace gtal {

/// Every knob of one experiment. Stage seeds are derived from `seed` by
/// `resolve_seeds()`; values given for them in a config file are overwritten.
struct ExperimentConfig {
  std::string scenario = "scale_up";
  std::uint64_t seed = 7;
  SynthConfig source;
  SynthConfig target;
  TrainConfig train;
  RefineConfig refine;
  AdaptConfig adapt;
  InferenceConfig inference;
  std::string eval_preset = "activitynet";
  double diagnostic_iou = 0.5;
  std::vector<double> ablate_alphas;

  void resolve_seeds();
  void validate() const;
};

/// Calibrated desk-scale defaults. "scale_up": short source -> long target;
/// "scale_down": the reverse.
ExperimentConfig preset_config(const std::string& scenario);

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Overlays `j` onto the preset named by j["scenario"] (default scale_up).
/// Unknown keys are rejected with ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& file);

struct BenchmarkData {
  Dataset source_train;
  Dataset source_test;
  Dataset target_train;
  Dataset target_test;
};

BenchmarkData generate_benchmark(const ExperimentConfig& cfg);

/// Fixed artifact names below --out.
namespace artifacts {
inline constexpr const char* kResolvedConfig = "resolved_config.json";
inline constexpr const char* kDataDir = "data";
inline constexpr const char* kSourceTrain = "source-train";
inline constexpr const char* kSourceTest = "source-test";
inline constexpr const char* kTargetTrain = "target-train";
inline constexpr const char* kTargetTest = "target-test";
inline constexpr const char* kDurationStats = "duration_stats.txt";
inline constexpr const char* kBaseCheckpoint = "base.ckpt";
inline constexpr const char* kBaseLog = "base_train_log.csv";
inline constexpr const char* kSmdCheckpoint = "base_smd.ckpt";
inline constexpr const char* kSmdLog = "base_smd_train_log.csv";
inline constexpr const char* kTeacherCheckpoint = "stat_teacher.ckpt";
inline constexpr const char* kAdaptLog = "adapt_log.csv";
inline constexpr const char* kPredictions = "predictions.json";
inline constexpr const char* kEvalJson = "eval_report.json";
inline constexpr const char* kEvalText = "eval_report.txt";
inline constexpr const char* kEvalCsv = "map_by_threshold.csv";
inline constexpr const char* kDiagJson = "diagnostics.json";
inline constexpr const char* kDiagText = "diagnostics.txt";
inline constexpr const char* kBinsCsv = "attention_bins.csv";
inline constexpr const char* kErrorsCsv = "error_breakdown.csv";
inline constexpr const char* kProtocolDir = "protocol";
inline constexpr const char* kProtocolText = "protocol_summary.txt";
inline constexpr const char* kProtocolJson = "protocol_summary.json";
inline constexpr const char* kProtocolCsv = "protocol_summary.csv";
inline constexpr const char* kAlphaCsv = "ablate_alpha.csv";
inline constexpr const char* kLossesText = "ablate_losses.txt";
inline constexpr const char* kLossesCsv = "ablate_losses.csv";
}  // namespace artifacts

struct ModelEvaluation {
  std::string name;
  std::vector<Detection> predictions;
  EvalReport report;
  DiagnosticsReport diagnostics;
};

ModelEvaluation evaluate_model(const std::string& name, const ModelParams& params, const Dataset& test,
                               const ExperimentConfig& cfg);

struct ProtocolResult {
  ModelParams base_source;
  ModelParams base_target;
  ModelParams adapted;
  std::vector<EpochLoss> source_log;
  std::vector<EpochLoss> target_log;
  std::vector<AdaptEpochLog> adapt_log;
  ModelEvaluation base_smd;
  ModelEvaluation base_crd;
  ModelEvaluation stat_crd;
};

ProtocolResult run_protocol(const ExperimentConfig& cfg, const BenchmarkData& data);

/// Adapts `base` with the given overrides and evaluates on target-test.
double adapted_average_map(const ModelParams& base, const BenchmarkData& data, const ExperimentConfig& cfg);

struct LossAblationRow {
  bool teacher_ema = false;
  bool att = false;
  bool cas = false;
  bool cal = false;
  EvalReport report;
};

std::vector<LossAblationRow> ablate_losses(const ModelParams& base, const BenchmarkData& data,
                                           const ExperimentConfig& cfg);

// ---- CLI verbs: write artifacts under `out`, throw on failure ----

void cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
void cmd_train_base(const ExperimentConfig& cfg, const std::filesystem::path& out, bool on_target, std::ostream& log);
void cmd_adapt(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
void cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& out, const std::filesystem::path& checkpoint,
                  const std::filesystem::path& dataset, std::ostream& log);
void cmd_diagnose(const ExperimentConfig& cfg, const std::filesystem::path& out, const std::filesystem::path& checkpoint,
                  const std::filesystem::path& dataset, std::ostream& log);
void cmd_protocol(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
void cmd_ablate_alpha(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);
void cmd_ablate_losses(const ExperimentConfig& cfg, const std::filesystem::path& out, std::ostream& log);

}  // namespace gtal
