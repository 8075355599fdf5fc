#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gtal/experiment.hpp"
#include "support.hpp"

using namespace gtal;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_overrides() {
  return {{"seed", 3},
          {"source", {{"videos_per_split", 10}, {"feature_dim", 8}}},
          {"target", {{"videos_per_split", 10}, {"feature_dim", 8}}},
          {"train", {{"epochs", 2}, {"hidden_dim", 8}, {"batch_size", 5}}},
          {"adapt", {{"epochs", 1}, {"batch_size", 5}}}};
}

ExperimentConfig small_config() { return config_from_json(small_overrides()); }

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GTAL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("presets") {
  const ExperimentConfig up = preset_config("scale_up"), down = preset_config("scale_down");
  CHECK(up.source.duration_median == 3.0);
  CHECK(up.target.duration_median == 28.5);
  CHECK(down.source.duration_median == 28.5);
  CHECK(down.target.duration_median == 3.0);
  CHECK(up.source.num_classes == 8);
  CHECK(up.refine.eta == 3);
  CHECK(up.adapt.lambda_att == 1.0);
  CHECK(up.adapt.lambda_cas == 1.0);
  CHECK(up.adapt.ema_momentum == 0.9);
  CHECK(up.adapt.student_dropout == 0.1);
  CHECK(up.eval_preset == "activitynet");
  CHECK(down.eval_preset == "thumos14");
  CHECK_NOTHROW(up.validate());
  CHECK_NOTHROW(down.validate());
  CHECK_THROWS_AS(preset_config("sideways"), ConfigError);
}

TEST_CASE("the master seed reaches every stage") {
  ExperimentConfig a = preset_config("scale_up"), b = a;
  b.seed = a.seed + 1;
  b.resolve_seeds();
  CHECK(a.source.seed != b.source.seed);
  CHECK(a.target.seed != b.target.seed);
  CHECK(a.train.seed != b.train.seed);
  CHECK(a.adapt.seed != b.adapt.seed);
  CHECK(a.source.prototype_seed == a.target.prototype_seed);
  CHECK(a.source.seed != a.target.seed);
  CHECK(substream_seed(1, "x") != substream_seed(1, "y"));
  CHECK(substream_seed(1, "x") == substream_seed(1, "x"));
}

TEST_CASE("config JSON round-trip and overlay") {
  const ExperimentConfig c = small_config();
  CHECK(c.source.videos_per_split == 10);
  CHECK(c.train.epochs == 2);
  CHECK(c.refine.alpha == preset_config("scale_up").refine.alpha);
  CHECK(to_json(config_from_json(to_json(c))) == to_json(c));

  nlohmann::json j = to_json(c);
  j["train"]["seed"] = 12345;
  CHECK(config_from_json(j).train.seed == c.train.seed);

  const ExperimentConfig down = config_from_json({{"scenario", "scale_down"}});
  CHECK(to_json(down) == to_json(preset_config("scale_down")));
}

TEST_CASE("config errors") {
  auto rejects = [](const nlohmann::json& j, const std::string& needle) {
    try {
      config_from_json(j);
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  CHECK(rejects({{"bogus", 1}}, "bogus"));
  CHECK(rejects({{"adapt", {{"lamda_att", 1.0}}}}, "lamda_att"));
  CHECK(rejects({{"train", {{"epochs", "ten"}}}}, "epochs"));
  CHECK(rejects({{"source", {{"feature_dim", 16}}}}, "feature_dim"));
  CHECK(rejects({{"eval", {{"preset", "coco"}}}}, "coco"));
  CHECK(rejects({{"adapt", {{"calibration_target", "inverse"}}}}, "inverse"));
  CHECK(rejects({{"scenario", "up"}}, "up"));

  test::TempDir dir("cfg_err");
  std::ofstream(dir.path / "bad.json") << "{ not json";
  CHECK_THROWS_AS(load_experiment_config(dir.path / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_experiment_config(dir.path / "missing.json"), ConfigError);
}

TEST_CASE("benchmark splits") {
  const ExperimentConfig c = small_config();
  const BenchmarkData d = generate_benchmark(c);
  CHECK(d.source_train.split == Split::train);
  CHECK(d.source_test.split == Split::test);
  CHECK(d.target_train.distribution_id == "target");
  CHECK(d.source_train.videos.size() == 10);
  CHECK_FALSE(d.source_train.videos[0].features == d.source_test.videos[0].features);
  CHECK(d.target_test.feature_dim() == 8);
}

TEST_CASE("zero loss weights make the adapted row equal the cross-distribution base") {
  nlohmann::json j = small_overrides();
  j["adapt"]["lambda_att"] = 0.0;
  j["adapt"]["lambda_cas"] = 0.0;
  j["adapt"]["lambda_cal"] = 0.0;
  const ExperimentConfig c = config_from_json(j);
  const ProtocolResult r = run_protocol(c, generate_benchmark(c));
  CHECK(r.adapted == r.base_source);
  CHECK(r.stat_crd.report.map == r.base_crd.report.map);
  CHECK(r.stat_crd.predictions == r.base_crd.predictions);
  CHECK(r.base_smd.name == "base-SmD");
  CHECK(r.base_crd.name == "base-CrD");
  CHECK(r.stat_crd.name == "STAT-CrD");
}

TEST_CASE("loss ablation grid") {
  const ExperimentConfig c = small_config();
  const BenchmarkData d = generate_benchmark(c);
  const ModelParams base = train_base(d.source_train, c.train).params;
  const auto rows = ablate_losses(base, d, c);
  REQUIRE(rows.size() == 16);
  const double unadapted = evaluate_model("x", base, d.target_test, c).report.average_map;
  for (const auto& row : rows)
    if (!row.att && !row.cas && !row.cal) CHECK(row.report.average_map == unadapted);
  CHECK(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.teacher_ema; }) == 8);
}

TEST_CASE("CLI exit codes") {
  test::TempDir dir("cli_codes");
  CHECK(run_cli("") == 2);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("gen-data --no-such-flag") == 2);
  CHECK(run_cli("gen-data --config " + (dir.path / "absent.json").string()) == 2);
  std::ofstream(dir.path / "bad.json") << R"({"adapt": {"lamda_att": 1}})";
  CHECK(run_cli("gen-data --config " + (dir.path / "bad.json").string() + " --out " + (dir.path / "o").string()) == 2);
  CHECK(run_cli("gen-data --preset sideways --out " + (dir.path / "o").string()) == 2);
  CHECK(run_cli("train-base --on elsewhere") == 2);
  CHECK(run_cli("ablate-alpha --alphas 0.1,x --out " + (dir.path / "o").string()) == 2);
  CHECK(run_cli("evaluate --out " + (dir.path / "empty").string()) == 1);
}

TEST_CASE("CLI pipeline writes the documented artifacts and reruns byte-identically") {
  test::TempDir dir("cli_pipeline");
  std::ofstream(dir.path / "small.json") << small_overrides().dump();
  const std::string cfg = " --config " + (dir.path / "small.json").string();
  std::vector<fs::path> outs = {dir.path / "run1", dir.path / "run2"};
  for (const auto& out : outs) {
    const std::string o = cfg + " --out " + out.string();
    REQUIRE(run_cli("gen-data" + o) == 0);
    REQUIRE(run_cli("train-base" + o) == 0);
    REQUIRE(run_cli("train-base --on target" + o) == 0);
    REQUIRE(run_cli("adapt" + o) == 0);
    REQUIRE(run_cli("evaluate" + o) == 0);
    REQUIRE(run_cli("diagnose" + o) == 0);
    REQUIRE(run_cli("ablate-alpha --alphas 0.5,1.4" + o) == 0);
  }
  for (const char* name : {artifacts::kResolvedConfig, artifacts::kDurationStats, artifacts::kBaseCheckpoint,
                           artifacts::kBaseLog, artifacts::kSmdCheckpoint, artifacts::kSmdLog,
                           artifacts::kTeacherCheckpoint, artifacts::kAdaptLog, artifacts::kPredictions,
                           artifacts::kEvalJson, artifacts::kEvalText, artifacts::kEvalCsv, artifacts::kDiagJson,
                           artifacts::kDiagText, artifacts::kBinsCsv, artifacts::kErrorsCsv, artifacts::kAlphaCsv}) {
    INFO(name);
    CHECK(fs::exists(outs[0] / name));
  }
  for (const char* split : {artifacts::kSourceTrain, artifacts::kSourceTest, artifacts::kTargetTrain, artifacts::kTargetTest})
    CHECK(fs::exists(outs[0] / artifacts::kDataDir / split / "manifest.json"));

  const auto files = files_under(outs[0]);
  REQUIRE(files == files_under(outs[1]));
  for (const auto& f : files) {
    INFO(f.string());
    CHECK(read_file(outs[0] / f) == read_file(outs[1] / f));
  }

  const ExperimentConfig resolved = load_experiment_config(outs[0] / artifacts::kResolvedConfig);
  ExperimentConfig expected = small_config();
  expected.ablate_alphas = {0.5, 1.4};
  CHECK(to_json(resolved) == to_json(expected));
  CHECK(run_cli("gen-data --seed 4" + cfg + " --out " + (dir.path / "run3").string()) == 0);
  CHECK(read_file(outs[0] / artifacts::kDataDir / artifacts::kTargetTest / "manifest.json") !=
        read_file(dir.path / "run3" / artifacts::kDataDir / artifacts::kTargetTest / "manifest.json"));
}
