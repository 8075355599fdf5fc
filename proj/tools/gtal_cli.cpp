#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gtal/experiment.hpp"

namespace {

std::vector<double> parse_alphas(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw gtal::ConfigError("--alphas: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw gtal::ConfigError("--alphas: empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalizable weakly-supervised temporal action localization on synthetic benchmarks"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "gtal_out", scenario, checkpoint, dataset, on = "source", alphas;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config JSON")->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { seed = s, seed_given = true; }, "master seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--preset", scenario, "scenario preset: scale_up or scale_down");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the four benchmark splits");
  auto* train = app.add_subcommand("train-base", "stage-1 training with video labels");
  auto* adapt = app.add_subcommand("adapt", "stage-2 teacher-student adaptation on target-train");
  auto* eval = app.add_subcommand("evaluate", "localize and score a dataset");
  auto* diag = app.add_subcommand("diagnose", "snippet accuracy, attention bins and error breakdown");
  auto* proto = app.add_subcommand("protocol", "base-SmD / base-CrD / STAT-CrD comparison");
  auto* alpha = app.add_subcommand("ablate-alpha", "avg mAP against refinement alpha");
  auto* losses = app.add_subcommand("ablate-losses", "loss on/off grid with and without EMA");
  for (auto* s : {gen, train, adapt, eval, diag, proto, alpha, losses}) common(s);
  train->add_option("--on", on, "training split: source or target")->check(CLI::IsMember({"source", "target"}));
  for (auto* s : {eval, diag}) {
    s->add_option("--checkpoint", checkpoint, "model checkpoint (default <out>/stat_teacher.ckpt)");
    s->add_option("--dataset", dataset, "dataset directory (default <out>/data/target-test)");
  }
  alpha->add_option("--alphas", alphas, "comma-separated alpha values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    gtal::ExperimentConfig cfg;
    if (!config_path.empty()) {
      cfg = gtal::load_experiment_config(config_path);
      if (!scenario.empty() && scenario != cfg.scenario)
        throw gtal::ConfigError("--preset " + scenario + " conflicts with config scenario " + cfg.scenario);
    } else {
      cfg = gtal::preset_config(scenario.empty() ? "scale_up" : scenario);
    }
    if (seed_given) cfg.seed = seed;
    if (!alphas.empty()) cfg.ablate_alphas = parse_alphas(alphas);
    cfg.resolve_seeds();
    cfg.validate();

    const std::filesystem::path out = out_dir;
    const std::filesystem::path ckpt = checkpoint.empty() ? out / gtal::artifacts::kTeacherCheckpoint : std::filesystem::path(checkpoint);
    const std::filesystem::path data =
        dataset.empty() ? out / gtal::artifacts::kDataDir / gtal::artifacts::kTargetTest : std::filesystem::path(dataset);

    if (*gen) gtal::cmd_gen_data(cfg, out, std::cout);
    else if (*train) gtal::cmd_train_base(cfg, out, on == "target", std::cout);
    else if (*adapt) gtal::cmd_adapt(cfg, out, std::cout);
    else if (*eval) gtal::cmd_evaluate(cfg, out, ckpt, data, std::cout);
    else if (*diag) gtal::cmd_diagnose(cfg, out, ckpt, data, std::cout);
    else if (*proto) gtal::cmd_protocol(cfg, out, std::cout);
    else if (*alpha) gtal::cmd_ablate_alpha(cfg, out, std::cout);
    else if (*losses) gtal::cmd_ablate_losses(cfg, out, std::cout);
  } catch (const gtal::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return EXIT_SUCCESS;
}
