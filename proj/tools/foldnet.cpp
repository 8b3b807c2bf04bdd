#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "foldnet/experiment.hpp"
#include "foldnet/util.hpp"

namespace {

using foldnet::ExperimentConfig;

ExperimentConfig load_config(const std::string& config_path, const std::string& profile,
                             const std::string& out_override, double eval_split_override) {
  const std::string text =
      config_path.empty() ? std::string("{}") : foldnet::read_file(config_path);
  ExperimentConfig config = foldnet::parse_config_json(text, profile);
  if (!out_override.empty()) config.out_dir = out_override;
  if (eval_split_override >= 0) config.analysis.eval_split = eval_split_override;
  config.validate();
  return config;
}

std::vector<std::uint64_t> selected_seeds(const ExperimentConfig& config,
                                          const std::optional<std::uint64_t>& seed) {
  if (seed) return {*seed};
  return config.seeds;
}

void print_files(const foldnet::RunArtifacts& artifacts) {
  for (const auto& f : artifacts.files) std::printf("wrote %s\n", f.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ReLU-network folding experiments: training, observables, toy constructions"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a dataset CSV (+ provenance sidecar)");
  foldnet::DatasetSpec gen_spec;
  std::string gen_out = "dataset.csv";
  std::string gen_path;
  gen->add_option("--kind", gen_spec.kind, "poker | egg | uci")->required();
  gen->add_option("--n", gen_spec.n, "sample count (poker)");
  gen->add_option("--seed", gen_spec.seed, "generator seed");
  gen->add_option("--mode", gen_spec.mode, "uniform_ordered | exhaustive (poker)");
  gen->add_flag("--standardize", gen_spec.standardize, "per-feature standardization");
  gen->add_option("--path", gen_path, "UCI-format input file (uci)");
  gen->add_option("--dim", gen_spec.egg.dim, "egg dimension");
  gen->add_option("--r-in", gen_spec.egg.r_in, "egg inner-ball radius");
  gen->add_option("--r-mid", gen_spec.egg.r_mid, "egg shell inner radius");
  gen->add_option("--r-out", gen_spec.egg.r_out, "egg shell outer radius");
  gen->add_option("--per-class", gen_spec.egg.per_class, "egg samples per class");
  gen->add_option("--out", gen_out, "output CSV path");
  gen->callback([&] {
    gen_spec.path = gen_path;
    gen_spec.egg.seed = gen_spec.seed;
    const foldnet::LabeledDataset ds = foldnet::build_dataset(gen_spec);
    foldnet::save_dataset_csv(ds, gen_out);
    std::printf("wrote %s (%zu rows, %d classes)\n", gen_out.c_str(), ds.labels.size(),
                ds.n_classes);
  });

  // shared experiment-stage options
  struct StageArgs {
    std::string config_path;
    std::string profile = "desk";
    std::string out_override;
    std::optional<std::uint64_t> seed;
    double eval_split = -1;
  };
  auto add_stage_options = [](CLI::App* sub, StageArgs& args, bool with_split) {
    sub->add_option("--config", args.config_path, "config JSON path");
    sub->add_option("--profile", args.profile, "paper | desk (defaults the config overrides)")
        ->check(CLI::IsMember({"paper", "desk"}));
    sub->add_option("--out", args.out_override, "output directory override");
    sub->add_option("--seed", args.seed, "process only this seed");
    if (with_split) {
      sub->add_option("--eval-split", args.eval_split,
                      "hold out this fraction for analysis (overrides config)");
    }
  };

  auto* train = app.add_subcommand("train", "train one network per seed");
  StageArgs train_args;
  add_stage_options(train, train_args, true);
  train->callback([&] {
    const ExperimentConfig config = load_config(train_args.config_path, train_args.profile,
                                                train_args.out_override, train_args.eval_split);
    const foldnet::LabeledDataset data = foldnet::build_dataset(config.dataset);
    const auto parts = foldnet::split_dataset(data, config.analysis.eval_split);
    for (std::uint64_t seed : selected_seeds(config, train_args.seed)) {
      foldnet::run_train_stage(config, seed, parts.first);
      std::printf("trained seed %llu -> %s\n", static_cast<unsigned long long>(seed),
                  (foldnet::run_directory(config) / ("seed_" + std::to_string(seed))).c_str());
    }
  });

  auto* analyze = app.add_subcommand("analyze", "PCA, dips, angles, tuning curves per seed");
  StageArgs analyze_args;
  add_stage_options(analyze, analyze_args, true);
  analyze->callback([&] {
    const ExperimentConfig config = load_config(analyze_args.config_path, analyze_args.profile,
                                                analyze_args.out_override, analyze_args.eval_split);
    const foldnet::LabeledDataset data = foldnet::build_dataset(config.dataset);
    const auto parts = foldnet::split_dataset(data, config.analysis.eval_split);
    for (std::uint64_t seed : selected_seeds(config, analyze_args.seed)) {
      foldnet::run_analysis_stage(config, seed, parts.second);
      std::printf("analyzed seed %llu\n", static_cast<unsigned long long>(seed));
    }
  });

  auto* ablate = app.add_subcommand("ablate", "dip-ranked silencing experiments per seed");
  StageArgs ablate_args;
  add_stage_options(ablate, ablate_args, true);
  ablate->callback([&] {
    const ExperimentConfig config = load_config(ablate_args.config_path, ablate_args.profile,
                                                ablate_args.out_override, ablate_args.eval_split);
    const foldnet::LabeledDataset data = foldnet::build_dataset(config.dataset);
    const auto parts = foldnet::split_dataset(data, config.analysis.eval_split);
    for (std::uint64_t seed : selected_seeds(config, ablate_args.seed)) {
      foldnet::run_ablation_stage(config, seed, parts.second);
      std::printf("ablated seed %llu\n", static_cast<unsigned long long>(seed));
    }
  });

  auto* report = app.add_subcommand("report", "aggregate seed artifacts into report.json");
  StageArgs report_args;
  add_stage_options(report, report_args, false);
  report->callback([&] {
    const ExperimentConfig config = load_config(report_args.config_path, report_args.profile,
                                                report_args.out_override, -1);
    const foldnet::RunArtifacts artifacts = foldnet::write_report(config);
    const auto j = nlohmann::json::parse(foldnet::read_file(artifacts.run_dir / "report.json"));
    if (j["aggregate"].contains("f1_mean")) {
      std::printf("macro-F1 mean over %zu seeds: %.4f\n",
                  j["aggregate"]["seeds_ok"].get<std::size_t>(),
                  j["aggregate"]["f1_mean"].get<double>());
    }
    std::printf("wrote %s\n", (artifacts.run_dir / "report.json").c_str());
  });

  auto* plot = app.add_subcommand("plot", "render SVG figures from run CSVs");
  StageArgs plot_args;
  std::string plot_dir;
  add_stage_options(plot, plot_args, false);
  plot->add_option("dir", plot_dir, "run directory (defaults to the config's)");
  plot->callback([&] {
    std::filesystem::path dir;
    if (!plot_dir.empty()) {
      dir = plot_dir;
    } else {
      dir = foldnet::run_directory(load_config(plot_args.config_path, plot_args.profile,
                                               plot_args.out_override, -1));
    }
    for (const auto& f : foldnet::render_plots(dir)) {
      std::printf("wrote %s\n", f.string().c_str());
    }
  });

  auto* toy = app.add_subcommand("toy", "constructive solutions: fold, shear, squash chains");
  foldnet::ToyParams toy_params;
  double tr_in = -1, tr_mid = -1, tr_out = -1;
  long long t_per_class = -1;
  std::uint64_t t_egg_seed = 1;
  bool t_egg_seed_set = false;
  toy->add_option("--kind", toy_params.kind, "egg_fold | egg_shear | squash_chain")->required();
  toy->add_option("--dim", toy_params.dim, "egg dimension (egg_fold)");
  toy->add_option("--depth", toy_params.depth, "tied layers (egg_shear)");
  toy->add_option("--restarts", toy_params.restarts, "search restarts (egg_shear)");
  toy->add_option("--chain", toy_params.chain,
                  "half_circle | full_circle | no_op | chain JSON path");
  toy->add_option("--r-in", tr_in, "egg inner-ball radius");
  toy->add_option("--r-mid", tr_mid, "egg shell inner radius");
  toy->add_option("--r-out", tr_out, "egg shell outer radius");
  toy->add_option("--per-class", t_per_class, "egg samples per class");
  toy->add_option("--egg-seed", t_egg_seed, "egg generator seed")->each([&](const std::string&) {
    t_egg_seed_set = true;
  });
  toy->add_option("--out", toy_params.out_dir, "output directory");
  toy->add_option("--name", toy_params.name, "run name (default toy_<kind>)");
  toy->callback([&] {
    if (tr_in > 0 || tr_mid > 0 || tr_out > 0 || t_per_class > 0 || t_egg_seed_set) {
      foldnet::EggSpec egg;
      egg.dim = toy_params.dim;
      if (tr_in > 0) egg.r_in = tr_in;
      if (tr_mid > 0) egg.r_mid = tr_mid;
      if (tr_out > 0) egg.r_out = tr_out;
      if (t_per_class > 0) egg.per_class = static_cast<std::size_t>(t_per_class);
      egg.seed = t_egg_seed;
      toy_params.egg = egg;
    }
    const foldnet::RunArtifacts artifacts = foldnet::run_toy(toy_params);
    const auto j = nlohmann::json::parse(foldnet::read_file(artifacts.run_dir / "report.json"));
    if (j.contains("separability")) {
      const auto& rec = j["separability"]["recall"];
      std::printf("class  recall\n");
      for (std::size_t c = 0; c < rec.size(); ++c) {
        std::printf("%5zu  %.4f\n", c, rec[c].get<double>());
      }
    }
    print_files(artifacts);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const foldnet::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
