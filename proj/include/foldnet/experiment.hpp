#pragma once
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "foldnet/geometry.hpp"
#include "foldnet/nn.hpp"
#include "foldnet/observables.hpp"

namespace foldnet {

// Thrown for bad configs / CLI usage (exit code 2); std::runtime_error and
// friends signal runtime failure (exit code 3).
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DatasetSpec {
  std::string kind;  // "poker" | "egg" | "uci"
  // poker
  std::size_t n = 1000000;
  std::uint64_t seed = 99;
  std::string mode = "uniform_ordered";  // or "exhaustive"
  bool standardize = false;
  // egg
  EggSpec egg;
  // uci
  std::filesystem::path path;
};

struct AnalysisSettings {
  double eps_rel = 1e-6;
  int bins = 61;
  int k = 10;
  std::vector<int> classes;            // empty = all observed classes
  std::vector<int> excluded_classes = {5, 8, 9};
  int surrogate_seeds = 1;
  std::size_t dip_subsample = 50000;
  int tuning_neurons = 3;              // per layer: top-N large-dip + first-N
  double eval_split = 0.0;             // >0: train on the head, analyze the tail
};

struct ExperimentConfig {
  std::string name = "run";
  std::vector<std::uint64_t> seeds;
  DatasetSpec dataset;
  std::vector<int> widths;
  TrainSchedule schedule;
  std::string precision = "f64";  // "f64" | "f32"
  AnalysisSettings analysis;
  std::filesystem::path out_dir = "runs";

  void validate() const;
};

// Parses + validates config JSON; unknown keys anywhere are rejected with
// their path. `profile` ("paper"|"desk") supplies the defaults the file
// overrides.
ExperimentConfig parse_config_json(const std::string& text, const std::string& profile);
ExperimentConfig default_config(const std::string& profile);

struct RunArtifacts {
  std::filesystem::path run_dir;
  std::vector<std::filesystem::path> files;
};

// Full pipeline per seed: train, trace, observables, ablation, artifacts;
// aggregates across seeds into report.json. A failing seed is recorded in the
// report and does not abort the others.
RunArtifacts run_experiment(const ExperimentConfig& config);

// The pipeline stages behind run_experiment, exposed so the CLI can run them
// one at a time (and seeds in parallel processes). Later stages read the
// artifacts of earlier ones from <out_dir>/<name>/seed_<seed>/.
LabeledDataset build_dataset(const DatasetSpec& spec);
std::filesystem::path run_directory(const ExperimentConfig& config);
void run_train_stage(const ExperimentConfig& config, std::uint64_t seed,
                     const LabeledDataset& train_data);
void run_analysis_stage(const ExperimentConfig& config, std::uint64_t seed,
                        const LabeledDataset& eval_data);
void run_ablation_stage(const ExperimentConfig& config, std::uint64_t seed,
                        const LabeledDataset& eval_data);
// Aggregates whatever seed artifacts exist into report.json + checksum list.
RunArtifacts write_report(const ExperimentConfig& config);
// Train/eval views per analysis.eval_split (both = `data` when split is 0).
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& data,
                                                        double eval_split);

// Constructive toys: egg_fold (params: dim), egg_shear (depth/restarts),
// squash_chain (half_circle | full_circle | no_op | file path).
struct ToyParams {
  std::string kind;           // "egg_fold" | "egg_shear" | "squash_chain"
  int dim = 2;
  int depth = 7;
  int restarts = 50;
  std::string chain = "half_circle";
  std::optional<EggSpec> egg;
  std::filesystem::path out_dir = "runs";
  std::string name;           // default: toy_<kind>
};
RunArtifacts run_toy(const ToyParams& params);

// Renders SVG figures from the CSV artifacts of a completed run directory.
std::vector<std::filesystem::path> render_plots(const std::filesystem::path& run_dir);

}  // namespace foldnet
