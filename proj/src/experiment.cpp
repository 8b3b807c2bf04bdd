#include "foldnet/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"

#include "foldnet/csv.hpp"
#include "foldnet/svg.hpp"
#include "foldnet/util.hpp"

namespace foldnet {

namespace {

using nlohmann::json;

// ---- config parsing ---------------------------------------------------------

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) { known = true; break; }
    }
    if (!known) throw ValidationError("config: unknown key '" + item.key() + "' in " + where);
  }
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ValidationError("config: " + path + " must be a number");
  return v.get<double>();
}

long long as_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ValidationError("config: " + path + " must be an integer");
  return v.get<long long>();
}

std::uint64_t as_seed(const json& v, const std::string& path) {
  const long long x = as_integer(v, path);
  if (x < 0) throw ValidationError("config: " + path + " must be >= 0");
  return static_cast<std::uint64_t>(x);
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ValidationError("config: " + path + " must be a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ValidationError("config: " + path + " must be a string");
  return v.get<std::string>();
}

std::vector<int> as_int_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ValidationError("config: " + path + " must be an array");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(static_cast<int>(as_integer(v[i], path + "[" + std::to_string(i) + "]")));
  }
  return out;
}

void parse_dataset(const json& j, DatasetSpec& spec) {
  check_keys(j, "dataset", {"kind", "n", "seed", "mode", "standardize", "path", "egg"});
  if (j.contains("kind")) spec.kind = as_string(j["kind"], "dataset.kind");
  if (j.contains("n")) {
    const long long n = as_integer(j["n"], "dataset.n");
    if (n <= 0) throw ValidationError("config: dataset.n must be positive");
    spec.n = static_cast<std::size_t>(n);
  }
  if (j.contains("seed")) spec.seed = as_seed(j["seed"], "dataset.seed");
  if (j.contains("mode")) spec.mode = as_string(j["mode"], "dataset.mode");
  if (j.contains("standardize")) spec.standardize = as_bool(j["standardize"], "dataset.standardize");
  if (j.contains("path")) spec.path = as_string(j["path"], "dataset.path");
  if (j.contains("egg")) {
    const json& e = j["egg"];
    check_keys(e, "dataset.egg", {"dim", "r_in", "r_mid", "r_out", "per_class", "seed"});
    if (e.contains("dim")) spec.egg.dim = static_cast<int>(as_integer(e["dim"], "dataset.egg.dim"));
    if (e.contains("r_in")) spec.egg.r_in = as_number(e["r_in"], "dataset.egg.r_in");
    if (e.contains("r_mid")) spec.egg.r_mid = as_number(e["r_mid"], "dataset.egg.r_mid");
    if (e.contains("r_out")) spec.egg.r_out = as_number(e["r_out"], "dataset.egg.r_out");
    if (e.contains("per_class")) {
      const long long pc = as_integer(e["per_class"], "dataset.egg.per_class");
      if (pc <= 0) throw ValidationError("config: dataset.egg.per_class must be positive");
      spec.egg.per_class = static_cast<std::size_t>(pc);
    }
    if (e.contains("seed")) spec.egg.seed = as_seed(e["seed"], "dataset.egg.seed");
  }
}

void parse_training(const json& j, TrainSchedule& schedule) {
  check_keys(j, "training", {"phases", "momentum", "batch_size"});
  if (j.contains("phases")) {
    if (!j["phases"].is_array()) throw ValidationError("config: training.phases must be an array");
    schedule.phases.clear();
    for (std::size_t i = 0; i < j["phases"].size(); ++i) {
      const json& p = j["phases"][i];
      const std::string path = "training.phases[" + std::to_string(i) + "]";
      check_keys(p, path, {"lr", "epochs"});
      if (!p.contains("lr") || !p.contains("epochs")) {
        throw ValidationError("config: " + path + " needs 'lr' and 'epochs'");
      }
      TrainPhase phase;
      phase.learning_rate = as_number(p["lr"], path + ".lr");
      phase.epochs = static_cast<int>(as_integer(p["epochs"], path + ".epochs"));
      schedule.phases.push_back(phase);
    }
  }
  if (j.contains("momentum")) schedule.momentum = as_number(j["momentum"], "training.momentum");
  if (j.contains("batch_size")) {
    schedule.batch_size = static_cast<int>(as_integer(j["batch_size"], "training.batch_size"));
  }
}

void parse_analysis(const json& j, AnalysisSettings& a) {
  check_keys(j, "analysis",
             {"eps_rel", "bins", "k", "classes", "excluded_classes", "surrogate_seeds",
              "dip_subsample", "tuning_neurons", "eval_split"});
  if (j.contains("eps_rel")) a.eps_rel = as_number(j["eps_rel"], "analysis.eps_rel");
  if (j.contains("bins")) a.bins = static_cast<int>(as_integer(j["bins"], "analysis.bins"));
  if (j.contains("k")) a.k = static_cast<int>(as_integer(j["k"], "analysis.k"));
  if (j.contains("classes")) a.classes = as_int_list(j["classes"], "analysis.classes");
  if (j.contains("excluded_classes")) {
    a.excluded_classes = as_int_list(j["excluded_classes"], "analysis.excluded_classes");
  }
  if (j.contains("surrogate_seeds")) {
    a.surrogate_seeds = static_cast<int>(as_integer(j["surrogate_seeds"], "analysis.surrogate_seeds"));
  }
  if (j.contains("dip_subsample")) {
    const long long s = as_integer(j["dip_subsample"], "analysis.dip_subsample");
    if (s <= 1) throw ValidationError("config: analysis.dip_subsample must be > 1");
    a.dip_subsample = static_cast<std::size_t>(s);
  }
  if (j.contains("tuning_neurons")) {
    a.tuning_neurons = static_cast<int>(as_integer(j["tuning_neurons"], "analysis.tuning_neurons"));
  }
  if (j.contains("eval_split")) a.eval_split = as_number(j["eval_split"], "analysis.eval_split");
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["seeds"] = c.seeds;
  j["dataset"]["kind"] = c.dataset.kind;
  j["dataset"]["n"] = c.dataset.n;
  j["dataset"]["seed"] = c.dataset.seed;
  j["dataset"]["mode"] = c.dataset.mode;
  j["dataset"]["standardize"] = c.dataset.standardize;
  if (!c.dataset.path.empty()) j["dataset"]["path"] = c.dataset.path.generic_string();
  j["dataset"]["egg"] = {{"dim", c.dataset.egg.dim},
                         {"r_in", c.dataset.egg.r_in},
                         {"r_mid", c.dataset.egg.r_mid},
                         {"r_out", c.dataset.egg.r_out},
                         {"per_class", c.dataset.egg.per_class},
                         {"seed", c.dataset.egg.seed}};
  j["widths"] = c.widths;
  json phases = json::array();
  for (const auto& p : c.schedule.phases) {
    phases.push_back({{"lr", p.learning_rate}, {"epochs", p.epochs}});
  }
  j["training"] = {{"phases", phases},
                   {"momentum", c.schedule.momentum},
                   {"batch_size", c.schedule.batch_size}};
  j["precision"] = c.precision;
  j["analysis"] = {{"eps_rel", c.analysis.eps_rel},
                   {"bins", c.analysis.bins},
                   {"k", c.analysis.k},
                   {"classes", c.analysis.classes},
                   {"excluded_classes", c.analysis.excluded_classes},
                   {"surrogate_seeds", c.analysis.surrogate_seeds},
                   {"dip_subsample", c.analysis.dip_subsample},
                   {"tuning_neurons", c.analysis.tuning_neurons},
                   {"eval_split", c.analysis.eval_split}};
  j["out_dir"] = c.out_dir.generic_string();
  return j;
}

// ---- shared helpers ----------------------------------------------------------

std::filesystem::path seed_directory(const ExperimentConfig& c, std::uint64_t seed) {
  return run_directory(c) / ("seed_" + std::to_string(seed));
}

std::vector<int> hidden_layer_indices(const Network& net) {
  std::vector<int> idx;
  for (int l = 0; l < net.layer_count(); ++l) {
    if (net.layers[l].activation == Activation::kRelu) idx.push_back(l);
  }
  return idx;
}

std::vector<int> resolve_classes(const AnalysisSettings& a, int n_classes) {
  if (!a.classes.empty()) return a.classes;
  std::vector<int> all(n_classes);
  std::iota(all.begin(), all.end(), 0);
  return all;
}

DipReportOptions dip_options(const ExperimentConfig& c, std::uint64_t seed, int n_classes) {
  DipReportOptions opts;
  opts.classes = resolve_classes(c.analysis, n_classes);
  opts.surrogate_seed_count = c.analysis.surrogate_seeds;
  opts.surrogate_seed = 1234 + seed * 1000003ull;
  opts.subsample_cap = c.analysis.dip_subsample;
  return opts;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::runtime_error("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string checksum_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

// Every regular file under `dir` except report.json, as sorted relative paths.
json enumerate_files(const std::filesystem::path& dir, std::vector<std::filesystem::path>* out) {
  std::vector<std::string> rel;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto r = std::filesystem::relative(entry.path(), dir).generic_string();
    if (r == "report.json" || r.ends_with(".tmp")) continue;
    rel.push_back(r);
  }
  std::sort(rel.begin(), rel.end());
  json files = json::array();
  for (const auto& r : rel) {
    files.push_back({{"path", r}, {"fnv1a64", checksum_hex(read_file(dir / r))}});
    if (out) out->push_back(dir / r);
  }
  return files;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  atomic_write_file(path, j.dump(2) + "\n");
}

// Deterministic scatter of a 2-d dataset plus optional overlay lines
// (each line given by unit normal u and offset o: the segment of u.x = o
// inside the data box).
std::string scatter_svg(const LabeledDataset& ds,
                        const std::vector<std::pair<Vector, double>>& lines,
                        std::size_t max_points_per_class = 1500) {
  if (ds.inputs.cols() != 2) throw std::invalid_argument("scatter_svg: 2-d data only");
  double lim = 1e-9;
  for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
    lim = std::max({lim, std::abs(ds.inputs(i, 0)), std::abs(ds.inputs(i, 1))});
  }
  lim *= 1.05;
  const double size = 520.0;
  AxisMap ax{-lim, lim, -lim, lim, 30.0, size - 10.0, size - 10.0, 30.0};
  SvgCanvas svg(size, size);
  svg.rect(ax.px(-lim), ax.py(lim), ax.px(lim) - ax.px(-lim), ax.py(-lim) - ax.py(lim), "white",
           "#888888");
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::vector<std::size_t> drawn(ds.n_classes, 0);
  const std::size_t stride =
      std::max<std::size_t>(1, ds.labels.size() / (max_points_per_class * ds.n_classes));
  for (std::size_t i = 0; i < ds.labels.size(); i += stride) {
    const int c = ds.labels[i];
    if (drawn[c] >= max_points_per_class) continue;
    ++drawn[c];
    svg.circle(ax.px(ds.inputs(i, 0)), ax.py(ds.inputs(i, 1)), 1.6, palette[c % 4]);
  }
  for (const auto& [u, o] : lines) {
    // u.x = o; direction t = perp(u); clip parametrically to the box.
    const double tx = -u[1], ty = u[0];
    const double cx = o * u[0], cy = o * u[1];
    const double span = 2.0 * lim * 1.5;
    svg.line(ax.px(cx - span * tx), ax.py(cy - span * ty), ax.px(cx + span * tx),
             ax.py(cy + span * ty), "#2ca02c", 1.0);
  }
  return svg.finish();
}

void write_recalls_csv(const std::filesystem::path& path, const SeparabilityReport& rep) {
  CsvWriter csv({"class", "recall"});
  for (std::size_t c = 0; c < rep.recall.size(); ++c) {
    csv.append_row({std::to_string(c), format_double(rep.recall[c])});
  }
  atomic_write_file(path, csv.str());
}

json recall_json(const SeparabilityReport& rep) {
  return {{"recall", rep.recall},
          {"balanced", rep.balanced()},
          {"threshold", rep.threshold},
          {"high_side_class1", rep.high_side_class1}};
}

}  // namespace

// ---- config ------------------------------------------------------------------

ExperimentConfig default_config(const std::string& profile) {
  ExperimentConfig c;
  c.dataset.kind = "poker";
  c.dataset.seed = 99;
  c.widths = {10, 100, 100, 10};
  c.schedule.momentum = 0.9;
  c.schedule.batch_size = 500;
  if (profile == "paper") {
    c.name = "poker_paper";
    c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    c.dataset.n = 1000000;
    c.schedule.phases = {{0.1, 50}, {0.01, 50}};
  } else if (profile == "desk") {
    c.name = "poker_desk";
    c.seeds = {1, 2, 3};
    c.dataset.n = 200000;
    c.schedule.phases = {{0.1, 15}, {0.01, 15}};
  } else {
    throw ValidationError("unknown profile '" + profile + "' (expected paper or desk)");
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ValidationError("config: name must be nonempty");
  if (name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
    throw ValidationError("config: name must not contain path separators");
  }
  if (seeds.empty()) throw ValidationError("config: seeds must be nonempty");
  if (widths.size() < 2) throw ValidationError("config: widths needs input and output sizes");
  for (int w : widths) {
    if (w <= 0) throw ValidationError("config: widths must be positive");
  }
  if (dataset.kind != "poker" && dataset.kind != "egg" && dataset.kind != "uci") {
    throw ValidationError("config: dataset.kind must be poker, egg, or uci");
  }
  if (dataset.kind == "poker" && dataset.mode != "uniform_ordered" &&
      dataset.mode != "exhaustive") {
    throw ValidationError("config: dataset.mode must be uniform_ordered or exhaustive");
  }
  if (dataset.kind == "uci" && dataset.path.empty()) {
    throw ValidationError("config: dataset.path required for uci data");
  }
  if (dataset.kind == "egg" &&
      !(dataset.egg.r_in > 0 && dataset.egg.r_in < dataset.egg.r_mid &&
        dataset.egg.r_mid < dataset.egg.r_out && dataset.egg.dim >= 1)) {
    throw ValidationError("config: egg radii must satisfy 0 < r_in < r_mid < r_out, dim >= 1");
  }
  if (precision != "f64" && precision != "f32") {
    throw ValidationError("config: precision must be f64 or f32");
  }
  try {
    schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  const auto& a = analysis;
  if (!(a.eps_rel > 0)) throw ValidationError("config: analysis.eps_rel must be > 0");
  if (a.bins < 2) throw ValidationError("config: analysis.bins must be >= 2");
  if (a.k < 0) throw ValidationError("config: analysis.k must be >= 0");
  if (a.surrogate_seeds < 1) throw ValidationError("config: analysis.surrogate_seeds must be >= 1");
  if (a.tuning_neurons < 0) throw ValidationError("config: analysis.tuning_neurons must be >= 0");
  if (!(a.eval_split >= 0 && a.eval_split < 1)) {
    throw ValidationError("config: analysis.eval_split must be in [0, 1)");
  }
  for (int c : a.excluded_classes) {
    if (c < 0) throw ValidationError("config: analysis.excluded_classes must be >= 0");
  }
  for (int c : a.classes) {
    if (c < 0) throw ValidationError("config: analysis.classes must be >= 0");
  }
  if (out_dir.empty()) throw ValidationError("config: out_dir must be nonempty");
}

ExperimentConfig parse_config_json(const std::string& text, const std::string& profile) {
  ExperimentConfig c = default_config(profile);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  check_keys(j, "config",
             {"name", "seeds", "dataset", "widths", "training", "precision", "analysis",
              "out_dir"});
  if (j.contains("name")) c.name = as_string(j["name"], "name");
  if (j.contains("seeds")) {
    if (!j["seeds"].is_array()) throw ValidationError("config: seeds must be an array");
    c.seeds.clear();
    for (std::size_t i = 0; i < j["seeds"].size(); ++i) {
      c.seeds.push_back(as_seed(j["seeds"][i], "seeds[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("dataset")) parse_dataset(j["dataset"], c.dataset);
  if (j.contains("widths")) c.widths = as_int_list(j["widths"], "widths");
  if (j.contains("training")) parse_training(j["training"], c.schedule);
  if (j.contains("precision")) c.precision = as_string(j["precision"], "precision");
  if (j.contains("analysis")) parse_analysis(j["analysis"], c.analysis);
  if (j.contains("out_dir")) c.out_dir = as_string(j["out_dir"], "out_dir");
  c.validate();
  return c;
}

// ---- datasets ------------------------------------------------------------------

LabeledDataset build_dataset(const DatasetSpec& spec) {
  LabeledDataset ds;
  if (spec.kind == "poker") {
    const PokerMode mode = spec.mode == "exhaustive" ? PokerMode::kExhaustiveCombinations
                                                     : PokerMode::kUniformOrdered;
    ds = generate_poker(spec.n, spec.seed, mode);
  } else if (spec.kind == "egg") {
    ds = generate_egg(spec.egg);
  } else if (spec.kind == "uci") {
    ds = load_uci_poker(spec.path).data;
  } else {
    throw ValidationError("dataset kind must be poker, egg, or uci");
  }
  if (spec.standardize) standardize_features(ds);
  return ds;
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& data,
                                                        double eval_split) {
  if (!(eval_split >= 0 && eval_split < 1)) {
    throw ValidationError("eval_split must be in [0, 1)");
  }
  if (eval_split == 0) return {data, data};
  const std::size_t n = data.labels.size();
  const std::size_t n_eval = static_cast<std::size_t>(std::llround(eval_split * n));
  if (n_eval == 0 || n_eval >= n) throw ValidationError("eval_split leaves an empty part");
  const std::size_t n_train = n - n_eval;
  auto part = [&](std::size_t start, std::size_t count) {
    LabeledDataset p;
    p.inputs = data.inputs.middleRows(static_cast<Eigen::Index>(start),
                                      static_cast<Eigen::Index>(count));
    p.labels.assign(data.labels.begin() + start, data.labels.begin() + start + count);
    p.n_classes = data.n_classes;
    p.provenance = data.provenance;
    return p;
  };
  return {part(0, n_train), part(n_train, n_eval)};
}

std::filesystem::path run_directory(const ExperimentConfig& config) {
  return config.out_dir / config.name;
}

// ---- pipeline stages -------------------------------------------------------------

void run_train_stage(const ExperimentConfig& config, std::uint64_t seed,
                     const LabeledDataset& train_data) {
  if (config.widths.front() != static_cast<int>(train_data.inputs.cols())) {
    throw ValidationError("config: widths[0] = " + std::to_string(config.widths.front()) +
                          " but the dataset has " + std::to_string(train_data.inputs.cols()) +
                          " features");
  }
  if (config.widths.back() < train_data.n_classes) {
    throw ValidationError("config: output width " + std::to_string(config.widths.back()) +
                          " below the dataset's " + std::to_string(train_data.n_classes) +
                          " classes");
  }
  const auto dir = seed_directory(config, seed);
  std::filesystem::create_directories(dir);

  Network net = init_network(config.widths, seed);
  TrainSchedule schedule = config.schedule;
  schedule.shuffle_seed = seed;
  schedule.use_float32 = config.precision == "f32";
  const TrainReport report = train(net, train_data, schedule);

  CsvWriter log({"epoch", "learning_rate", "loss", "accuracy"});
  for (const auto& e : report.epochs) {
    log.append_row({std::to_string(e.epoch), format_double(e.learning_rate),
                    format_double(e.loss), format_double(e.accuracy)});
  }
  atomic_write_file(dir / "train_log.csv", log.str());
  save_network(net, dir / "model.json");
}

namespace {

struct PcaPass {
  PcaSummary input;
  std::vector<PcaSummary> pre, post;  // per hidden layer
};

PcaPass pca_pass(const Network& net, const Matrix& inputs, const std::vector<int>& hidden) {
  StreamingPca input_acc;
  std::vector<StreamingPca> pre_acc(hidden.size()), post_acc(hidden.size());
  const Eigen::Index chunk = 20000;
  for (Eigen::Index start = 0; start < inputs.rows(); start += chunk) {
    const Eigen::Index m = std::min(chunk, inputs.rows() - start);
    const Matrix batch = inputs.middleRows(start, m);
    const ActivationTrace trace = forward(net, batch);
    input_acc.add(batch);
    for (std::size_t h = 0; h < hidden.size(); ++h) {
      pre_acc[h].add(trace.preactivations[hidden[h]]);
      post_acc[h].add(trace.activations[hidden[h]]);
    }
  }
  PcaPass out;
  out.input = input_acc.finalize();
  for (std::size_t h = 0; h < hidden.size(); ++h) {
    out.pre.push_back(pre_acc[h].finalize());
    out.post.push_back(post_acc[h].finalize());
  }
  return out;
}

void write_pca_csv(const std::filesystem::path& path, const PcaPass& pass) {
  CsvWriter csv({"layer", "stage", "index", "eigenvalue"});
  for (std::size_t h = 0; h < pass.pre.size(); ++h) {
    for (int stage = 0; stage < 2; ++stage) {
      const PcaSummary& s = stage == 0 ? pass.pre[h] : pass.post[h];
      for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i) {
        csv.append_row({std::to_string(h + 1), stage == 0 ? "pre" : "post", std::to_string(i),
                        format_double(s.eigenvalues[i])});
      }
    }
  }
  atomic_write_file(path, csv.str());
}

void write_dip_csvs(const std::filesystem::path& dir, const DipReport& dips) {
  CsvWriter trained({"layer", "neuron", "class", "dip", "classification"});
  for (std::size_t l = 0; l < dips.dip.size(); ++l) {
    for (std::size_t n = 0; n < dips.dip[l].size(); ++n) {
      const char* cls = dips.is_large[l][n] ? "large" : "small";
      for (std::size_t ci = 0; ci < dips.classes.size(); ++ci) {
        trained.append_row({std::to_string(l + 1), std::to_string(n),
                            std::to_string(dips.classes[ci]), format_double(dips.dip[l][n][ci]),
                            cls});
      }
    }
  }
  atomic_write_file(dir / "dips.csv", trained.str());

  CsvWriter surrogate({"layer", "neuron", "class", "dip"});
  for (std::size_t l = 0; l < dips.surrogate_dip.size(); ++l) {
    for (std::size_t n = 0; n < dips.surrogate_dip[l].size(); ++n) {
      for (std::size_t ci = 0; ci < dips.classes.size(); ++ci) {
        surrogate.append_row({std::to_string(l + 1), std::to_string(n),
                              std::to_string(dips.classes[ci]),
                              format_double(dips.surrogate_dip[l][n][ci])});
      }
    }
  }
  atomic_write_file(dir / "surrogates.csv", surrogate.str());
}

void write_angles_csv(const std::filesystem::path& path, const Network& net, const PcaPass& pass,
                      const std::vector<int>& hidden, double eps_rel) {
  CsvWriter csv({"layer", "neuron", "theta"});
  for (std::size_t h = 0; h < hidden.size(); ++h) {
    const PcaSummary& input_pca = h == 0 ? pass.input : pass.post[h - 1];
    const AngleReport rep = angle_report(net, hidden[h], input_pca, eps_rel);
    for (std::size_t n = 0; n < rep.theta.size(); ++n) {
      csv.append_row({std::to_string(h + 1), std::to_string(n), format_double(rep.theta[n])});
    }
  }
  atomic_write_file(path, csv.str());
}

void write_tuning_csvs(const std::filesystem::path& dir, const ExperimentConfig& config,
                       const Network& net, const LabeledDataset& data, const DipReport& dips) {
  if (config.analysis.tuning_neurons == 0) return;
  std::filesystem::create_directories(dir / "tuning");
  const std::size_t cap = 50000;
  const std::size_t n = data.labels.size();
  const std::size_t stride = std::max<std::size_t>(1, (n + cap - 1) / cap);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; i += stride) rows.push_back(i);
  Matrix sub(rows.size(), data.inputs.cols());
  std::vector<int> sub_labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sub.row(static_cast<Eigen::Index>(i)) = data.inputs.row(static_cast<Eigen::Index>(rows[i]));
    sub_labels[i] = data.labels[rows[i]];
  }
  const ActivationTrace trace = forward(net, sub);
  const TuningCurves curves = tuning_histograms(trace, sub_labels, dips.classes,
                                                config.analysis.bins);

  const int per = config.analysis.tuning_neurons;
  for (std::size_t l = 0; l < dips.dip.size(); ++l) {
    const int width = static_cast<int>(dips.dip[l].size());
    std::vector<int> order(width);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return dips.max_class_dip(l, a) > dips.max_class_dip(l, b);
    });
    std::set<int> chosen;
    for (int i = 0; i < per && i < width; ++i) {
      chosen.insert(order[i]);  // strongest dips
      chosen.insert(i);         // fixed sample of the layer
    }
    for (int neuron : chosen) {
      const NeuronTuning* tuning = nullptr;
      for (const auto& t : curves.neurons) {
        if (t.layer == dips.layer_index[l] && t.neuron == neuron) { tuning = &t; break; }
      }
      if (!tuning) throw std::runtime_error("tuning curve missing for selected neuron");
      CsvWriter csv({"class", "bin_index", "bin_lo", "bin_hi", "count"});
      for (std::size_t ci = 0; ci < curves.classes.size(); ++ci) {
        for (std::size_t b = 0; b + 1 < tuning->bin_edges.size(); ++b) {
          csv.append_row({std::to_string(curves.classes[ci]), std::to_string(b),
                          format_double(tuning->bin_edges[b]),
                          format_double(tuning->bin_edges[b + 1]),
                          std::to_string(tuning->counts[ci][b])});
        }
      }
      atomic_write_file(dir / "tuning" /
                            ("layer" + std::to_string(l + 1) + "_neuron" + std::to_string(neuron) +
                             ".csv"),
                        csv.str());
    }
  }
}

void write_ablation_csv(const std::filesystem::path& path, const ExperimentConfig& config,
                        const Network& net, const LabeledDataset& data, const DipReport& dips) {
  auto join = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ';';
      s += std::to_string(v[i]);
    }
    return s.empty() ? std::string("-") : s;
  };
  CsvWriter csv({"layer", "f1_intact", "f1_large_silenced", "f1_small_silenced", "large_set",
                 "small_set"});
  for (std::size_t l = 0; l < dips.dip.size(); ++l) {
    const AblationResult res = ablation_experiment(net, data, dips, static_cast<int>(l),
                                                   config.analysis.k,
                                                   config.analysis.excluded_classes);
    csv.append_row({std::to_string(l + 1), format_double(res.f1_intact),
                    format_double(res.f1_large_silenced), format_double(res.f1_small_silenced),
                    join(res.large_set), join(res.small_set)});
  }
  atomic_write_file(path, csv.str());
}

void analysis_artifacts(const ExperimentConfig& config, std::uint64_t seed, const Network& net,
                        const LabeledDataset& data, const DipReport& dips) {
  const auto dir = seed_directory(config, seed);
  const std::vector<int> hidden = hidden_layer_indices(net);
  const PcaPass pass = pca_pass(net, data.inputs, hidden);
  write_pca_csv(dir / "pca.csv", pass);
  write_dip_csvs(dir, dips);
  write_angles_csv(dir / "angles.csv", net, pass, hidden, config.analysis.eps_rel);
  write_tuning_csvs(dir, config, net, data, dips);
}

}  // namespace

void run_analysis_stage(const ExperimentConfig& config, std::uint64_t seed,
                        const LabeledDataset& eval_data) {
  const auto dir = seed_directory(config, seed);
  const Network net = load_network(dir / "model.json");
  const DipReport dips = dip_report(net, eval_data, dip_options(config, seed, eval_data.n_classes));
  analysis_artifacts(config, seed, net, eval_data, dips);
}

void run_ablation_stage(const ExperimentConfig& config, std::uint64_t seed,
                        const LabeledDataset& eval_data) {
  const auto dir = seed_directory(config, seed);
  const Network net = load_network(dir / "model.json");
  const DipReport dips = dip_report(net, eval_data, dip_options(config, seed, eval_data.n_classes));
  write_ablation_csv(dir / "ablation.csv", config, net, eval_data, dips);
}

// ---- report --------------------------------------------------------------------

namespace {

// Reads one seed directory back into the aggregate report; everything is
// recomputed from the CSV artifacts so `report` works as a standalone stage.
json seed_report(const ExperimentConfig& config, std::uint64_t seed) {
  const auto dir = seed_directory(config, seed);
  json s;
  s["seed"] = seed;
  if (!std::filesystem::exists(dir / "model.json")) {
    s["status"] = "failed";
    s["error"] = std::filesystem::exists(dir / "error.txt") ? read_file(dir / "error.txt")
                                                            : "missing artifacts";
    return s;
  }
  s["status"] = "ok";

  if (std::filesystem::exists(dir / "train_log.csv")) {
    const CsvTable log = load_csv_file(dir / "train_log.csv");
    if (!log.rows.empty()) {
      s["final_loss"] = parse_double(log.rows.back()[2]);
      s["final_accuracy"] = parse_double(log.rows.back()[3]);
    }
    s["epochs"] = log.rows.size();
  }

  std::map<int, json> layers;

  if (std::filesystem::exists(dir / "pca.csv")) {
    const CsvTable pca = load_csv_file(dir / "pca.csv");
    std::map<std::pair<int, std::string>, std::vector<double>> eigs;
    for (const auto& row : pca.rows) {
      eigs[{std::stoi(row[0]), row[1]}].push_back(parse_double(row[3]));
    }
    for (const auto& [key, values] : eigs) {
      const double trace = std::accumulate(values.begin(), values.end(), 0.0);
      int dim = 0;
      double sq = 0.0;
      for (double v : values) {
        if (trace > 0 && v > config.analysis.eps_rel * trace) ++dim;
        sq += v * v;
      }
      json& layer = layers[key.first];
      layer["dim_" + key.second] = dim;
      layer["participation_" + key.second] = sq > 0 ? trace * trace / sq : 0.0;
    }
  }

  if (std::filesystem::exists(dir / "dips.csv") &&
      std::filesystem::exists(dir / "surrogates.csv")) {
    auto max_per_neuron = [](const CsvTable& t) {
      std::map<int, std::map<int, double>> by_layer;  // layer -> neuron -> max dip
      for (const auto& row : t.rows) {
        double& slot = by_layer[std::stoi(row[0])][std::stoi(row[1])];
        slot = std::max(slot, parse_double(row[3]));
      }
      return by_layer;
    };
    const CsvTable dips = load_csv_file(dir / "dips.csv");
    const auto trained = max_per_neuron(dips);
    std::map<int, int> large_counts;
    std::map<int, std::set<int>> seen;
    for (const auto& row : dips.rows) {
      const int layer = std::stoi(row[0]), neuron = std::stoi(row[1]);
      if (row[4] == "large" && seen[layer].insert(neuron).second) ++large_counts[layer];
    }
    const auto surrogate = max_per_neuron(load_csv_file(dir / "surrogates.csv"));
    for (const auto& [layer, neurons] : trained) {
      std::vector<double> vals;
      for (const auto& [n, d] : neurons) vals.push_back(d);
      json& l = layers[layer];
      l["dip_median_trained"] = median(vals);
      l["neurons"] = vals.size();
      l["large_count"] = large_counts.count(layer) ? large_counts[layer] : 0;
      if (surrogate.count(layer)) {
        std::vector<double> sv;
        double smax = 0.0;
        for (const auto& [n, d] : surrogate.at(layer)) {
          sv.push_back(d);
          smax = std::max(smax, d);
        }
        l["dip_median_surrogate"] = median(sv);
        l["surrogate_max"] = smax;
      }
    }
  }

  if (std::filesystem::exists(dir / "angles.csv")) {
    std::map<int, std::vector<double>> by_layer;
    for (const auto& row : load_csv_file(dir / "angles.csv").rows) {
      by_layer[std::stoi(row[0])].push_back(parse_double(row[2]));
    }
    for (const auto& [layer, thetas] : by_layer) {
      json& l = layers[layer];
      l["theta_min"] = *std::min_element(thetas.begin(), thetas.end());
      l["theta_median"] = median(thetas);
    }
  }

  if (std::filesystem::exists(dir / "ablation.csv")) {
    for (const auto& row : load_csv_file(dir / "ablation.csv").rows) {
      json& l = layers[std::stoi(row[0])];
      l["f1_intact"] = parse_double(row[1]);
      l["f1_large_silenced"] = parse_double(row[2]);
      l["f1_small_silenced"] = parse_double(row[3]);
      if (std::stoi(row[0]) == 1) s["f1"] = parse_double(row[1]);
    }
  }

  json layer_list = json::array();
  for (auto& [idx, l] : layers) {
    l["layer"] = idx;
    layer_list.push_back(l);
  }
  s["layers"] = layer_list;
  return s;
}

}  // namespace

RunArtifacts write_report(const ExperimentConfig& config) {
  const auto dir = run_directory(config);
  if (!std::filesystem::exists(dir)) {
    throw std::runtime_error("run directory missing: " + dir.string());
  }
  json report;
  report["name"] = config.name;
  json seeds = json::array();
  std::vector<double> f1s;
  for (std::uint64_t seed : config.seeds) {
    json s = seed_report(config, seed);
    if (s.contains("f1")) f1s.push_back(s["f1"].get<double>());
    seeds.push_back(std::move(s));
  }
  report["seeds"] = seeds;
  json agg;
  agg["seeds_ok"] = f1s.size();
  if (!f1s.empty()) {
    agg["f1_mean"] = std::accumulate(f1s.begin(), f1s.end(), 0.0) / f1s.size();
    agg["f1_min"] = *std::min_element(f1s.begin(), f1s.end());
    agg["f1_max"] = *std::max_element(f1s.begin(), f1s.end());
  }
  report["aggregate"] = agg;

  RunArtifacts artifacts;
  artifacts.run_dir = dir;
  report["files"] = enumerate_files(dir, &artifacts.files);
  write_json_file(dir / "report.json", report);
  artifacts.files.push_back(dir / "report.json");
  return artifacts;
}

RunArtifacts run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto dir = run_directory(config);
  std::filesystem::create_directories(dir);
  write_json_file(dir / "config.json", config_to_json(config));

  const LabeledDataset data = build_dataset(config.dataset);
  LabeledDataset train_part, eval_part;
  const bool split = config.analysis.eval_split > 0;
  if (split) {
    auto parts = split_dataset(data, config.analysis.eval_split);
    train_part = std::move(parts.first);
    eval_part = std::move(parts.second);
  }
  const LabeledDataset& train_data = split ? train_part : data;
  const LabeledDataset& eval_data = split ? eval_part : data;

  for (std::uint64_t seed : config.seeds) {
    const auto sd = seed_directory(config, seed);
    std::filesystem::create_directories(sd);
    try {
      run_train_stage(config, seed, train_data);
      run_analysis_stage(config, seed, eval_data);
      run_ablation_stage(config, seed, eval_data);
      std::error_code ec;
      std::filesystem::remove(sd / "error.txt", ec);
    } catch (const std::exception& e) {
      atomic_write_file(sd / "error.txt", std::string(e.what()) + "\n");
      std::error_code ec;
      std::filesystem::remove(sd / "model.json", ec);  // marks the seed failed
    }
  }
  return write_report(config);
}

// ---- toys ---------------------------------------------------------------------

namespace {

json toy_fold(const ToyParams& params, const std::filesystem::path& dir) {
  EggSpec egg = params.egg.value_or(EggSpec{});
  if (!params.egg) egg.dim = params.dim;
  const LabeledDataset ds = generate_egg(egg);
  const Network net = build_fold_solution(egg.dim, egg);
  const SeparabilityReport rep = evaluate_separability(net, ds);
  save_network(net, dir / "model.json");
  write_recalls_csv(dir / "recalls.csv", rep);
  if (egg.dim == 2) {
    const Matrix dirs = simplex_directions(2);
    std::vector<std::pair<Vector, double>> lines;
    const double d = (egg.r_in + egg.r_mid) / 2.0;
    for (Eigen::Index i = 0; i < dirs.rows(); ++i) {
      lines.push_back({dirs.row(i).transpose(), d});
    }
    atomic_write_file(dir / "scatter.svg", scatter_svg(ds, lines));
  }
  json j;
  j["separability"] = recall_json(rep);
  j["hidden_units"] = egg.dim + 1;
  j["fold_offset"] = (egg.r_in + egg.r_mid) / 2.0;
  j["egg"] = {{"dim", egg.dim},   {"r_in", egg.r_in},           {"r_mid", egg.r_mid},
              {"r_out", egg.r_out}, {"per_class", egg.per_class}, {"seed", egg.seed}};
  return j;
}

json toy_shear(const ToyParams& params, const std::filesystem::path& dir) {
  EggSpec egg;
  if (params.egg) {
    egg = *params.egg;
  } else {
    egg.dim = 2;
    egg.r_in = 0.9;   // thin ring across a wide gap: the geometry the
    egg.r_mid = 2.8;  // rotate-saturate cell separates cleanly at depth 7
    egg.r_out = 3.1;
    egg.per_class = 3000;
    egg.seed = 11;
  }
  const LabeledDataset search_ds = generate_egg(egg);
  EggSpec eval_spec = egg;
  eval_spec.per_class = 20000;
  eval_spec.seed = egg.seed + 1;
  const LabeledDataset eval_ds = generate_egg(eval_spec);

  ShearSearchOptions opts;
  opts.depth = params.depth;
  opts.restarts = params.restarts;
  const ShearSearchResult res = build_shear_network(search_ds, opts);
  ReadoutSpec readout;
  readout.direction = res.readout_direction;
  const SeparabilityReport rep = evaluate_separability(res.net, eval_ds, readout);

  ShearSearchOptions control = opts;
  control.depth = 1;
  const ShearSearchResult res1 = build_shear_network(search_ds, control);
  ReadoutSpec readout1;
  readout1.direction = res1.readout_direction;
  const SeparabilityReport rep1 = evaluate_separability(res1.net, eval_ds, readout1);

  double unroll_diff = 0.0;
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(100, eval_ds.inputs.rows()); ++i) {
    const Vector iterated = iterate_recurrent(res.cell_weights, res.cell_biases,
                                              eval_ds.inputs.row(i).transpose(), opts.depth);
    const ActivationTrace trace = forward(res.net, eval_ds.inputs.row(i));
    unroll_diff = std::max(unroll_diff,
                           (trace.logits().row(0).transpose() - iterated).cwiseAbs().maxCoeff());
  }

  save_network(res.net, dir / "model.json");
  json cell;
  cell["w"] = std::vector<std::vector<double>>();
  for (Eigen::Index r = 0; r < res.cell_weights.rows(); ++r) {
    std::vector<double> row(res.cell_weights.cols());
    for (Eigen::Index c = 0; c < res.cell_weights.cols(); ++c) row[c] = res.cell_weights(r, c);
    cell["w"].push_back(row);
  }
  cell["b"] = std::vector<double>(res.cell_biases.data(),
                                  res.cell_biases.data() + res.cell_biases.size());
  cell["readout"] = std::vector<double>(
      res.readout_direction.data(), res.readout_direction.data() + res.readout_direction.size());
  cell["depth"] = params.depth;
  write_json_file(dir / "cell.json", cell);
  write_recalls_csv(dir / "recalls.csv", rep);
  if (egg.dim == 2) atomic_write_file(dir / "scatter.svg", scatter_svg(eval_ds, {}));

  json j;
  j["separability"] = recall_json(rep);
  j["search_recalls"] = recall_json(res.recalls);
  j["depth1_control"] = recall_json(rep1);
  j["best_restart"] = res.best_restart;
  j["passed"] = res.passed;
  j["unroll_vs_iterate_max_diff"] = unroll_diff;
  return j;
}

json toy_squash(const ToyParams& params, const std::filesystem::path& dir) {
  SquashChain chain;
  const double deg = M_PI / 180.0;
  if (params.chain == "half_circle") {
    chain = arc_squash_chain(-75.0 * deg, 75.0 * deg, 181);
  } else if (params.chain == "full_circle") {
    chain = arc_squash_chain(0.0, 2.0 * M_PI, 721);
  } else if (params.chain == "no_op") {
    chain = arc_squash_chain(-30.0 * deg, 30.0 * deg, 5);
    for (auto& step : chain.steps) step.offset = -10.0;  // beyond the data: nothing squashed
  } else {
    chain = load_chain(params.chain);
  }
  save_chain(chain, dir / "chain.json");

  const LabeledDataset ds = make_half_disc_dataset(3000, 5);
  const ChainCheck check = validate_squash_chain(chain);
  json j;
  j["chain_steps"] = chain.steps.size();
  if (!check.ok) {
    j["violation"] = {{"step", check.step}, {"reason", check.reason}};
    write_json_file(dir / "report.json", j);
    throw ValidationError("squash chain invalid at step " + std::to_string(check.step) + ": " +
                          check.reason);
  }
  double radius = 0.0;
  for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
    radius = std::max(radius, ds.inputs.row(i).norm());
  }
  const Network net = build_squash_chain_network(chain, 2, radius);
  const SeparabilityReport rep = best_direction_separability(net, ds, 360);

  save_network(net, dir / "model.json");
  write_recalls_csv(dir / "recalls.csv", rep);
  std::vector<std::pair<Vector, double>> lines;
  for (std::size_t i = 0; i < chain.steps.size(); i += std::max<std::size_t>(1, chain.steps.size() / 8)) {
    lines.push_back({chain.steps[i].normal, chain.steps[i].offset});
  }
  atomic_write_file(dir / "scatter.svg", scatter_svg(ds, lines));
  // The transformed representation, to make the collapse visible.
  LabeledDataset out = ds;
  const Eigen::Index chunk = 20000;
  for (Eigen::Index start = 0; start < ds.inputs.rows(); start += chunk) {
    const Eigen::Index m = std::min(chunk, ds.inputs.rows() - start);
    out.inputs.middleRows(start, m) = forward(net, ds.inputs.middleRows(start, m)).logits();
  }
  atomic_write_file(dir / "scatter_out.svg", scatter_svg(out, {}));

  j["separability"] = recall_json(rep);
  j["data_radius"] = radius;
  return j;
}

}  // namespace

RunArtifacts run_toy(const ToyParams& params) {
  if (params.kind != "egg_fold" && params.kind != "egg_shear" && params.kind != "squash_chain") {
    throw ValidationError("toy kind must be egg_fold, egg_shear, or squash_chain");
  }
  if (params.kind != "squash_chain" && params.dim < 1) {
    throw ValidationError("toy: dim must be >= 1");
  }
  if (params.depth < 1) throw ValidationError("toy: depth must be >= 1");
  if (params.restarts < 1) throw ValidationError("toy: restarts must be >= 1");
  const std::string name = params.name.empty() ? "toy_" + params.kind : params.name;
  const auto dir = params.out_dir / name;
  std::filesystem::create_directories(dir);

  json j;
  j["kind"] = params.kind;
  if (params.kind == "egg_fold") {
    j.update(toy_fold(params, dir));
  } else if (params.kind == "egg_shear") {
    j.update(toy_shear(params, dir));
  } else {
    j.update(toy_squash(params, dir));
  }

  RunArtifacts artifacts;
  artifacts.run_dir = dir;
  j["files"] = enumerate_files(dir, &artifacts.files);
  write_json_file(dir / "report.json", j);
  artifacts.files.push_back(dir / "report.json");
  return artifacts;
}

}  // namespace foldnet
