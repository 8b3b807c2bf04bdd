#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "foldnet/csv.hpp"
#include "foldnet/experiment.hpp"
#include "foldnet/svg.hpp"
#include "foldnet/util.hpp"

namespace foldnet {

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};
const char* kSurrogateGreen = "#2ca02c";

CsvTable require_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("missing artifact: " + path.string());
  }
  return load_csv_file(path);
}

std::vector<std::uint64_t> histogram(const std::vector<double>& values, double lo, double hi,
                                     int bins) {
  std::vector<std::uint64_t> counts(bins, 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);
    ++counts[b];
  }
  return counts;
}

void draw_frame(SvgCanvas& svg, const AxisMap& ax, const std::string& title) {
  svg.rect(ax.px0, ax.py1, ax.px1 - ax.px0, ax.py0 - ax.py1, "none", "#444444");
  svg.text((ax.px0 + ax.px1) / 2, ax.py1 - 6, title, 12.0, "middle");
}

void draw_hist(SvgCanvas& svg, const AxisMap& ax, const std::vector<std::uint64_t>& counts,
               const std::string& fill) {
  const double peak = std::max<std::uint64_t>(
      1, *std::max_element(counts.begin(), counts.end()));
  const double w = (ax.px1 - ax.px0) / counts.size();
  for (std::size_t b = 0; b < counts.size(); ++b) {
    const double h = counts[b] / peak;
    if (counts[b] == 0) continue;
    svg.rect(ax.px0 + b * w, ax.py(h * (ax.y1 - ax.y0)), w * 0.9,
             ax.py0 - ax.py(h * (ax.y1 - ax.y0)), fill);
  }
}

std::filesystem::path render_pca(const std::filesystem::path& dir) {
  const CsvTable t = require_csv(dir / "pca.csv");
  if (t.rows.empty()) throw std::runtime_error("pca.csv is empty: " + (dir / "pca.csv").string());
  std::map<std::pair<int, std::string>, std::vector<double>> series;
  for (const auto& row : t.rows) series[{std::stoi(row[0]), row[1]}].push_back(parse_double(row[3]));

  const int max_idx = 30;
  SvgCanvas svg(640, 420);
  AxisMap ax{0, static_cast<double>(max_idx), -12.0, 0.0, 50, 620, 390, 40};
  draw_frame(svg, ax, "eigenvalue spectra (log10 of eigenvalue / trace)");
  int si = 0;
  for (const auto& [key, eigs] : series) {
    const double trace = std::max(1e-300, std::accumulate(eigs.begin(), eigs.end(), 0.0));
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < eigs.size() && i < static_cast<std::size_t>(max_idx); ++i) {
      const double y = std::max(-12.0, std::log10(std::max(1e-300, eigs[i] / trace)));
      pts.push_back({ax.px(static_cast<double>(i)), ax.py(y)});
    }
    const char* color = kPalette[si % 8];
    svg.polyline(pts, color, 1.5);
    svg.text(460, 60.0 + 16.0 * si,
             "layer " + std::to_string(key.first) + " " + key.second, 11.0, "start");
    svg.line(440, 56.0 + 16.0 * si, 455, 56.0 + 16.0 * si, color, 2.0);
    ++si;
  }
  const auto out = dir / "pca.svg";
  atomic_write_file(out, svg.finish());
  return out;
}

std::filesystem::path render_dips(const std::filesystem::path& dir) {
  const CsvTable t = require_csv(dir / "dips.csv");
  if (t.rows.empty()) throw std::runtime_error("dips.csv is empty: " + (dir / "dips.csv").string());
  // Per layer, max-over-classes dip per neuron for trained and surrogate.
  auto collapse = [](const CsvTable& table) {
    std::map<int, std::map<int, double>> acc;
    for (const auto& row : table.rows) {
      double& slot = acc[std::stoi(row[0])][std::stoi(row[1])];
      slot = std::max(slot, parse_double(row[3]));
    }
    std::map<int, std::vector<double>> out;
    for (const auto& [layer, neurons] : acc) {
      for (const auto& [n, d] : neurons) out[layer].push_back(d);
    }
    return out;
  };
  const auto trained = collapse(t);
  const auto surrogate = collapse(require_csv(dir / "surrogates.csv"));

  const int panels = static_cast<int>(trained.size());
  const double panel_h = 220.0;
  SvgCanvas svg(640, panels * panel_h + 20);
  int pi = 0;
  for (const auto& [layer, values] : trained) {
    double hi = 1e-6;
    for (double v : values) hi = std::max(hi, v);
    if (surrogate.count(layer)) {
      for (double v : surrogate.at(layer)) hi = std::max(hi, v);
    }
    hi *= 1.05;
    AxisMap ax{0, hi, 0, 1, 50, 620, (pi + 1) * panel_h, pi * panel_h + 40.0};
    draw_frame(svg, ax, "dip per neuron, layer " + std::to_string(layer) +
                            " (blue trained, green surrogate)");
    draw_hist(svg, ax, histogram(values, 0, hi, 30), kPalette[0]);
    if (surrogate.count(layer)) {
      const auto counts = histogram(surrogate.at(layer), 0, hi, 30);
      const double peak = std::max<std::uint64_t>(
          1, *std::max_element(counts.begin(), counts.end()));
      std::vector<std::pair<double, double>> pts;
      const double w = (ax.px1 - ax.px0) / counts.size();
      for (std::size_t b = 0; b < counts.size(); ++b) {
        const double y = ax.py(counts[b] / peak);
        pts.push_back({ax.px0 + b * w, y});
        pts.push_back({ax.px0 + (b + 1) * w, y});
      }
      svg.polyline(pts, kSurrogateGreen, 1.5);
    }
    ++pi;
  }
  const auto out = dir / "dips.svg";
  atomic_write_file(out, svg.finish());
  return out;
}

std::filesystem::path render_angles(const std::filesystem::path& dir) {
  const CsvTable t = require_csv(dir / "angles.csv");
  if (t.rows.empty()) {
    throw std::runtime_error("angles.csv is empty: " + (dir / "angles.csv").string());
  }
  std::map<int, std::vector<double>> by_layer;
  for (const auto& row : t.rows) by_layer[std::stoi(row[0])].push_back(parse_double(row[2]));
  const double panel_h = 220.0;
  SvgCanvas svg(640, by_layer.size() * panel_h + 20);
  int pi = 0;
  for (const auto& [layer, thetas] : by_layer) {
    AxisMap ax{0, M_PI / 2, 0, 1, 50, 620, (pi + 1) * panel_h, pi * panel_h + 40.0};
    draw_frame(svg, ax, "hyperplane-subspace angles, layer " + std::to_string(layer));
    draw_hist(svg, ax, histogram(thetas, 0, M_PI / 2, 30), kPalette[3]);
    ++pi;
  }
  const auto out = dir / "angles.svg";
  atomic_write_file(out, svg.finish());
  return out;
}

std::filesystem::path render_ablation(const std::filesystem::path& dir) {
  const CsvTable t = require_csv(dir / "ablation.csv");
  if (t.rows.empty()) {
    throw std::runtime_error("ablation.csv is empty: " + (dir / "ablation.csv").string());
  }
  SvgCanvas svg(640, 320);
  AxisMap ax{0, static_cast<double>(t.rows.size()), 0, 1, 50, 620, 290, 40};
  draw_frame(svg, ax, "macro-F1: intact / large dips silenced / small dips silenced");
  const double group = (ax.px1 - ax.px0) / t.rows.size();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (int v = 0; v < 3; ++v) {
      const double f1 = parse_double(t.rows[r][1 + v]);
      const double x = ax.px0 + r * group + (v + 0.5) * group / 4;
      svg.rect(x, ax.py(f1), group / 5, ax.py0 - ax.py(f1), kPalette[v]);
    }
    svg.text(ax.px0 + (r + 0.5) * group, ax.py0 + 16, "layer " + t.rows[r][0], 11.0, "middle");
  }
  const auto out = dir / "ablation.svg";
  atomic_write_file(out, svg.finish());
  return out;
}

std::vector<std::filesystem::path> render_tuning(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> outs;
  const auto tuning_dir = dir / "tuning";
  if (!std::filesystem::exists(tuning_dir)) return outs;
  std::vector<std::filesystem::path> csvs;
  for (const auto& entry : std::filesystem::directory_iterator(tuning_dir)) {
    if (entry.path().extension() == ".csv") csvs.push_back(entry.path());
  }
  std::sort(csvs.begin(), csvs.end());
  for (const auto& csv_path : csvs) {
    const CsvTable t = load_csv_file(csv_path);
    std::map<int, std::vector<std::pair<double, double>>> per_class;  // class -> (center, count)
    double lo = 0, hi = 0;
    std::uint64_t peak = 1;
    for (const auto& row : t.rows) {
      const double a = parse_double(row[2]), b = parse_double(row[3]);
      lo = std::min(lo, a);
      hi = std::max(hi, b);
      const double count = parse_double(row[4]);
      peak = std::max<std::uint64_t>(peak, static_cast<std::uint64_t>(count));
      per_class[std::stoi(row[0])].push_back({(a + b) / 2, count});
    }
    SvgCanvas svg(640, 320);
    AxisMap ax{lo, hi, 0, static_cast<double>(peak), 50, 620, 290, 40};
    draw_frame(svg, ax, csv_path.stem().string() + " preactivation tuning");
    svg.line(ax.px(0.0), ax.py0, ax.px(0.0), ax.py1, "black", 1.5);  // folding edge
    int ci = 0;
    for (const auto& [cls, pts] : per_class) {
      std::vector<std::pair<double, double>> line;
      for (const auto& [x, y] : pts) line.push_back({ax.px(x), ax.py(y)});
      svg.polyline(line, kPalette[ci % 8], 1.2);
      ++ci;
    }
    auto out = csv_path;
    out.replace_extension(".svg");
    atomic_write_file(out, svg.finish());
    outs.push_back(out);
  }
  return outs;
}

std::vector<std::filesystem::path> render_seed_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  files.push_back(render_pca(dir));
  files.push_back(render_dips(dir));
  files.push_back(render_angles(dir));
  files.push_back(render_ablation(dir));
  const auto tuning = render_tuning(dir);
  files.insert(files.end(), tuning.begin(), tuning.end());
  return files;
}

}  // namespace

std::vector<std::filesystem::path> render_plots(const std::filesystem::path& run_dir) {
  if (!std::filesystem::exists(run_dir)) {
    throw std::runtime_error("run directory missing: " + run_dir.string());
  }
  if (std::filesystem::exists(run_dir / "pca.csv")) return render_seed_dir(run_dir);
  std::vector<std::filesystem::path> seed_dirs;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
    if (entry.is_directory() && entry.path().filename().string().starts_with("seed_") &&
        std::filesystem::exists(entry.path() / "pca.csv")) {
      seed_dirs.push_back(entry.path());
    }
  }
  if (seed_dirs.empty()) {
    throw std::runtime_error("missing artifact: " + (run_dir / "pca.csv").string());
  }
  std::sort(seed_dirs.begin(), seed_dirs.end());
  std::vector<std::filesystem::path> files;
  for (const auto& dir : seed_dirs) {
    const auto f = render_seed_dir(dir);
    files.insert(files.end(), f.begin(), f.end());
  }
  return files;
}

}  // namespace foldnet
