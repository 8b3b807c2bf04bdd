#include "foldnet/observables.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "foldnet/rng.hpp"

namespace foldnet {

// ---- streaming PCA ---------------------------------------------------------

void StreamingPca::add(const Matrix& batch) {
  if (batch.rows() == 0) return;
  if (count_ == 0) {
    mean_ = Vector::Zero(batch.cols());
    m2_ = Matrix::Zero(batch.cols(), batch.cols());
  } else if (batch.cols() != mean_.size()) {
    throw std::invalid_argument("streaming_pca: batch dimension mismatch");
  }
  // Chan et al. pairwise merge of (count, mean, scatter).
  const double nb = static_cast<double>(batch.rows());
  const Vector mean_b = batch.colwise().mean();
  Matrix centered = batch.rowwise() - mean_b.transpose();
  Matrix m2_b = centered.transpose() * centered;
  const double na = static_cast<double>(count_);
  if (count_ == 0) {
    mean_ = mean_b;
    m2_ = std::move(m2_b);
  } else {
    const Vector delta = mean_b - mean_;
    m2_ += m2_b + (na * nb / (na + nb)) * (delta * delta.transpose());
    mean_ += (nb / (na + nb)) * delta;
  }
  count_ += batch.rows();
}

PcaSummary StreamingPca::finalize() const {
  if (count_ < 2) throw std::invalid_argument("streaming_pca: need at least 2 samples");
  PcaSummary out;
  out.count = count_;
  out.mean = mean_;
  out.covariance = m2_ / static_cast<double>(count_ - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(out.covariance);
  if (solver.info() != Eigen::Success) throw std::runtime_error("streaming_pca: eigensolver failed");
  const Vector evals = solver.eigenvalues();  // ascending
  const Matrix evecs = solver.eigenvectors();
  const Eigen::Index d = evals.size();
  out.eigenvalues.resize(d);
  out.basis.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    out.eigenvalues[i] = evals[d - 1 - i];
    out.basis.col(i) = evecs.col(d - 1 - i);
  }
  return out;
}

double PcaSummary::participation_ratio() const {
  const double s1 = eigenvalues.sum();
  const double s2 = eigenvalues.squaredNorm();
  return s2 > 0 ? s1 * s1 / s2 : 0.0;
}

int dimensionality(const PcaSummary& summary, double eps_rel) {
  const double threshold = eps_rel * summary.eigenvalues.sum();
  int count = 0;
  for (Eigen::Index i = 0; i < summary.eigenvalues.size(); ++i) {
    if (summary.eigenvalues[i] > threshold && summary.eigenvalues[i] > 0) ++count;
  }
  return count;
}

// ---- tuning histograms ------------------------------------------------------

namespace {

// Uniform bin grid over [lo, hi] extended to put 0 exactly on an edge.
void zero_aligned_edges(double lo, double hi, int bins, std::vector<double>& edges) {
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  const double neg = -lo, pos = hi;
  int b_neg;
  double h;
  if (neg + pos == 0.0) {
    b_neg = 0;
    h = 1.0;
  } else {
    const double ideal = (neg + pos) / bins;
    b_neg = static_cast<int>(std::ceil(neg / ideal - 1e-9));
    b_neg = std::clamp(b_neg, neg > 0 ? 1 : 0, pos > 0 ? bins - 1 : bins);
    const int b_pos = bins - b_neg;
    h = 0.0;
    if (b_neg > 0) h = std::max(h, neg / b_neg);
    if (b_pos > 0) h = std::max(h, pos / b_pos);
  }
  edges.resize(bins + 1);
  for (int i = 0; i <= bins; ++i) edges[i] = (i - b_neg) * h;
  // Rounding in h can leave the outermost edge a hair inside the data range;
  // widen so the grid always covers every value.
  edges.front() = std::min(edges.front(), lo);
  edges.back() = std::max(edges.back(), hi);
}

int bin_of(double v, const std::vector<double>& edges) {
  const int bins = static_cast<int>(edges.size()) - 1;
  const double h = edges[1] - edges[0];
  int idx = static_cast<int>(std::floor((v - edges[0]) / h));
  return std::clamp(idx, 0, bins - 1);
}

}  // namespace

TuningCurves tuning_histograms(const ActivationTrace& trace, const std::vector<int>& labels,
                               const std::vector<int>& classes, int bins) {
  if (bins < 1) throw std::invalid_argument("tuning_histograms: bins must be >= 1");
  if (static_cast<std::size_t>(trace.input.rows()) != labels.size()) {
    throw std::invalid_argument("tuning_histograms: trace and labels misaligned");
  }
  if (classes.empty()) throw std::invalid_argument("tuning_histograms: no classes requested");
  std::vector<std::size_t> class_count(classes.size(), 0);
  std::vector<int> class_index(*std::max_element(classes.begin(), classes.end()) + 1, -1);
  for (std::size_t ci = 0; ci < classes.size(); ++ci) class_index[classes[ci]] = static_cast<int>(ci);
  for (int y : labels) {
    if (y >= 0 && y < static_cast<int>(class_index.size()) && class_index[y] >= 0) {
      ++class_count[class_index[y]];
    }
  }
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    if (class_count[ci] == 0) {
      throw std::invalid_argument("tuning_histograms: class " + std::to_string(classes[ci]) +
                                  " has no samples");
    }
  }

  TuningCurves curves;
  curves.classes = classes;
  for (std::size_t l = 0; l < trace.preactivations.size(); ++l) {
    const Matrix& pre = trace.preactivations[l];
    for (Eigen::Index j = 0; j < pre.cols(); ++j) {
      NeuronTuning nt;
      nt.layer = static_cast<int>(l);
      nt.neuron = static_cast<int>(j);
      zero_aligned_edges(pre.col(j).minCoeff(), pre.col(j).maxCoeff(), bins, nt.bin_edges);
      nt.counts.assign(classes.size(), std::vector<std::uint64_t>(bins, 0));
      for (Eigen::Index i = 0; i < pre.rows(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= static_cast<int>(class_index.size()) || class_index[y] < 0) continue;
        ++nt.counts[class_index[y]][bin_of(pre(i, j), nt.bin_edges)];
      }
      curves.neurons.push_back(std::move(nt));
    }
  }
  return curves;
}

// ---- dip report -------------------------------------------------------------

double DipReport::max_class_dip(std::size_t layer, std::size_t neuron) const {
  const auto& row = dip[layer][neuron];
  return *std::max_element(row.begin(), row.end());
}

namespace {

// Per-(neuron, class) reservoir subsample of a streamed column set.
class ReservoirGrid {
 public:
  ReservoirGrid(std::size_t neurons, std::size_t classes, std::size_t cap, std::uint64_t seed)
      : neurons_(neurons), classes_(classes), cap_(cap), seen_(neurons * classes, 0),
        values_(neurons * classes) {
    rngs_.reserve(neurons * classes);
    for (std::size_t i = 0; i < neurons * classes; ++i) {
      rngs_.emplace_back(seed ^ (0x9e3779b97f4a7c15ull * (i + 1)));
    }
  }

  void add(std::size_t neuron, std::size_t cls, double value) {
    const std::size_t cell = neuron * classes_ + cls;
    auto& vals = values_[cell];
    const std::uint64_t t = seen_[cell]++;
    if (t < cap_) {
      vals.push_back(value);
    } else {
      const std::uint64_t j = rngs_[cell].below(t + 1);
      if (j < cap_) vals[j] = value;
    }
  }

  const std::vector<double>& values(std::size_t neuron, std::size_t cls) const {
    return values_[neuron * classes_ + cls];
  }

 private:
  std::size_t neurons_, classes_, cap_;
  std::vector<std::uint64_t> seen_;
  std::vector<std::vector<double>> values_;
  std::vector<Rng> rngs_;
};

// Preactivations of one layer streamed over the dataset, optionally with the
// layer's parameters replaced (surrogate redraw).
template <typename Sink>
void stream_layer_pre(const Network& net, const Matrix& inputs, std::size_t layer,
                      const DenseLayer* replacement, std::size_t chunk, Sink&& sink) {
  const Eigen::Index n = inputs.rows();
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const Eigen::Index m = std::min<Eigen::Index>(chunk, n - start);
    Matrix current = inputs.middleRows(start, m);
    for (std::size_t l = 0; l < layer; ++l) {
      const auto& lay = net.layers[l];
      Matrix pre = (current * lay.weights.transpose()).rowwise() + lay.biases.transpose();
      current = lay.activation == Activation::kRelu ? pre.cwiseMax(0.0) : pre;
    }
    const DenseLayer& lay = replacement ? *replacement : net.layers[layer];
    Matrix pre = (current * lay.weights.transpose()).rowwise() + lay.biases.transpose();
    sink(pre, start);
  }
}

std::vector<std::vector<double>> layer_dips(const Network& net, const LabeledDataset& dataset,
                                            std::size_t layer, const DenseLayer* replacement,
                                            const std::vector<int>& classes,
                                            const std::vector<int>& class_index,
                                            const DipReportOptions& opt, std::uint64_t seed) {
  const std::size_t width = net.layers[layer].fan_out();
  ReservoirGrid grid(width, classes.size(), opt.subsample_cap, seed);
  stream_layer_pre(net, dataset.inputs, layer, replacement, opt.batch_rows,
                   [&](const Matrix& pre, Eigen::Index start) {
                     for (Eigen::Index i = 0; i < pre.rows(); ++i) {
                       const int y = dataset.labels[start + i];
                       if (y < 0 || y >= static_cast<int>(class_index.size())) continue;
                       const int ci = class_index[y];
                       if (ci < 0) continue;
                       for (Eigen::Index j = 0; j < pre.cols(); ++j) {
                         grid.add(j, ci, pre(i, j));
                       }
                     }
                   });
  std::vector<std::vector<double>> dips(width, std::vector<double>(classes.size(), 0.0));
  for (std::size_t j = 0; j < width; ++j) {
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
      const auto& vals = grid.values(j, ci);
      if (vals.empty()) {
        throw std::invalid_argument("dip_report: class " + std::to_string(classes[ci]) +
                                    " has no samples");
      }
      dips[j][ci] = dip_statistic(vals).dip;
    }
  }
  return dips;
}

}  // namespace

DipReport dip_report(const Network& net, const LabeledDataset& dataset,
                     const DipReportOptions& options) {
  net.validate();
  if (options.classes.empty()) throw std::invalid_argument("dip_report: classes empty");
  if (options.surrogate_seed_count < 1) {
    throw std::invalid_argument("dip_report: surrogate_seed_count must be >= 1");
  }
  std::vector<int> class_index(*std::max_element(options.classes.begin(), options.classes.end()) + 1,
                               -1);
  for (std::size_t ci = 0; ci < options.classes.size(); ++ci) {
    class_index[options.classes[ci]] = static_cast<int>(ci);
  }

  DipReport report;
  report.classes = options.classes;
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    if (net.layers[l].activation != Activation::kRelu) continue;
    report.layer_index.push_back(static_cast<int>(l));
    report.dip.push_back(layer_dips(net, dataset, l, nullptr, options.classes, class_index,
                                    options, options.surrogate_seed ^ (l * 7919 + 1)));

    std::vector<std::vector<double>> stacked;
    double smax = 0.0;
    for (int s = 0; s < options.surrogate_seed_count; ++s) {
      const std::uint64_t draw_seed =
          options.surrogate_seed * 1000003ull + l * 101ull + static_cast<std::uint64_t>(s);
      const DenseLayer redrawn = init_layer(net.layers[l].fan_in(), net.layers[l].fan_out(),
                                            Activation::kRelu, draw_seed);
      auto dips = layer_dips(net, dataset, l, &redrawn, options.classes, class_index, options,
                             options.surrogate_seed ^ (l * 7919 + 1));
      for (auto& row : dips) {
        smax = std::max(smax, *std::max_element(row.begin(), row.end()));
        stacked.push_back(std::move(row));
      }
    }
    report.surrogate_dip.push_back(std::move(stacked));
    report.surrogate_max.push_back(smax);

    const auto& layer_dip = report.dip.back();
    std::vector<bool> large(layer_dip.size());
    for (std::size_t j = 0; j < layer_dip.size(); ++j) {
      const double mx = *std::max_element(layer_dip[j].begin(), layer_dip[j].end());
      large[j] = mx > smax;
    }
    report.is_large.push_back(std::move(large));
  }
  if (report.dip.empty()) throw std::invalid_argument("dip_report: network has no hidden layers");
  return report;
}

// ---- angles ------------------------------------------------------------------

double subspace_angle(const Vector& w, const Matrix& basis) {
  const double norm = w.norm();
  if (norm == 0.0) throw std::invalid_argument("subspace_angle: zero vector");
  if (basis.cols() != w.size()) throw std::invalid_argument("subspace_angle: dimension mismatch");
  const double proj = (basis * w).norm();
  const double ratio = std::clamp(proj / norm, 0.0, 1.0);
  return std::acos(ratio);
}

AngleReport angle_report(const Network& net, int layer, const PcaSummary& input_pca,
                         double eps_rel) {
  net.validate();
  if (layer < 0 || layer >= net.layer_count()) {
    throw std::invalid_argument("angle_report: layer out of range");
  }
  if (net.layers[layer].fan_in() != input_pca.mean.size()) {
    throw std::invalid_argument("angle_report: PCA dimension does not match layer input");
  }
  const int dim = dimensionality(input_pca, eps_rel);
  if (dim == 0) throw std::invalid_argument("angle_report: representation subspace is empty");
  const Matrix basis = input_pca.basis.leftCols(dim).transpose();  // rows span the subspace
  AngleReport report;
  report.layer = layer;
  report.subspace_dim = dim;
  const auto& weights = net.layers[layer].weights;
  report.theta.reserve(weights.rows());
  for (Eigen::Index j = 0; j < weights.rows(); ++j) {
    report.theta.push_back(subspace_angle(weights.row(j).transpose(), basis));
  }
  return report;
}

// ---- ablation ----------------------------------------------------------------

double macro_f1(const std::vector<int>& predictions, const std::vector<int>& labels,
                const std::vector<int>& excluded_classes) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("macro_f1: misaligned");
  if (predictions.empty()) throw std::invalid_argument("macro_f1: empty input");
  int n_classes = 0;
  for (int v : predictions) n_classes = std::max(n_classes, v + 1);
  for (int v : labels) n_classes = std::max(n_classes, v + 1);
  std::vector<std::int64_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == labels[i]) {
      ++tp[labels[i]];
    } else {
      ++fp[predictions[i]];
      ++fn[labels[i]];
    }
  }
  std::vector<bool> excluded(n_classes, false);
  for (int c : excluded_classes) {
    if (c >= 0 && c < n_classes) excluded[c] = true;
  }
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < n_classes; ++c) {
    if (excluded[c]) continue;
    const std::int64_t denom = 2 * tp[c] + fp[c] + fn[c];
    sum += denom > 0 ? 2.0 * tp[c] / static_cast<double>(denom) : 0.0;
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("macro_f1: all classes excluded");
  return sum / counted;
}

namespace {

std::vector<int> predict_chunked(const Network& net, const Matrix& inputs,
                                 const SilenceMask* mask, std::size_t chunk) {
  std::vector<int> out;
  out.reserve(inputs.rows());
  for (Eigen::Index start = 0; start < inputs.rows(); start += chunk) {
    const Eigen::Index m = std::min<Eigen::Index>(chunk, inputs.rows() - start);
    auto part = predict(net, inputs.middleRows(start, m), mask);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace

AblationResult ablation_experiment(const Network& net, const LabeledDataset& dataset,
                                   const DipReport& report, int layer, int k,
                                   const std::vector<int>& excluded_classes) {
  if (layer < 0 || layer >= static_cast<int>(report.dip.size())) {
    throw std::invalid_argument("ablation_experiment: layer out of range");
  }
  const auto& dips = report.dip[layer];
  const int width = static_cast<int>(dips.size());
  if (k < 0 || k > width) throw std::invalid_argument("ablation_experiment: k exceeds layer width");

  std::vector<int> order(width);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> score(width);
  for (int j = 0; j < width; ++j) {
    score[j] = *std::max_element(dips[j].begin(), dips[j].end());
  }
  // Descending by dip; ties broken by neuron index ascending.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });

  AblationResult result;
  result.layer = layer;
  result.large_set.assign(order.begin(), order.begin() + k);
  std::sort(result.large_set.begin(), result.large_set.end());
  // Bottom-k with the same index-ascending tie-break needs an ascending sort.
  std::vector<int> asc(width);
  std::iota(asc.begin(), asc.end(), 0);
  std::stable_sort(asc.begin(), asc.end(), [&](int a, int b) { return score[a] < score[b]; });
  result.small_set.assign(asc.begin(), asc.begin() + k);
  std::sort(result.small_set.begin(), result.small_set.end());

  const int net_layer = report.layer_index[layer];
  const std::size_t chunk = 20000;
  SilenceMask none = SilenceMask::none(net);
  result.f1_intact = macro_f1(predict_chunked(net, dataset.inputs, &none, chunk), dataset.labels,
                              excluded_classes);
  SilenceMask large_mask = SilenceMask::none(net);
  large_mask.silenced[net_layer] = result.large_set;
  result.f1_large_silenced = macro_f1(predict_chunked(net, dataset.inputs, &large_mask, chunk),
                                      dataset.labels, excluded_classes);
  SilenceMask small_mask = SilenceMask::none(net);
  small_mask.silenced[net_layer] = result.small_set;
  result.f1_small_silenced = macro_f1(predict_chunked(net, dataset.inputs, &small_mask, chunk),
                                      dataset.labels, excluded_classes);
  return result;
}

}  // namespace foldnet
