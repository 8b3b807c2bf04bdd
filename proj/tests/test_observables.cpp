#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>
#include "doctest.h"
#include "foldnet/data.hpp"
#include "foldnet/nn.hpp"
#include "foldnet/observables.hpp"
#include "foldnet/rng.hpp"
#include "oracles.hpp"

using namespace foldnet;

namespace {

Matrix gaussian_matrix(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
  Rng rng(seed);
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.gaussian();
  }
  return m;
}

// Three well-separated gaussian blobs in the plane.
LabeledDataset blob_dataset(std::uint64_t seed, int per_class, double sd = 0.4) {
  Rng rng(seed);
  LabeledDataset ds;
  ds.n_classes = 3;
  ds.inputs.resize(3 * per_class, 2);
  for (int c = 0; c < 3; ++c) {
    const double ang = 2.0 * M_PI * c / 3.0;
    for (int i = 0; i < per_class; ++i) {
      const Eigen::Index row = c * per_class + i;
      ds.inputs(row, 0) = 2.0 * std::cos(ang) + sd * rng.gaussian();
      ds.inputs(row, 1) = 2.0 * std::sin(ang) + sd * rng.gaussian();
      ds.labels.push_back(c);
    }
  }
  return ds;
}

PcaSummary pca_of(const Matrix& data) {
  StreamingPca pca;
  pca.add(data);
  return pca.finalize();
}

}  // namespace

TEST_CASE("planar data embedded in 5d has dimensionality exactly 2") {
  Rng rng(3);
  Matrix embed(5, 2);
  for (Eigen::Index i = 0; i < 5; ++i) {
    for (Eigen::Index j = 0; j < 2; ++j) embed(i, j) = rng.gaussian();
  }
  const Matrix z = gaussian_matrix(10, 2000, 2);
  Matrix data = z * embed.transpose();
  data.rowwise() += Eigen::RowVector2d(1.0, -2.0) * embed.transpose();
  const PcaSummary sum = pca_of(data);
  CHECK(dimensionality(sum, 1e-6) == 2);
  CHECK(sum.eigenvalues[2] <= 1e-9 * sum.trace());
}

TEST_CASE("summary invariants: PSD spectrum, orthonormal basis, trace identity") {
  const PcaSummary sum = pca_of(gaussian_matrix(4, 600, 6));
  for (Eigen::Index i = 0; i < sum.eigenvalues.size(); ++i) {
    CHECK(sum.eigenvalues[i] >= -1e-9);
    if (i > 0) CHECK(sum.eigenvalues[i] <= sum.eigenvalues[i - 1]);
  }
  const Matrix gram = sum.basis.transpose() * sum.basis;
  CHECK((gram - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(sum.eigenvalues.sum() ==
        doctest::Approx(sum.covariance.trace()).epsilon(1e-6));
  // Eigen-pair residuals.
  const double scale = sum.covariance.norm();
  for (Eigen::Index i = 0; i < 6; ++i) {
    const double residual =
        (sum.covariance * sum.basis.col(i) - sum.eigenvalues[i] * sum.basis.col(i)).norm();
    CHECK(residual <= 1e-8 * scale);
  }
}

TEST_CASE("result is independent of batch partitioning") {
  const Matrix data = gaussian_matrix(8, 3000, 4);
  StreamingPca one, rows, thousands;
  one.add(data);
  for (Eigen::Index i = 0; i < data.rows(); ++i) rows.add(data.middleRows(i, 1));
  for (Eigen::Index s = 0; s < data.rows(); s += 1000) thousands.add(data.middleRows(s, 1000));
  const PcaSummary a = one.finalize(), b = rows.finalize(), c = thousands.finalize();
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((a.covariance - b.covariance).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((a.covariance - c.covariance).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((a.eigenvalues - c.eigenvalues).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("eigenvalues agree with a direct covariance decomposition") {
  const Matrix data = gaussian_matrix(77, 500, 6);
  const PcaSummary sum = pca_of(data);
  const Vector ref = oracle::covariance_eigenvalues(data);
  CHECK((sum.eigenvalues - ref).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("poker inputs span all 10 feature directions") {
  const LabeledDataset ds = generate_poker(20000, 5, PokerMode::kUniformOrdered);
  CHECK(dimensionality(pca_of(ds.inputs), 1e-6) == 10);
}

TEST_CASE("dimensionality conventions") {
  CHECK(dimensionality(pca_of(gaussian_matrix(2, 4000, 4)), 1e-6) == 4);
  CHECK(dimensionality(pca_of(Matrix::Zero(10, 3)), 1e-6) == 0);  // zero trace
}

TEST_CASE("streaming errors") {
  StreamingPca pca;
  pca.add(Matrix::Zero(0, 3));  // empty batch is a no-op
  CHECK_THROWS_AS(pca.finalize(), std::invalid_argument);
  pca.add(Matrix::Zero(5, 3));
  CHECK_THROWS_AS(pca.add(Matrix::Zero(5, 4)), std::invalid_argument);
  StreamingPca single;
  single.add(Matrix::Zero(1, 3));
  CHECK_THROWS_AS(single.finalize(), std::invalid_argument);
}

// ---- tuning histograms ---------------------------------------------------

TEST_CASE("constant preactivation lands in a single bin containing it") {
  Network net;
  net.input_dim = 1;
  DenseLayer layer;
  layer.weights = Matrix::Zero(1, 1);
  layer.biases = Vector::Constant(1, 2.7);
  layer.activation = Activation::kIdentity;
  net.layers.push_back(layer);
  const Matrix x = Matrix::Zero(50, 1);
  const ActivationTrace trace = forward(net, x);
  const TuningCurves curves = tuning_histograms(trace, std::vector<int>(50, 0), {0});
  REQUIRE(curves.neurons.size() == 1);
  const NeuronTuning& nt = curves.neurons[0];
  std::uint64_t total = 0;
  int nonzero_bins = 0, hit = -1;
  for (std::size_t b = 0; b < nt.counts[0].size(); ++b) {
    total += nt.counts[0][b];
    if (nt.counts[0][b] > 0) {
      ++nonzero_bins;
      hit = static_cast<int>(b);
    }
  }
  CHECK(total == 50);
  CHECK(nonzero_bins == 1);
  CHECK(nt.bin_edges[hit] <= 2.7);
  CHECK(nt.bin_edges[hit + 1] >= 2.7);
}

TEST_CASE("per-class counts sum to class sizes and zero sits on an edge") {
  const LabeledDataset ds = blob_dataset(21, 400);
  const Network net = init_network({2, 8, 3}, 9);
  const ActivationTrace trace = forward(net, ds.inputs);
  const TuningCurves curves = tuning_histograms(trace, ds.labels, {0, 1, 2});
  CHECK(curves.neurons.size() == 8 + 3);
  for (const NeuronTuning& nt : curves.neurons) {
    CHECK(nt.bin_edges.size() == 62);  // default 61 bins
    bool zero_edge = false;
    for (double e : nt.bin_edges) zero_edge = zero_edge || e == 0.0;
    CHECK(zero_edge);
    for (std::size_t ci = 0; ci < 3; ++ci) {
      const std::uint64_t total =
          std::accumulate(nt.counts[ci].begin(), nt.counts[ci].end(), std::uint64_t{0});
      CHECK(total == 400);
    }
    // Bin range covers every recorded value.
    const Matrix& pre = trace.preactivations[static_cast<std::size_t>(nt.layer)];
    CHECK(nt.bin_edges.front() <= pre.col(nt.neuron).minCoeff());
    CHECK(nt.bin_edges.back() >= pre.col(nt.neuron).maxCoeff());
  }
}

TEST_CASE("untrained poker preactivations are close to unimodal per class") {
  LabeledDataset ds = generate_poker(20000, 8, PokerMode::kUniformOrdered);
  standardize_features(ds);
  const Network net = init_network({10, 100, 100, 10}, 31);
  const ActivationTrace trace = forward(net, ds.inputs);
  // Class 0 holds about half of uniform poker draws: plenty of samples.
  std::vector<double> values;
  for (int j = 0; j < 5; ++j) {
    values.clear();
    for (Eigen::Index i = 0; i < trace.preactivations[0].rows(); ++i) {
      if (ds.labels[i] == 0) values.push_back(trace.preactivations[0](i, j));
    }
    CHECK(values.size() > 5000);
    CHECK(dip_statistic(values).dip < 0.01);
  }
}

TEST_CASE("tuning histogram errors") {
  const LabeledDataset ds = blob_dataset(4, 30);
  const Network net = init_network({2, 4, 3}, 1);
  const ActivationTrace trace = forward(net, ds.inputs);
  CHECK_THROWS_AS(tuning_histograms(trace, ds.labels, {}), std::invalid_argument);
  CHECK_THROWS_AS(tuning_histograms(trace, ds.labels, {0, 1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(tuning_histograms(trace, std::vector<int>(10, 0), {0}), std::invalid_argument);
  CHECK_THROWS_AS(tuning_histograms(trace, ds.labels, {0}, 0), std::invalid_argument);
}

// ---- dip report ------------------------------------------------------------

TEST_CASE("dip report fields are structurally consistent") {
  const LabeledDataset ds = blob_dataset(33, 1000);
  const Network net = init_network({2, 10, 10, 3}, 12);
  DipReportOptions opt;
  opt.classes = {0, 1, 2};
  opt.surrogate_seed_count = 2;
  const DipReport report = dip_report(net, ds, opt);

  REQUIRE(report.layer_index == std::vector<int>{0, 1});
  REQUIRE(report.dip.size() == 2);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(report.dip[l].size() == 10);
    CHECK(report.surrogate_dip[l].size() == 2 * 10);
    double smax = 0.0;
    for (const auto& row : report.surrogate_dip[l]) {
      for (double d : row) {
        CHECK(d >= 0.0);
        CHECK(d <= 0.25);
        smax = std::max(smax, d);
      }
    }
    CHECK(report.surrogate_max[l] == smax);
    for (std::size_t j = 0; j < 10; ++j) {
      for (double d : report.dip[l][j]) {
        CHECK(d >= 0.0);
        CHECK(d <= 0.25);
      }
      // Classification rule: large iff the neuron's max class dip beats the
      // layer's surrogate maximum.
      CHECK(report.is_large[l][j] == (report.max_class_dip(l, j) > report.surrogate_max[l]));
    }
  }

  const DipReport again = dip_report(net, ds, opt);
  CHECK(again.dip == report.dip);
  CHECK(again.surrogate_dip == report.surrogate_dip);
}

TEST_CASE("untrained nets are dip-indistinguishable from their surrogates") {
  const LabeledDataset ds = blob_dataset(17, 1000);
  int large = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Network net = init_network({2, 24, 24, 3}, 100 + seed);
    DipReportOptions opt;
    opt.classes = {0, 1, 2};
    opt.surrogate_seed = 555 + seed;
    const DipReport report = dip_report(net, ds, opt);
    for (const auto& layer : report.is_large) {
      for (bool b : layer) {
        large += b ? 1 : 0;
        ++total;
      }
    }
  }
  CHECK(total == 10 * 2 * 24);
  CHECK(static_cast<double>(large) / static_cast<double>(total) <= 0.05);
}

TEST_CASE("dip report errors") {
  const LabeledDataset ds = blob_dataset(2, 50);
  const Network net = init_network({2, 6, 3}, 3);
  DipReportOptions opt;
  opt.classes = {};
  CHECK_THROWS_AS(dip_report(net, ds, opt), std::invalid_argument);
  opt.classes = {0, 1, 2, 3};  // class 3 has no samples
  CHECK_THROWS_AS(dip_report(net, ds, opt), std::invalid_argument);
  opt.classes = {0, 1, 2};
  opt.surrogate_seed_count = 0;
  CHECK_THROWS_AS(dip_report(net, ds, opt), std::invalid_argument);

  Network flat;  // no hidden layer at all
  flat.input_dim = 2;
  DenseLayer readout;
  readout.weights = Matrix::Identity(3, 2).topRows(3);
  readout.weights = Matrix::Zero(3, 2);
  readout.biases = Vector::Zero(3);
  readout.activation = Activation::kIdentity;
  flat.layers.push_back(readout);
  DipReportOptions plain;
  plain.classes = {0, 1, 2};
  CHECK_THROWS_AS(dip_report(flat, ds, plain), std::invalid_argument);
}

// ---- angles ----------------------------------------------------------------

TEST_CASE("subspace angle endpoints") {
  Matrix basis = Matrix::Zero(2, 4);  // rows span e0, e1
  basis(0, 0) = 1.0;
  basis(1, 1) = 1.0;
  Vector in_span(4), orthogonal(4), mixed(4);
  in_span << 2.0, -1.0, 0.0, 0.0;
  orthogonal << 0.0, 0.0, 3.0, 4.0;
  mixed << 1.0, 0.0, 1.0, 0.0;
  CHECK(subspace_angle(in_span, basis) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(subspace_angle(orthogonal, basis) == doctest::Approx(M_PI / 2).epsilon(1e-12));
  CHECK(subspace_angle(mixed, basis) == doctest::Approx(M_PI / 4).epsilon(1e-12));
  CHECK_THROWS_AS(subspace_angle(Vector::Zero(4), basis), std::invalid_argument);
  CHECK_THROWS_AS(subspace_angle(Vector::Ones(3), basis), std::invalid_argument);
}

TEST_CASE("random 100-d vectors against a 10-d subspace match the beta-law mean") {
  Matrix basis = Matrix::Zero(10, 100);
  for (int i = 0; i < 10; ++i) basis(i, i) = 1.0;
  Rng rng(42);
  double sum = 0.0;
  const int n = 10000;
  for (int rep = 0; rep < n; ++rep) {
    Vector w(100);
    for (Eigen::Index i = 0; i < 100; ++i) w[i] = rng.gaussian();
    const double theta = subspace_angle(w, basis);
    CHECK(theta >= 0.0);
    CHECK(theta <= M_PI / 2);
    sum += theta;
  }
  // The exact Beta-law mean sits within 0.01 of the first-order figure
  // arccos(sqrt(10/100)) ~ 1.249; the sample mean must match the exact law.
  const double expected = oracle::expected_subspace_angle(100, 10);
  CHECK(std::abs(expected - std::acos(std::sqrt(0.1))) < 0.01);
  CHECK(sum / n == doctest::Approx(expected).epsilon(0.004));
}

TEST_CASE("angle report: in-subspace weights give zero angles") {
  Rng rng(9);
  Matrix span(6, 3);  // three orthonormal-ish directions in R^6
  for (Eigen::Index i = 0; i < 6; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) span(i, j) = rng.gaussian();
  }
  const Matrix z = gaussian_matrix(10, 800, 3);
  const Matrix data = z * span.transpose();

  Network net = init_network({6, 4, 2}, 7);
  Matrix coef(4, 3);
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) coef(i, j) = rng.gaussian();
  }
  net.layers[0].weights = coef * span.transpose();

  const AngleReport report = angle_report(net, 0, pca_of(data), 1e-9);
  CHECK(report.subspace_dim == 3);
  REQUIRE(report.theta.size() == 4);
  for (double t : report.theta) CHECK(t <= 1e-6);
}

TEST_CASE("angle report: random wide layer against low-dim embedded data clusters near pi/2") {
  // 5-d data embedded in a 60-d ambient space by an orthonormal map: random
  // 60-d weight rows then sit nearly orthogonal to the data subspace.
  Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(6, 60, 5));
  const Matrix embed = qr.householderQ() * Matrix::Identity(60, 5);
  const Matrix data = gaussian_matrix(14, 2000, 5) * embed.transpose();
  Network net = init_network({60, 200, 2}, 77);
  const AngleReport report = angle_report(net, 0, pca_of(data), 1e-6);
  CHECK(report.subspace_dim == 5);
  std::vector<double> theta = report.theta;
  std::sort(theta.begin(), theta.end());
  const double median = theta[theta.size() / 2];
  CHECK(median > 1.2);
  const double mean = std::accumulate(theta.begin(), theta.end(), 0.0) / theta.size();
  CHECK(mean == doctest::Approx(oracle::expected_subspace_angle(60, 5)).epsilon(0.04));
}

TEST_CASE("angle report errors") {
  const Matrix data = gaussian_matrix(1, 100, 3);
  const Network net = init_network({3, 4, 2}, 5);
  const PcaSummary sum = pca_of(data);
  CHECK_THROWS_AS(angle_report(net, -1, sum, 1e-6), std::invalid_argument);
  CHECK_THROWS_AS(angle_report(net, 2, sum, 1e-6), std::invalid_argument);
  CHECK_THROWS_AS(angle_report(net, 1, sum, 1e-6), std::invalid_argument);  // dim mismatch
  CHECK_THROWS_AS(angle_report(net, 0, pca_of(Matrix::Zero(10, 3)), 1e-6),
                  std::invalid_argument);  // empty subspace
}

// ---- macro F1 ----------------------------------------------------------------

TEST_CASE("macro F1 basics") {
  CHECK(macro_f1({0, 1, 2}, {0, 1, 2}, {}) == doctest::Approx(1.0).epsilon(1e-12));
  // Constant majority prediction over two balanced classes: F1 = 2/3 and 0.
  std::vector<int> labels, preds;
  for (int i = 0; i < 100; ++i) {
    labels.push_back(i % 2);
    preds.push_back(1);
  }
  CHECK(macro_f1(preds, labels, {}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(macro_f1({0, 1}, {0, 1}, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(macro_f1({0}, {0, 1}, {}), std::invalid_argument);
  CHECK_THROWS_AS(macro_f1({}, {}, {}), std::invalid_argument);
}

TEST_CASE("macro F1 agrees with a naive reference over random cases") {
  Rng rng(31);
  for (int rep = 0; rep < 400; ++rep) {
    const int k = 1 + static_cast<int>(rng.below(6));
    const std::size_t n = 1 + rng.below(60);
    std::vector<int> preds(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      labels[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    }
    std::vector<int> excluded;
    for (int c = 0; c < k; ++c) {
      if (rng.uniform(0.0, 1.0) < 0.25) excluded.push_back(c);
    }
    bool lib_threw = false, ref_threw = false;
    double lib = 0.0, ref = 0.0;
    try {
      lib = macro_f1(preds, labels, excluded);
    } catch (const std::invalid_argument&) {
      lib_threw = true;
    }
    try {
      ref = oracle::macro_f1_naive(preds, labels, excluded);
    } catch (const std::invalid_argument&) {
      ref_threw = true;
    }
    CHECK(lib_threw == ref_threw);
    if (!lib_threw) CHECK(lib == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("macro F1 is invariant under joint relabeling") {
  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const int k = 2 + static_cast<int>(rng.below(5));
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<int> preds(80), labels(80);
    for (std::size_t i = 0; i < 80; ++i) {
      preds[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      labels[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    }
    std::vector<int> excluded{0};
    auto mapped = [&](const std::vector<int>& v) {
      std::vector<int> out(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = perm[v[i]];
      return out;
    };
    const double before = macro_f1(preds, labels, excluded);
    const double after = macro_f1(mapped(preds), mapped(labels), mapped(excluded));
    CHECK(after == doctest::Approx(before).epsilon(1e-12));
  }
}

// ---- ablation ----------------------------------------------------------------

TEST_CASE("ablation bookkeeping on a trained blob classifier") {
  const LabeledDataset ds = blob_dataset(55, 500);
  Network net = init_network({2, 12, 3}, 19);
  TrainSchedule sched;
  sched.phases = {{0.1, 40}};
  sched.batch_size = 100;
  sched.shuffle_seed = 4;
  train(net, ds, sched);

  DipReportOptions opt;
  opt.classes = {0, 1, 2};
  const DipReport report = dip_report(net, ds, opt);

  const AblationResult zero = ablation_experiment(net, ds, report, 0, 0, {});
  CHECK(zero.f1_intact == zero.f1_large_silenced);
  CHECK(zero.f1_intact == zero.f1_small_silenced);
  CHECK(zero.large_set.empty());
  CHECK(zero.small_set.empty());
  // Intact equals plain evaluation exactly.
  CHECK(zero.f1_intact == macro_f1(predict(net, ds.inputs), ds.labels, {}));

  const AblationResult some = ablation_experiment(net, ds, report, 0, 3, {});
  CHECK(some.large_set.size() == 3);
  CHECK(some.small_set.size() == 3);
  // Selection matches an independent sort of the report's dips: descending /
  // ascending by max class dip, ties broken by neuron index.
  std::vector<double> score(12);
  for (int j = 0; j < 12; ++j) score[j] = report.max_class_dip(0, j);
  std::vector<int> order(12);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });
  std::vector<int> top(order.begin(), order.begin() + 3);
  std::sort(top.begin(), top.end());
  CHECK(some.large_set == top);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] < score[b]; });
  std::vector<int> bottom(order.begin(), order.begin() + 3);
  std::sort(bottom.begin(), bottom.end());
  CHECK(some.small_set == bottom);

  // Silencing the entire hidden layer collapses predictions to a constant
  // class; the score must equal one of the constant-prediction baselines
  // computable from class frequencies alone.
  const AblationResult full = ablation_experiment(net, ds, report, 0, 12, {});
  bool matches_constant = false;
  for (int c = 0; c < 3; ++c) {
    const double baseline = macro_f1(std::vector<int>(ds.labels.size(), c), ds.labels, {});
    matches_constant = matches_constant || std::abs(full.f1_large_silenced - baseline) < 1e-12;
  }
  CHECK(matches_constant);
  CHECK(full.f1_large_silenced == full.f1_small_silenced);
  CHECK(full.f1_intact > full.f1_large_silenced);  // trained net beats a constant

  CHECK_THROWS_AS(ablation_experiment(net, ds, report, 0, 13, {}), std::invalid_argument);
  CHECK_THROWS_AS(ablation_experiment(net, ds, report, 1, 1, {}), std::invalid_argument);
  CHECK_THROWS_AS(ablation_experiment(net, ds, report, -1, 1, {}), std::invalid_argument);
}
