#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>

namespace oracle {

using foldnet::Matrix;
using foldnet::Network;
using foldnet::Vector;

// ---- dip --------------------------------------------------------------------

namespace {

// One inequality: sum_j c[j] * v[j] <= r.
struct Row {
  std::vector<double> c;
  double r;
};

// Fourier-Motzkin elimination over a chain-structured system. Rows implied
// by the per-variable interval bounds are dropped so derived rows stay few;
// `order` lists the variables chain-first so combinations stay local.
bool fm_feasible(std::vector<Row> rows, const std::vector<int>& order,
                 const std::vector<double>& box_lo, const std::vector<double>& box_hi) {
  const int n_vars = static_cast<int>(box_lo.size());
  const double eps = 1e-11;
  for (int i = 0; i < n_vars; ++i) {
    if (box_lo[static_cast<std::size_t>(i)] > box_hi[static_cast<std::size_t>(i)] + 1e-12) {
      return false;
    }
  }
  // keep only rows the boxes do not already settle
  auto prune = [&](std::vector<Row>& in) -> bool {
    std::vector<Row> kept;
    for (Row& row : in) {
      double max_lhs = 0.0, min_lhs = 0.0;
      bool zero = true;
      for (int j = 0; j < n_vars; ++j) {
        const double c = row.c[static_cast<std::size_t>(j)];
        if (std::abs(c) <= eps) continue;
        zero = false;
        max_lhs += c * (c > 0 ? box_hi : box_lo)[static_cast<std::size_t>(j)];
        min_lhs += c * (c > 0 ? box_lo : box_hi)[static_cast<std::size_t>(j)];
      }
      if (zero) {
        if (row.r < -1e-9) return false;
        continue;
      }
      if (min_lhs > row.r + 1e-9) return false;    // unsatisfiable inside the boxes
      if (max_lhs <= row.r + 1e-12) continue;      // implied by the boxes
      bool dup = false;
      for (const Row& k : kept) {
        double diff = std::abs(k.r - row.r);
        for (int j = 0; j < n_vars; ++j) {
          diff += std::abs(k.c[static_cast<std::size_t>(j)] - row.c[static_cast<std::size_t>(j)]);
        }
        if (diff < 1e-12) {
          dup = true;
          break;
        }
      }
      if (!dup) kept.push_back(std::move(row));
    }
    in = std::move(kept);
    return true;
  };
  if (!prune(rows)) return false;

  for (int v : order) {
    std::vector<Row> pos, neg, rest;
    for (Row& row : rows) {
      const double c = row.c[static_cast<std::size_t>(v)];
      if (c > eps) {
        pos.push_back(std::move(row));
      } else if (c < -eps) {
        neg.push_back(std::move(row));
      } else {
        rest.push_back(std::move(row));
      }
    }
    // the variable's box enters as explicit rows so eliminations keep it
    Row up;
    up.c.assign(static_cast<std::size_t>(n_vars), 0.0);
    up.c[static_cast<std::size_t>(v)] = 1.0;
    up.r = box_hi[static_cast<std::size_t>(v)];
    pos.push_back(std::move(up));
    Row down;
    down.c.assign(static_cast<std::size_t>(n_vars), 0.0);
    down.c[static_cast<std::size_t>(v)] = -1.0;
    down.r = -box_lo[static_cast<std::size_t>(v)];
    neg.push_back(std::move(down));
    for (const Row& p : pos) {
      for (const Row& q : neg) {
        Row combined;
        combined.c.assign(static_cast<std::size_t>(n_vars), 0.0);
        const double a = p.c[static_cast<std::size_t>(v)];
        const double b = -q.c[static_cast<std::size_t>(v)];
        for (int j = 0; j < n_vars; ++j) {
          combined.c[static_cast<std::size_t>(j)] =
              p.c[static_cast<std::size_t>(j)] * b + q.c[static_cast<std::size_t>(j)] * a;
        }
        combined.c[static_cast<std::size_t>(v)] = 0.0;
        combined.r = p.r * b + q.r * a;
        double scale = std::abs(combined.r);
        for (double cj : combined.c) scale = std::max(scale, std::abs(cj));
        if (scale > 0) {
          for (double& cj : combined.c) cj /= scale;
          combined.r /= scale;
        }
        rest.push_back(std::move(combined));
      }
    }
    rows = std::move(rest);
    if (!prune(rows)) return false;
    if (rows.empty()) return true;
  }
  return true;
}

// Empirical CDF as knots: distinct values with F just below (fl) and at (fr).
struct Knots {
  std::vector<double> x, fl, fr;
};

Knots make_knots(std::vector<double> sample) {
  std::sort(sample.begin(), sample.end());
  Knots k;
  const double n = static_cast<double>(sample.size());
  std::size_t i = 0;
  while (i < sample.size()) {
    std::size_t j = i;
    while (j < sample.size() && sample[j] == sample[i]) ++j;
    k.x.push_back(sample[i]);
    k.fl.push_back(static_cast<double>(i) / n);
    k.fr.push_back(static_cast<double>(j) / n);
    i = j;
  }
  return k;
}

// Does some CDF convex up to knot `mode` and concave after fit within `delta`
// of the empirical CDF? Variables: values g_0..g_{K-1} at the knots plus the
// mode's left limit (a jump at the mode is a legal unimodal atom; anywhere
// else the two one-sided bands pin the value).
bool unimodal_fits(const Knots& k, int mode, double delta) {
  const int kk = static_cast<int>(k.x.size());
  const int a_var = kk;
  const int n_vars = kk + 1;
  std::vector<Row> rows;
  auto add = [&](std::initializer_list<std::pair<int, double>> terms, double r) {
    Row row;
    row.c.assign(static_cast<std::size_t>(n_vars), 0.0);
    for (auto [j, c] : terms) row.c[static_cast<std::size_t>(j)] += c;
    row.r = r;
    rows.push_back(std::move(row));
  };

  // per-variable bands as interval boxes
  std::vector<double> box_lo(static_cast<std::size_t>(n_vars)),
      box_hi(static_cast<std::size_t>(n_vars));
  for (int i = 0; i < kk; ++i) {
    const double hi = (i == mode ? k.fr[static_cast<std::size_t>(i)]
                                 : k.fl[static_cast<std::size_t>(i)]) +
                      delta;
    box_lo[static_cast<std::size_t>(i)] = std::max(k.fr[static_cast<std::size_t>(i)] - delta, 0.0);
    box_hi[static_cast<std::size_t>(i)] = std::min(hi, 1.0);
  }
  box_lo[static_cast<std::size_t>(a_var)] =
      std::max(k.fl[static_cast<std::size_t>(mode)] - delta, 0.0);
  box_hi[static_cast<std::size_t>(a_var)] =
      std::min(k.fl[static_cast<std::size_t>(mode)] + delta, 1.0);

  // monotone, with the left limit spliced in at the mode
  for (int i = 0; i + 1 < kk; ++i) {
    if (i + 1 == mode) {
      add({{i, 1.0}, {a_var, -1.0}}, 0.0);
    } else {
      add({{i, 1.0}, {i + 1, -1.0}}, 0.0);
    }
  }
  add({{a_var, 1.0}, {mode, -1.0}}, 0.0);

  // slopes nondecreasing through the left piece, nonincreasing through the
  // right piece; (xs, vs) lists each piece's breakpoints as (coordinate,
  // variable index)
  auto slope_chain = [&](const std::vector<std::pair<double, int>>& pts, double sign) {
    for (std::size_t i = 0; i + 2 < pts.size(); ++i) {
      const auto [xp, vp] = pts[i];
      const auto [xq, vq] = pts[i + 1];
      const auto [xr, vr] = pts[i + 2];
      // sign * [(vq - vp)(xr - xq) - (vr - vq)(xq - xp)] <= 0
      const double dqr = xr - xq, dpq = xq - xp;
      add({{vq, sign * (dqr + dpq)}, {vp, -sign * dqr}, {vr, -sign * dpq}}, 0.0);
    }
  };
  std::vector<std::pair<double, int>> left, right;
  for (int i = 0; i < mode; ++i) left.emplace_back(k.x[static_cast<std::size_t>(i)], i);
  left.emplace_back(k.x[static_cast<std::size_t>(mode)], a_var);
  for (int i = mode; i < kk; ++i) right.emplace_back(k.x[static_cast<std::size_t>(i)], i);
  slope_chain(left, 1.0);
  slope_chain(right, -1.0);

  std::vector<int> order;
  for (int i = 0; i < mode; ++i) order.push_back(i);
  order.push_back(a_var);
  for (int i = mode; i < kk; ++i) order.push_back(i);
  return fm_feasible(std::move(rows), order, box_lo, box_hi);
}

}  // namespace

double dip_brute_force(std::vector<double> sample) {
  if (sample.empty()) throw std::invalid_argument("dip oracle: empty sample");
  const Knots k = make_knots(std::move(sample));
  if (k.x.size() == 1) return 0.0;
  auto feasible = [&](double delta) {
    for (int mode = 0; mode < static_cast<int>(k.x.size()); ++mode) {
      if (unimodal_fits(k, mode, delta)) return true;
    }
    return false;
  };
  double lo = 0.0, hi = 0.3;
  for (int it = 0; it < 45; ++it) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? hi : lo) = mid;
  }
  return hi;
}

// ---- gradients ---------------------------------------------------------------

double cross_entropy(const Network& net, const Matrix& batch, const std::vector<int>& labels) {
  const Matrix logits = foldnet::forward(net, batch).logits();
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) z += std::exp(logits(i, c) - m);
    total += std::log(z) + m - logits(i, labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(logits.rows());
}

double max_rel_gradient_error(const Network& net, const Matrix& batch,
                              const std::vector<int>& labels, double h, int probes,
                              std::uint64_t seed) {
  const foldnet::BackwardResult analytic = foldnet::backward(net, batch, labels);
  Network work = net;
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    const std::size_t layer = rng() % work.layers.size();
    auto& lw = work.layers[layer];
    const std::size_t n_w = static_cast<std::size_t>(lw.weights.size());
    const std::size_t n_b = static_cast<std::size_t>(lw.biases.size());
    const std::size_t pick = rng() % (n_w + n_b);
    double* slot;
    double an;
    if (pick < n_w) {
      slot = lw.weights.data() + pick;
      an = analytic.grads.dw[layer].data()[pick];
    } else {
      slot = lw.biases.data() + (pick - n_w);
      an = analytic.grads.db[layer].data()[pick - n_w];
    }
    const double orig = *slot;
    *slot = orig + h;
    const double fp = cross_entropy(work, batch, labels);
    *slot = orig - h;
    const double fm = cross_entropy(work, batch, labels);
    *slot = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double rel = std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an));
    worst = std::max(worst, rel);
  }
  return worst;
}

// ---- poker -------------------------------------------------------------------

std::array<long long, 10> poker_class_counts() {
  auto comb = [](long long n, long long r) {
    long long out = 1;
    for (long long i = 0; i < r; ++i) out = out * (n - i) / (i + 1);
    return out;
  };
  std::array<long long, 10> counts{};
  const long long straights = 10;  // ace low through ace high
  counts[9] = 4;
  counts[8] = straights * 4 - 4;
  counts[7] = 13 * 48;
  counts[6] = 13 * comb(4, 3) * 12 * comb(4, 2);
  counts[5] = comb(13, 5) * 4 - straights * 4;
  counts[4] = straights * 4 * 4 * 4 * 4 * 4 - straights * 4;
  counts[3] = 13 * comb(4, 3) * comb(12, 2) * 4 * 4;
  counts[2] = comb(13, 2) * comb(4, 2) * comb(4, 2) * 11 * 4;
  counts[1] = 13 * comb(4, 2) * comb(12, 3) * 4 * 4 * 4;
  counts[0] = (comb(13, 5) - straights) * (4 * 4 * 4 * 4 * 4 - 4);
  return counts;
}

// ---- fold geometry -----------------------------------------------------------

double fold_outer_recall_2d(double r_mid, double r_out, double d) {
  if (2.0 * d > r_out) throw std::invalid_argument("triangle pokes past the shell");
  if (2.0 * d <= r_mid) return 1.0;  // triangle fits in the hole
  const double shell = M_PI * (r_out * r_out - r_mid * r_mid);
  const double tri = 3.0 * std::sqrt(3.0) * d * d;
  double overlap_hole;  // triangle ∩ disc(r_mid)
  if (d >= r_mid) {
    overlap_hole = M_PI * r_mid * r_mid;
  } else {
    const double theta = 2.0 * std::acos(d / r_mid);
    const double seg = 0.5 * r_mid * r_mid * (theta - std::sin(theta));
    overlap_hole = M_PI * r_mid * r_mid - 3.0 * seg;
  }
  return 1.0 - (tri - overlap_hole) / shell;
}

double fold_outer_recall_mc(int dim, double r_mid, double r_out, double d, std::size_t n,
                            std::uint64_t seed) {
  // regular simplex normals: normalized rows of an orthonormal basis of the
  // centering projector's column space
  const int m = dim + 1;
  Matrix centering = Matrix::Identity(m, m) - Matrix::Constant(m, m, 1.0 / m);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(centering);
  Matrix q(m, dim);
  int col = 0;
  for (int i = 0; i < m; ++i) {
    if (solver.eigenvalues()[i] > 0.5) q.col(col++) = solver.eigenvectors().col(i);
  }
  Matrix normals(m, dim);
  for (int i = 0; i < m; ++i) normals.row(i) = q.row(i).normalized();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double nd = static_cast<double>(dim);
  std::size_t outside = 0;
  Vector x(dim);
  for (std::size_t s = 0; s < n; ++s) {
    for (int j = 0; j < dim; ++j) x[j] = gauss(rng);
    x.normalize();
    const double r = std::pow(std::pow(r_mid, nd) + unif(rng) * (std::pow(r_out, nd) - std::pow(r_mid, nd)),
                              1.0 / nd);
    x *= r;
    if (((normals * x).array() > d).any()) ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(n);
}

double best_linear_balanced_2d(double r_in, double r_mid, double r_out) {
  auto right_area = [](double r, double t) {  // area of disc(r) ∩ {x > t}
    if (t <= -r) return M_PI * r * r;
    if (t >= r) return 0.0;
    return r * r * std::acos(t / r) - t * std::sqrt(r * r - t * t);
  };
  const double a0 = M_PI * r_in * r_in;
  const double a1 = M_PI * (r_out * r_out - r_mid * r_mid);
  double best = 0.0;
  for (double t = 0.0; t <= r_out; t += 1e-4) {
    const double rec0 = 1.0 - right_area(r_in, t) / a0;
    const double rec1 = (right_area(r_out, t) - right_area(r_mid, t)) / a1;
    best = std::max(best, 0.5 * (rec0 + rec1));
  }
  return best;
}

// ---- scoring -----------------------------------------------------------------

double macro_f1_naive(const std::vector<int>& predictions, const std::vector<int>& labels,
                      const std::vector<int>& excluded) {
  // Class universe = 0..max over both vectors; a class absent from both still
  // contributes an F1 of zero unless excluded.
  int top = -1;
  for (const auto* v : {&predictions, &labels}) {
    for (int c : *v) top = std::max(top, c);
  }
  std::vector<int> classes;
  for (int c = 0; c <= top; ++c) classes.push_back(c);
  double total = 0.0;
  int used = 0;
  for (int c : classes) {
    if (std::find(excluded.begin(), excluded.end(), c) != excluded.end()) continue;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool pred = predictions[i] == c, truth = labels[i] == c;
      tp += pred && truth;
      fp += pred && !truth;
      fn += !pred && truth;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    total += denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    ++used;
  }
  if (used == 0) throw std::invalid_argument("macro_f1 oracle: every class excluded");
  return total / used;
}

Vector covariance_eigenvalues(const Matrix& data) {
  const Matrix centered = data.rowwise() - data.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  return solver.eigenvalues().reverse();
}

double expected_subspace_angle(int n, int d) {
  const double a = d / 2.0, b = (n - d) / 2.0;
  const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  // E[arccos(sqrt(u))], u ~ Beta(a, b), composite Simpson
  const int steps = 200000;
  const double hstep = 1.0 / steps;
  auto f = [&](double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;  // integrand vanishes for a,b > 1
    const double logpdf = (a - 1.0) * std::log(u) + (b - 1.0) * std::log1p(-u) - log_beta;
    return std::acos(std::sqrt(u)) * std::exp(logpdf);
  };
  double total = f(0.0) + f(1.0);
  for (int i = 1; i < steps; ++i) total += f(i * hstep) * (i % 2 == 1 ? 4.0 : 2.0);
  return total * hstep / 3.0;
}

}  // namespace oracle
