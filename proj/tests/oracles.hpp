#pragma once
#include <array>
#include <cstdint>
#include <vector>

#include "foldnet/data.hpp"
#include "foldnet/nn.hpp"

// Reference implementations the tests score the library against. Each one is
// written from the definition, independently of the code under test.
namespace oracle {

// Hartigan dip by direct minimization over unimodal CDFs: bisection on the
// sup-distance, feasibility of a convex-then-concave CDF inside the distance
// band decided exactly per candidate mode via Fourier-Motzkin elimination.
double dip_brute_force(std::vector<double> sample);

// Largest relative disagreement between backward() gradients and central
// finite differences of the forward-pass cross-entropy, over `probes`
// randomly chosen parameters.
double max_rel_gradient_error(const foldnet::Network& net, const foldnet::Matrix& batch,
                              const std::vector<int>& labels, double h, int probes,
                              std::uint64_t seed);

// Softmax cross-entropy of forward() logits, computed here.
double cross_entropy(const foldnet::Network& net, const foldnet::Matrix& batch,
                     const std::vector<int>& labels);

// The ten 5-card poker hand class counts from the standard combinatorial
// formulas; index = class id, 0 (nothing) .. 9 (royal flush).
std::array<long long, 10> poker_class_counts();

// Recall of the shell class under the 2-d fold construction (probability a
// shell point falls outside the inradius-d triangle), closed form.
double fold_outer_recall_2d(double r_mid, double r_out, double d);

// Same quantity for any dimension by Monte Carlo against an independently
// constructed regular simplex.
double fold_outer_recall_mc(int dim, double r_mid, double r_out, double d, std::size_t n,
                            std::uint64_t seed);

// Best balanced accuracy of any linear cut on the egg distribution, from the
// exact class CDFs along one axis (both classes are isotropic). 2-d only.
double best_linear_balanced_2d(double r_in, double r_mid, double r_out);

// Plain per-class precision/recall macro-F1 recomputation.
double macro_f1_naive(const std::vector<int>& predictions, const std::vector<int>& labels,
                      const std::vector<int>& excluded);

// Descending eigenvalues of the sample covariance (n-1 divisor), one shot.
foldnet::Vector covariance_eigenvalues(const foldnet::Matrix& data);

// E[angle between a uniformly random direction in R^n and a fixed d-dim
// subspace]: numeric integration of the Beta(d/2, (n-d)/2) law of cos^2.
double expected_subspace_angle(int n, int d);

}  // namespace oracle
