#pragma once
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "foldnet/nn.hpp"

namespace foldnet {

struct Hyperplane {
  Vector normal;   // unit length
  double offset;   // plane is <normal, x> + offset = 0
};

// Rows are the N+1 outward vertex directions of a regular N-simplex centered
// at the origin: unit length, pairwise dot products exactly -1/N.
Matrix simplex_directions(int n);

// One hidden layer of N+1 relu units (normals = simplex directions, bias -d
// with d = (r_in + r_mid)/2) plus a 1-d readout = minus the sum of hidden
// activations. Inner-ball points produce score exactly 0.
Network build_fold_solution(int n_dim, const EggSpec& egg);

struct SeparabilityReport {
  std::vector<double> recall;  // per class
  double threshold;            // on the readout scalar
  bool high_side_class1;       // class 1 predicted on score >= threshold
  double balanced() const;
};

// Scores every sample with one scalar readout (a logit index or an explicit
// direction applied to the logits) and picks the threshold maximizing
// balanced recall; deterministic tie-break (lowest threshold).
struct ReadoutSpec {
  int logit = 0;                     // used when direction is empty
  Vector direction;                  // optional: score = direction . logits
};
SeparabilityReport evaluate_separability(const Network& net, const LabeledDataset& dataset,
                                         const ReadoutSpec& readout = {});

// ---- shear (tied-weight) networks ------------------------------------------

struct ShearSearchOptions {
  int depth = 7;
  int width = 2;
  int restarts = 50;
  int iterations = 600;     // optimizer steps per restart
  std::uint64_t seed = 7;
  double recall_floor = 0.90;
};

struct ShearSearchResult {
  Matrix cell_weights;      // width x width, shared by all hidden layers
  Vector cell_biases;
  Vector readout_direction; // scalar score = direction . final activations
  Network net;              // unrolled depth-layer network + identity readout
  SeparabilityReport recalls;
  bool passed;              // both recalls >= recall_floor
  int best_restart;
};

// Recovers a tied-weight shear solution by gradient descent through the
// unrolled network, best of `restarts` restarts (ties: lowest restart index).
ShearSearchResult build_shear_network(const LabeledDataset& egg, const ShearSearchOptions& opts);

// k copies of the (square) cell as relu layers plus an identity readout.
Network unroll_recurrent(const Matrix& cell_w, const Vector& cell_b, int steps);
// Same arithmetic applied iteratively: x <- relu(W x + b), k times.
Vector iterate_recurrent(const Matrix& cell_w, const Vector& cell_b, Vector x, int steps);

// ---- squash chains ----------------------------------------------------------

struct SquashStep {
  Vector normal;  // unit
  double offset;  // squash plane is <normal, x> = offset
};

struct SquashChain {
  std::vector<SquashStep> steps;
};

struct ChainCheck {
  bool ok = true;
  int step = -1;        // first failing step (1-based), -1 if ok
  std::string reason;   // empty if ok
};

// ok iff every per-step turn is < pi/2 and the cumulative directed angle
// stays < pi (signed in 2-d; |.|-summed in higher dimensions).
ChainCheck validate_squash_chain(const SquashChain& chain);

// Width-2 relu layers: rotate u_i onto axis 0, squash at the offset, keep the
// other coordinate positive via a bias shift undone in the next affine map;
// final identity layer maps back to input coordinates. data_radius bounds the
// input points (needed to size the shift).
Network build_squash_chain_network(const SquashChain& chain, int data_dim,
                                   double data_radius);

void save_chain(const SquashChain& chain, const std::filesystem::path& path);
SquashChain load_chain(const std::filesystem::path& path);

// Tangential squash chain along a circular arc: the squash directions are the
// circle tangents at angles equally spaced over [phi_from, phi_to] (radians),
// each plane passing through the center (offset 0), so step i folds the
// already-swept angular sector onto the radial line at phi_i.
SquashChain arc_squash_chain(double phi_from, double phi_to, int steps);

// Two-class 2-d task whose boundary is (mostly) a half-circle arc: class 0
// uniform in the half-disc {r <= 0.95, x >= 0}, class 1 uniform in the sector
// shell {r in [1.05, 1.6], |angle| <= 65 deg}.
LabeledDataset make_half_disc_dataset(std::size_t per_class, std::uint64_t seed);

// Best separating direction over an angle grid (2-d output networks):
// evaluates every candidate with evaluate_separability and returns the
// highest balanced recall (ties: smallest angle index).
SeparabilityReport best_direction_separability(const Network& net, const LabeledDataset& dataset,
                                               int n_angles = 180);

}  // namespace foldnet
