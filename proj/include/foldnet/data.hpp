#pragma once
#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace foldnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct LabeledDataset {
  Matrix inputs;            // n x d
  std::vector<int> labels;  // values in [0, n_classes)
  int n_classes = 0;
  std::string provenance;   // generator config or source file

  std::size_t size() const { return labels.size(); }
};

// ---- poker hands ----------------------------------------------------------

struct PokerCard {
  int suit;  // 1..4
  int rank;  // 1..13, ace = 1
};

struct PokerHand {
  std::array<PokerCard, 5> cards;
};

// Hand classes 0..9: nothing, pair, two pairs, three of a kind, straight,
// flush, full house, four of a kind, straight flush, royal flush.
// Ace plays low and high in straights; royal flush is {1,10,11,12,13} suited.
int label_hand(const PokerHand& hand);

enum class PokerMode { kUniformOrdered, kExhaustiveCombinations };

// Uniform mode: n ordered 5-card hands without within-hand duplicates,
// deterministic per seed. Exhaustive mode: all C(52,5) unordered hands, one
// row each, in lexicographic card order (n ignored).
LabeledDataset generate_poker(std::size_t n, std::uint64_t seed, PokerMode mode);

struct UciLoadResult {
  LabeledDataset data;
  std::size_t label_mismatches = 0;  // file labels disagreeing with label_hand
};

// Reads "S1,C1,...,S5,C5,CLASS" lines; every parsed label is cross-checked
// against label_hand.
UciLoadResult load_uci_poker(const std::filesystem::path& path);

// ---- egg distributions ----------------------------------------------------

struct EggSpec {
  int dim = 2;
  double r_in = 1.0;
  double r_mid = 1.2;
  double r_out = 4.0;
  std::size_t per_class = 20000;
  std::uint64_t seed = 1;
};

// Class 0 uniform in the N-ball of radius r_in, class 1 uniform in the shell
// [r_mid, r_out].
LabeledDataset generate_egg(const EggSpec& spec);

// ---- persistence ----------------------------------------------------------

// CSV with header x0..x{d-1},label plus a <path>.meta.json provenance sidecar.
void save_dataset_csv(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset_csv(const std::filesystem::path& path);

// Optional per-feature standardization (in-place); returns (mean, sd) rows.
std::pair<Vector, Vector> standardize_features(LabeledDataset& ds);

}  // namespace foldnet
