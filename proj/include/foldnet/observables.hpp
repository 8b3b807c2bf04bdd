#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "foldnet/dip.hpp"
#include "foldnet/nn.hpp"

namespace foldnet {

// ---- streaming PCA --------------------------------------------------------

struct PcaSummary {
  std::size_t count = 0;
  Vector mean;
  Matrix covariance;
  Vector eigenvalues;  // descending
  Matrix basis;        // columns are eigenvectors, same order

  double trace() const { return eigenvalues.sum(); }
  double participation_ratio() const;
};

// Single-pass mean/covariance accumulator (Chan et al. pairwise update);
// result independent of how the data was batched.
class StreamingPca {
 public:
  void add(const Matrix& batch);  // rows are samples
  PcaSummary finalize() const;    // needs >= 2 samples
  std::size_t count() const { return count_; }

 private:
  std::size_t count_ = 0;
  Vector mean_;
  Matrix m2_;  // sum of outer products of centered samples
};

// Count of eigenvalues > eps_rel * trace; zero-trace data has dimensionality 0.
int dimensionality(const PcaSummary& summary, double eps_rel);

// ---- tuning curves --------------------------------------------------------

struct NeuronTuning {
  int layer;
  int neuron;
  std::vector<double> bin_edges;            // shared per neuron; 0 on an edge
  std::vector<std::vector<std::uint64_t>> counts;  // [class][bin]
};

struct TuningCurves {
  std::vector<int> classes;
  std::vector<NeuronTuning> neurons;
};

// Per-class histograms of every neuron's preactivations (all layers). Each
// neuron's bin range covers all of its values, with zero forced onto a bin
// edge (the folding-edge marker).
TuningCurves tuning_histograms(const ActivationTrace& trace, const std::vector<int>& labels,
                               const std::vector<int>& classes, int bins = 61);

// ---- dip report -----------------------------------------------------------

struct DipReport {
  std::vector<int> classes;
  std::vector<int> layer_index;  // network layer behind each report entry
  // dip[layer][neuron][class_index]; hidden (relu) layers only, layer 0-based.
  std::vector<std::vector<std::vector<double>>> dip;
  // Surrogate dips with redraws stacked along the neuron axis
  // (surrogate_seed_count * width entries per layer).
  std::vector<std::vector<std::vector<double>>> surrogate_dip;
  std::vector<double> surrogate_max;       // per layer, max over neurons x classes x redraws
  std::vector<std::vector<bool>> is_large; // per layer, per neuron

  double max_class_dip(std::size_t layer, std::size_t neuron) const;
};

struct DipReportOptions {
  std::vector<int> classes;
  int surrogate_seed_count = 1;
  std::uint64_t surrogate_seed = 1234;   // base seed for layer re-draws
  std::size_t subsample_cap = 50000;     // per (neuron, class), fixed-seed reservoir
  std::size_t batch_rows = 20000;        // forward pass chunking
};

// Per-neuron, per-class dips of hidden-layer preactivations. The layer-l
// surrogate re-draws layer l from the init scheme, keeps upstream trained
// layers, and records preactivations at layer l. A neuron is "large" iff its
// max-over-classes dip exceeds the layer's surrogate maximum.
DipReport dip_report(const Network& net, const LabeledDataset& dataset,
                     const DipReportOptions& options);

// ---- angles ---------------------------------------------------------------

// Angle in [0, pi/2] between w and the span of the orthonormal rows of basis.
double subspace_angle(const Vector& w, const Matrix& basis);

struct AngleReport {
  int layer;
  int subspace_dim;
  std::vector<double> theta;  // per neuron
};

// Angles of layer `layer` weight rows against the representation subspace of
// that layer's input (eigenvectors with eigenvalue > eps_rel * trace).
AngleReport angle_report(const Network& net, int layer, const PcaSummary& input_pca,
                         double eps_rel);

// ---- ablation -------------------------------------------------------------

struct AblationResult {
  int layer;
  double f1_intact;
  double f1_large_silenced;
  double f1_small_silenced;
  std::vector<int> large_set;  // top-k neurons by max-over-classes dip
  std::vector<int> small_set;  // bottom-k
};

// Silences top-k / bottom-k dip neurons of one hidden layer and scores each
// variant with macro_f1 on the dataset.
AblationResult ablation_experiment(const Network& net, const LabeledDataset& dataset,
                                   const DipReport& report, int layer, int k,
                                   const std::vector<int>& excluded_classes);

// Unweighted mean of per-class F1 over non-excluded classes; classes absent
// from both predictions and labels count as F1 = 0 unless excluded.
double macro_f1(const std::vector<int>& predictions, const std::vector<int>& labels,
                const std::vector<int>& excluded_classes);

}  // namespace foldnet
