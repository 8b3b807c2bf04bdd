#pragma once
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "foldnet/data.hpp"

namespace foldnet {

enum class Activation { kRelu, kIdentity };

struct DenseLayer {
  Matrix weights;  // out x in
  Vector biases;   // out
  Activation activation = Activation::kRelu;

  int fan_in() const { return static_cast<int>(weights.cols()); }
  int fan_out() const { return static_cast<int>(weights.rows()); }
};

struct Network {
  int input_dim = 0;
  std::vector<DenseLayer> layers;
  // Free-form metadata (seed, init scheme, training record); always carried
  // through save/load untouched, including keys this code never set.
  std::string metadata_json = "{}";

  int output_dim() const { return layers.empty() ? input_dim : layers.back().fan_out(); }
  int layer_count() const { return static_cast<int>(layers.size()); }

  // Throws std::invalid_argument on any structural violation: width chain
  // mismatch, non-finite parameter, or non-identity final activation.
  void validate() const;
};

// Weights uniform over +/- 1/sqrt(fan_in), biases zero, hidden layers relu,
// final layer identity (logits). widths = [input, hidden..., output].
Network init_network(const std::vector<int>& widths, std::uint64_t seed);

// Single layer drawn from the same scheme (used for surrogate layers).
DenseLayer init_layer(int fan_in, int fan_out, Activation act, std::uint64_t seed);

// Per-layer sets of neuron indices whose activation is clamped to zero after
// the nonlinearity. The final (logits) layer is never clamped.
struct SilenceMask {
  std::vector<std::vector<int>> silenced;  // one entry per layer; sorted, unique

  static SilenceMask none(const Network& net);
  void validate(const Network& net) const;
  bool empty() const;
};

struct ActivationTrace {
  Matrix input;                       // batch x input_dim
  std::vector<Matrix> preactivations; // batch x width_l
  std::vector<Matrix> activations;    // batch x width_l

  const Matrix& logits() const { return activations.back(); }
};

ActivationTrace forward(const Network& net, const Matrix& batch,
                        const SilenceMask* mask = nullptr);

// Argmax class per row of the logits (ties to the lowest index).
std::vector<int> predict(const Network& net, const Matrix& batch,
                         const SilenceMask* mask = nullptr);

struct Gradients {
  std::vector<Matrix> dw;
  std::vector<Vector> db;
};

struct BackwardResult {
  double loss = 0.0;  // mean softmax cross-entropy over the batch
  Gradients grads;
};

BackwardResult backward(const Network& net, const Matrix& batch,
                        const std::vector<int>& labels);

struct TrainPhase {
  double learning_rate;
  int epochs;
};

struct TrainSchedule {
  std::vector<TrainPhase> phases;
  double momentum = 0.9;
  int batch_size = 500;
  std::uint64_t shuffle_seed = 0;
  bool use_float32 = false;  // training arithmetic in f32; analysis stays f64

  void validate() const;
  int total_epochs() const;
};

struct EpochStats {
  int epoch;        // 0-based, monotone across phases
  double learning_rate;
  double loss;      // mean over batches
  double accuracy;  // training accuracy this epoch
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

// Classic momentum: v <- m*v - lr*g, theta <- theta + v. Shuffles sample
// order each epoch from shuffle_seed. Throws on NaN loss with a diagnostic.
TrainReport train(Network& net, const Matrix& inputs, const std::vector<int>& labels,
                  const TrainSchedule& schedule);
TrainReport train(Network& net, const LabeledDataset& dataset, const TrainSchedule& schedule);

// Model file: {"widths": [...], "layers": [{"w": row-major, "b": [...],
// "act": "relu"|"identity"}], "meta": {...}}. Round-trip is bit-exact.
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);
std::string network_to_json_text(const Network& net);
Network network_from_json_text(const std::string& text);

}  // namespace foldnet
