#include "foldnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "foldnet/rng.hpp"

namespace foldnet {
namespace {

void fill_layer(DenseLayer& layer, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(layer.fan_in()));
  for (int r = 0; r < layer.weights.rows(); ++r) {
    for (int c = 0; c < layer.weights.cols(); ++c) {
      layer.weights(r, c) = rng.uniform(-bound, bound);
    }
  }
  layer.biases.setZero();
}

}  // namespace

void Network::validate() const {
  if (input_dim <= 0) throw std::invalid_argument("network: input_dim must be positive");
  if (layers.empty()) throw std::invalid_argument("network: no layers");
  int width = input_dim;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.fan_in() != width) {
      throw std::invalid_argument("network: layer " + std::to_string(l) + " expects input width " +
                                  std::to_string(layer.fan_in()) + ", previous width is " +
                                  std::to_string(width));
    }
    if (layer.fan_out() <= 0) throw std::invalid_argument("network: layer width must be positive");
    if (layer.biases.size() != layer.fan_out()) {
      throw std::invalid_argument("network: layer " + std::to_string(l) + " bias size mismatch");
    }
    if (!layer.weights.allFinite() || !layer.biases.allFinite()) {
      throw std::invalid_argument("network: layer " + std::to_string(l) +
                                  " has non-finite parameters");
    }
    width = layer.fan_out();
  }
  if (layers.back().activation != Activation::kIdentity) {
    throw std::invalid_argument("network: final layer must have identity activation (logits)");
  }
}

DenseLayer init_layer(int fan_in, int fan_out, Activation act, std::uint64_t seed) {
  if (fan_in <= 0 || fan_out <= 0) throw std::invalid_argument("init_layer: widths must be positive");
  DenseLayer layer{Matrix(fan_out, fan_in), Vector(fan_out), act};
  Rng rng(seed);
  fill_layer(layer, rng);
  return layer;
}

Network init_network(const std::vector<int>& widths, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("init_network: need at least 2 widths");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("init_network: widths must be positive");
  }
  Network net;
  net.input_dim = widths.front();
  Rng rng(seed);
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const bool last = (l + 1 == widths.size());
    DenseLayer layer{Matrix(widths[l], widths[l - 1]), Vector(widths[l]),
                     last ? Activation::kIdentity : Activation::kRelu};
    fill_layer(layer, rng);
    net.layers.push_back(std::move(layer));
  }
  nlohmann::json meta;
  meta["seed"] = seed;
  meta["init"] = "uniform(+/-1/sqrt(fan_in))";
  net.metadata_json = meta.dump();
  net.validate();
  return net;
}

SilenceMask SilenceMask::none(const Network& net) {
  SilenceMask mask;
  mask.silenced.assign(net.layers.size(), {});
  return mask;
}

bool SilenceMask::empty() const {
  for (const auto& s : silenced) {
    if (!s.empty()) return false;
  }
  return true;
}

void SilenceMask::validate(const Network& net) const {
  if (silenced.size() > net.layers.size()) {
    throw std::invalid_argument("mask: more layers than the network has");
  }
  for (std::size_t l = 0; l < silenced.size(); ++l) {
    if (!silenced[l].empty() && l + 1 == net.layers.size()) {
      throw std::invalid_argument("mask: logits layer cannot be silenced");
    }
    for (int idx : silenced[l]) {
      if (idx < 0 || idx >= net.layers[l].fan_out()) {
        throw std::invalid_argument("mask: neuron " + std::to_string(idx) +
                                    " out of range in layer " + std::to_string(l));
      }
    }
  }
}

ActivationTrace forward(const Network& net, const Matrix& batch, const SilenceMask* mask) {
  net.validate();
  if (batch.cols() != net.input_dim) {
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols()) +
                                " columns, network expects " + std::to_string(net.input_dim));
  }
  if (!batch.allFinite()) throw std::invalid_argument("forward: non-finite input");
  if (mask) mask->validate(net);

  ActivationTrace trace;
  trace.input = batch;
  trace.preactivations.reserve(net.layers.size());
  trace.activations.reserve(net.layers.size());
  const Matrix* current = &trace.input;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    Matrix pre = (*current * layer.weights.transpose()).rowwise() + layer.biases.transpose();
    Matrix act = (layer.activation == Activation::kRelu) ? pre.cwiseMax(0.0) : pre;
    if (mask && l < mask->silenced.size()) {
      for (int idx : mask->silenced[l]) act.col(idx).setZero();
    }
    trace.preactivations.push_back(std::move(pre));
    trace.activations.push_back(std::move(act));
    current = &trace.activations.back();
  }
  return trace;
}

std::vector<int> predict(const Network& net, const Matrix& batch, const SilenceMask* mask) {
  const ActivationTrace trace = forward(net, batch, mask);
  const Matrix& logits = trace.logits();
  std::vector<int> out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = static_cast<int>(c);
    }
    out[i] = best;
  }
  return out;
}

namespace {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct Params {
  std::vector<Mat<Scalar>> w;
  std::vector<Vec<Scalar>> b;
  std::vector<bool> relu;
};

// Forward + softmax-CE backward over one batch; returns mean loss and the
// number of argmax hits. Gradients use the mean reduction. xt is the input
// set transposed (features x samples) so each gathered sample is contiguous.
template <typename Scalar>
Scalar batch_backward(const Params<Scalar>& p, const Mat<Scalar>& xt,
                      const std::vector<int>& labels, const Eigen::Index* idx, Eigen::Index m,
                      std::vector<Mat<Scalar>>& acts, std::vector<Mat<Scalar>>& pres,
                      std::vector<Mat<Scalar>>& dw, std::vector<Vec<Scalar>>& db,
                      Eigen::Index* hits_out) {
  const std::size_t depth = p.w.size();
  // acts[0] is the input batch.
  acts[0].resize(m, xt.rows());
  for (Eigen::Index i = 0; i < m; ++i) {
    acts[0].row(i) = xt.col(idx ? idx[i] : i).transpose();
  }
  for (std::size_t l = 0; l < depth; ++l) {
    pres[l].noalias() = acts[l] * p.w[l].transpose();
    pres[l].rowwise() += p.b[l].transpose();
    acts[l + 1] = p.relu[l] ? pres[l].cwiseMax(Scalar(0)) : pres[l];
  }

  // Stable softmax + CE on the logits.
  Mat<Scalar>& delta = acts[depth];  // reuse as softmax/delta buffer
  Scalar loss = 0;
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index argmax = 0;
    const Scalar mx = delta.row(i).maxCoeff(&argmax);
    delta.row(i) = (delta.row(i).array() - mx).exp();
    const Scalar z = delta.row(i).sum();
    delta.row(i) /= z;
    const int y = labels[idx ? idx[i] : i];
    loss -= std::log(std::max(delta(i, y), std::numeric_limits<Scalar>::min()));
    if (argmax == y) ++hits;
    delta(i, y) -= Scalar(1);
  }
  loss /= Scalar(m);
  delta /= Scalar(m);
  if (hits_out) *hits_out = hits;

  for (std::size_t l = depth; l-- > 0;) {
    dw[l].noalias() = delta.transpose() * acts[l];
    db[l] = delta.colwise().sum();
    if (l > 0) {
      Mat<Scalar> prev = delta * p.w[l];
      if (p.relu[l - 1]) {
        prev = (pres[l - 1].array() > Scalar(0)).select(prev, Scalar(0));
      }
      delta = std::move(prev);
    }
  }
  return loss;
}

template <typename Scalar>
TrainReport train_impl(Network& net, const Matrix& inputs, const std::vector<int>& labels,
                       const TrainSchedule& schedule) {
  Params<Scalar> p;
  for (const auto& layer : net.layers) {
    p.w.push_back(layer.weights.template cast<Scalar>());
    p.b.push_back(layer.biases.template cast<Scalar>());
    p.relu.push_back(layer.activation == Activation::kRelu);
  }
  const Mat<Scalar> xt = inputs.transpose().template cast<Scalar>();
  const std::size_t depth = p.w.size();

  std::vector<Mat<Scalar>> vel_w, dw, acts(depth + 1), pres(depth);
  std::vector<Vec<Scalar>> vel_b, db;
  for (std::size_t l = 0; l < depth; ++l) {
    vel_w.push_back(Mat<Scalar>::Zero(p.w[l].rows(), p.w[l].cols()));
    vel_b.push_back(Vec<Scalar>::Zero(p.b[l].size()));
    dw.push_back(Mat<Scalar>());
    db.push_back(Vec<Scalar>());
  }

  const Eigen::Index n = inputs.rows();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  Rng shuffle_rng(schedule.shuffle_seed);
  const Scalar momentum = static_cast<Scalar>(schedule.momentum);

  TrainReport report;
  int epoch = 0;
  for (const auto& phase : schedule.phases) {
    const Scalar lr = static_cast<Scalar>(phase.learning_rate);
    for (int e = 0; e < phase.epochs; ++e, ++epoch) {
      shuffle_rng.shuffle(order);
      double loss_sum = 0.0;
      Eigen::Index hit_sum = 0;
      Eigen::Index batches = 0;
      for (Eigen::Index start = 0; start < n; start += schedule.batch_size) {
        const Eigen::Index m = std::min<Eigen::Index>(schedule.batch_size, n - start);
        Eigen::Index hits = 0;
        const Scalar loss =
            batch_backward(p, xt, labels, order.data() + start, m, acts, pres, dw, db, &hits);
        if (!std::isfinite(static_cast<double>(loss))) {
          throw std::runtime_error("train: loss became non-finite at epoch " +
                                   std::to_string(epoch) + ", batch " + std::to_string(batches) +
                                   " (lr=" + std::to_string(static_cast<double>(lr)) + ")");
        }
        loss_sum += static_cast<double>(loss);
        hit_sum += hits;
        ++batches;
        for (std::size_t l = 0; l < depth; ++l) {
          vel_w[l] = momentum * vel_w[l] - lr * dw[l];
          vel_b[l] = momentum * vel_b[l] - lr * db[l];
          p.w[l] += vel_w[l];
          p.b[l] += vel_b[l];
        }
      }
      report.epochs.push_back({epoch, static_cast<double>(lr),
                               batches ? loss_sum / static_cast<double>(batches) : 0.0,
                               static_cast<double>(hit_sum) / static_cast<double>(n)});
    }
  }

  for (std::size_t l = 0; l < depth; ++l) {
    net.layers[l].weights = p.w[l].template cast<double>();
    net.layers[l].biases = p.b[l].template cast<double>();
  }
  return report;
}

}  // namespace

void TrainSchedule::validate() const {
  if (phases.empty()) throw std::invalid_argument("schedule: at least one phase required");
  for (const auto& ph : phases) {
    if (ph.learning_rate < 0) throw std::invalid_argument("schedule: learning rate must be >= 0");
    if (ph.epochs < 0) throw std::invalid_argument("schedule: epoch count must be >= 0");
  }
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("schedule: momentum in [0,1)");
  if (batch_size <= 0) throw std::invalid_argument("schedule: batch_size must be positive");
}

int TrainSchedule::total_epochs() const {
  int total = 0;
  for (const auto& ph : phases) total += ph.epochs;
  return total;
}

BackwardResult backward(const Network& net, const Matrix& batch, const std::vector<int>& labels) {
  net.validate();
  if (batch.cols() != net.input_dim) throw std::invalid_argument("backward: shape mismatch");
  if (static_cast<std::size_t>(batch.rows()) != labels.size()) {
    throw std::invalid_argument("backward: batch rows and labels differ");
  }
  if (batch.rows() == 0) throw std::invalid_argument("backward: empty batch");
  const int n_classes = net.output_dim();
  for (int y : labels) {
    if (y < 0 || y >= n_classes) {
      throw std::invalid_argument("backward: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(n_classes) + ")");
    }
  }
  Params<double> p;
  for (const auto& layer : net.layers) {
    p.w.push_back(layer.weights);
    p.b.push_back(layer.biases);
    p.relu.push_back(layer.activation == Activation::kRelu);
  }
  const std::size_t depth = p.w.size();
  const Matrix xt = batch.transpose();
  std::vector<Matrix> acts(depth + 1), pres(depth);
  BackwardResult result;
  result.grads.dw.resize(depth);
  result.grads.db.resize(depth);
  result.loss = batch_backward<double>(p, xt, labels, nullptr, batch.rows(), acts, pres,
                                       result.grads.dw, result.grads.db, nullptr);
  return result;
}

TrainReport train(Network& net, const Matrix& inputs, const std::vector<int>& labels,
                  const TrainSchedule& schedule) {
  net.validate();
  schedule.validate();
  if (inputs.rows() == 0) throw std::invalid_argument("train: empty dataset");
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw std::invalid_argument("train: inputs and labels differ in length");
  }
  if (inputs.cols() != net.input_dim) throw std::invalid_argument("train: input width mismatch");
  const int n_classes = net.output_dim();
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw std::invalid_argument("train: label out of range");
  }

  TrainReport report = schedule.use_float32 ? train_impl<float>(net, inputs, labels, schedule)
                                            : train_impl<double>(net, inputs, labels, schedule);

  nlohmann::json meta = nlohmann::json::parse(net.metadata_json);
  nlohmann::json record;
  record["epochs"] = schedule.total_epochs();
  record["batch_size"] = schedule.batch_size;
  record["momentum"] = schedule.momentum;
  record["shuffle_seed"] = schedule.shuffle_seed;
  record["precision"] = schedule.use_float32 ? "f32" : "f64";
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& ph : schedule.phases) {
    phases.push_back({{"lr", ph.learning_rate}, {"epochs", ph.epochs}});
  }
  record["phases"] = phases;
  if (!report.epochs.empty()) {
    record["final_loss"] = report.epochs.back().loss;
    record["final_accuracy"] = report.epochs.back().accuracy;
  }
  meta["training"] = record;
  net.metadata_json = meta.dump();
  return report;
}

TrainReport train(Network& net, const LabeledDataset& dataset, const TrainSchedule& schedule) {
  return train(net, dataset.inputs, dataset.labels, schedule);
}

}  // namespace foldnet
