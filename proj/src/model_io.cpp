#include <string>

#include "json.hpp"

#include "foldnet/nn.hpp"
#include "foldnet/util.hpp"

namespace foldnet {

using nlohmann::json;

std::string network_to_json_text(const Network& net) {
  json j;
  std::vector<int> widths;
  widths.push_back(net.input_dim);
  for (const auto& layer : net.layers) widths.push_back(layer.fan_out());
  j["widths"] = widths;
  json layers = json::array();
  for (const auto& layer : net.layers) {
    json jl;
    std::vector<double> w(layer.weights.size());
    for (int r = 0; r < layer.weights.rows(); ++r) {
      for (int c = 0; c < layer.weights.cols(); ++c) {
        w[static_cast<std::size_t>(r) * layer.weights.cols() + c] = layer.weights(r, c);
      }
    }
    jl["w"] = w;
    jl["b"] = std::vector<double>(layer.biases.data(), layer.biases.data() + layer.biases.size());
    jl["act"] = layer.activation == Activation::kRelu ? "relu" : "identity";
    layers.push_back(std::move(jl));
  }
  j["layers"] = layers;
  j["meta"] = json::parse(net.metadata_json);
  return j.dump();
}

Network network_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("model file: JSON parse error: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("model file: top level must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "widths" && key != "layers" && key != "meta") {
      throw std::runtime_error("model file: unknown top-level key '" + key + "'");
    }
  }
  if (!j.contains("widths") || !j["widths"].is_array() || j["widths"].size() < 2) {
    throw std::runtime_error("model file: 'widths' must be an array of at least 2 integers");
  }
  std::vector<int> widths = j["widths"].get<std::vector<int>>();
  for (int w : widths) {
    if (w <= 0) throw std::runtime_error("model file: 'widths' entries must be positive");
  }
  if (!j.contains("layers") || !j["layers"].is_array()) {
    throw std::runtime_error("model file: 'layers' must be an array");
  }
  if (j["layers"].size() + 1 != widths.size()) {
    throw std::runtime_error("model file: " + std::to_string(j["layers"].size()) +
                             " layers inconsistent with " + std::to_string(widths.size()) +
                             " widths");
  }

  Network net;
  net.input_dim = widths[0];
  for (std::size_t l = 0; l < j["layers"].size(); ++l) {
    const json& jl = j["layers"][l];
    const std::string where = "model file: layer " + std::to_string(l);
    if (!jl.is_object() || !jl.contains("w") || !jl.contains("b") || !jl.contains("act")) {
      throw std::runtime_error(where + ": needs 'w', 'b', 'act'");
    }
    const int rows = widths[l + 1];
    const int cols = widths[l];
    const auto w = jl["w"].get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(rows) * cols) {
      throw std::runtime_error(where + ": 'w' has " + std::to_string(w.size()) +
                               " values, declared shape " + std::to_string(rows) + "x" +
                               std::to_string(cols));
    }
    const auto b = jl["b"].get<std::vector<double>>();
    if (b.size() != static_cast<std::size_t>(rows)) {
      throw std::runtime_error(where + ": 'b' has " + std::to_string(b.size()) +
                               " values, declared width " + std::to_string(rows));
    }
    const std::string act = jl["act"].get<std::string>();
    if (act != "relu" && act != "identity") {
      throw std::runtime_error(where + ": unknown activation '" + act + "'");
    }
    DenseLayer layer;
    layer.weights.resize(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        layer.weights(r, c) = w[static_cast<std::size_t>(r) * cols + c];
      }
    }
    layer.biases = Eigen::Map<const Vector>(b.data(), rows);
    layer.activation = act == "relu" ? Activation::kRelu : Activation::kIdentity;
    net.layers.push_back(std::move(layer));
  }
  net.metadata_json = j.contains("meta") ? j["meta"].dump() : "{}";
  net.validate();
  return net;
}

void save_network(const Network& net, const std::filesystem::path& path) {
  atomic_write_file(path, network_to_json_text(net) + "\n");
}

Network load_network(const std::filesystem::path& path) {
  try {
    return network_from_json_text(read_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace foldnet
