#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dre/errors.hpp"
#include "dre/rng.hpp"
#include "dre/tape.hpp"
#include "dre/tensor.hpp"

namespace dre {

// Fully connected scalar-output network: ReLU hidden layers, linear output.
// Inputs are n x d row batches; the output is the n x 1 vector of raw scores.
struct MlpModel {
  int input_dim = 0;
  std::vector<int> hidden;
  std::vector<Tensor> weights;  // layer l: (fan_in x fan_out)
  std::vector<Tensor> biases;   // layer l: (1 x fan_out)

  static MlpModel zeros(int input_dim, std::vector<int> hidden) {
    MlpModel m;
    m.input_dim = input_dim;
    m.hidden = std::move(hidden);
    int fan_in = input_dim;
    for (int h : m.hidden) {
      m.weights.push_back(Tensor::zeros(fan_in, h));
      m.biases.push_back(Tensor::zeros(1, h));
      fan_in = h;
    }
    m.weights.push_back(Tensor::zeros(fan_in, 1));
    m.biases.push_back(Tensor::zeros(1, 1));
    return m;
  }

  // Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)); biases start at 0.
  static MlpModel init(int input_dim, std::vector<int> hidden, rng_stream& rng) {
    if (input_dim < 1) throw precondition_error("MlpModel: input_dim must be >= 1");
    for (int h : hidden)
      if (h < 1) throw precondition_error("MlpModel: hidden widths must be >= 1");
    MlpModel m = zeros(input_dim, std::move(hidden));
    for (auto& w : m.weights) {
      const double bound = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
      for (double& x : w.v) x = rng.uniform(-bound, bound);
    }
    return m;
  }

  std::size_t layer_count() const { return weights.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> ps;
    for (auto& w : weights) ps.push_back(&w);
    for (auto& b : biases) ps.push_back(&b);
    return ps;
  }

  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> ps;
    for (const auto& w : weights) ps.push_back(&w);
    for (const auto& b : biases) ps.push_back(&b);
    return ps;
  }

  // Tape-free forward for prediction and validation.
  Tensor forward(const Tensor& x) const {
    if (x.cols != input_dim) throw precondition_error("forward: input width mismatch");
    require_finite(x, "forward input");
    Tensor h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      h = add_row_broadcast(matmul(h, weights[l]), biases[l]);
      if (l + 1 < weights.size())
        for (double& e : h.v) e = e > 0.0 ? e : 0.0;
    }
    return h;
  }
};

// Parameter leaves pushed onto a tape, in parameters() order, for one step.
struct MlpTapeBinding {
  std::vector<int> weight_ids;
  std::vector<int> bias_ids;

  std::vector<int> all_ids() const {
    std::vector<int> ids = weight_ids;
    ids.insert(ids.end(), bias_ids.begin(), bias_ids.end());
    return ids;
  }
};

inline MlpTapeBinding push_params(Tape& tape, const MlpModel& m) {
  MlpTapeBinding bind;
  for (const auto& w : m.weights) bind.weight_ids.push_back(tape.leaf(w));
  for (const auto& b : m.biases) bind.bias_ids.push_back(tape.leaf(b));
  return bind;
}

// Builds the forward graph against already-pushed parameter leaves so several
// batches in one step share the same parameters.
inline int forward_graph(Tape& tape, const MlpTapeBinding& bind, int x_node,
                         std::size_t layers) {
  int h = x_node;
  for (std::size_t l = 0; l < layers; ++l) {
    h = tape.add_bias(tape.matmul(h, bind.weight_ids[l]), bind.bias_ids[l]);
    if (l + 1 < layers) h = tape.relu(h);
  }
  return h;
}

inline constexpr const char* kCheckpointFormat = "dre-mlp-v1";

inline nlohmann::json checkpoint_json(const MlpModel& m) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["input_dim"] = m.input_dim;
  j["hidden"] = m.hidden;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    nlohmann::json layer;
    layer["rows"] = m.weights[l].rows;
    layer["cols"] = m.weights[l].cols;
    layer["w"] = m.weights[l].v;  // row-major
    layer["b"] = m.biases[l].v;
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j;
}

inline MlpModel checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j["format"] != kCheckpointFormat)
    throw io_error("checkpoint: missing or unsupported format tag");
  MlpModel m = MlpModel::zeros(j.at("input_dim").get<int>(),
                               j.at("hidden").get<std::vector<int>>());
  const auto& layers = j.at("layers");
  if (layers.size() != m.weights.size())
    throw io_error("checkpoint: layer count does not match widths");
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.at("rows").get<int>() != m.weights[l].rows ||
        layer.at("cols").get<int>() != m.weights[l].cols)
      throw io_error("checkpoint: layer shape mismatch");
    m.weights[l].v = layer.at("w").get<std::vector<double>>();
    m.biases[l].v = layer.at("b").get<std::vector<double>>();
    if (m.weights[l].v.size() != static_cast<std::size_t>(m.weights[l].rows) * m.weights[l].cols ||
        m.biases[l].v.size() != static_cast<std::size_t>(m.biases[l].cols))
      throw io_error("checkpoint: parameter array length mismatch");
  }
  return m;
}

inline void save_checkpoint(const MlpModel& m, const std::string& path,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j = checkpoint_json(m);
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  std::ofstream out(path);
  if (!out) throw io_error("cannot open checkpoint for writing: " + path);
  out << j.dump();
  if (!out) throw io_error("failed writing checkpoint: " + path);
}

inline MlpModel load_checkpoint(const std::string& path, nlohmann::json* full = nullptr) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("checkpoint parse failure in " + path + ": " + e.what());
  }
  if (full) *full = j;
  return checkpoint_from_json(j);
}

}  // namespace dre
