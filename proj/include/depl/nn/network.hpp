#pragma once

#include "depl/nn/layers.hpp"
#include "depl/nn/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace depl::nn {

enum class LayerKind { Conv, MaxPool, BatchNorm, SeBlock, Dense, Dropout, Activation, Softmax };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::size_t filters = 0;  // conv
  std::size_t kernel = 3;   // conv
  Padding padding = Padding::Same;
  std::size_t pool_size = 2;  // maxpool
  std::size_t stride = 2;     // maxpool
  std::size_t se_ratio = 4;   // se
  std::size_t units = 0;      // dense
  double keep_prob = 1.0;     // dropout
  Activation activation = Activation::Swish;
  std::optional<double> l2;  // conv/dense weight decay override

  bool operator==(const LayerSpec&) const = default;
};

// Text form of one layer, e.g. "conv(100,3,same)", "se(4)", "dropout(0.6)".
std::string format_layer(const LayerSpec& spec);
LayerSpec parse_layer(std::string_view text);

struct NetworkConfig {
  std::string name = "custom";
  Shape input_shape{9, 9, 1};  // per sample
  std::vector<LayerSpec> layers;
  std::size_t num_classes = 2;

  // Layers joined by " -> ".
  std::string layers_string() const;
  bool operator==(const NetworkConfig&) const = default;
};

NetworkConfig parse_layers(std::string_view name, const Shape& input_shape,
                           std::string_view layers);

// conv(100,3) x2 with BN + SE before each 2x2 pool, dense 120 -> 120 -> 2.
NetworkConfig preset_depl_text(std::size_t input_channels = 1, double keep_prob = 0.6,
                               std::size_t se_ratio = 4);
// Same stack with 5x5 kernels and dense 120 -> 84 -> 2.
NetworkConfig preset_depl_table6(std::size_t input_channels = 1, double keep_prob = 0.6,
                                 std::size_t se_ratio = 4);
NetworkConfig preset(std::string_view name, std::size_t input_channels = 1,
                     double keep_prob = 0.6, std::size_t se_ratio = 4);

inline constexpr std::size_t kPublishedParameterCount = 152566;

struct LayerCount {
  std::string layer;
  Shape output_shape;
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
};

struct ParamCount {
  std::vector<LayerCount> layers;
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
  std::size_t total() const { return trainable + non_trainable; }
};

// Validates shapes layer by layer (ConfigError names the layer index) and
// counts parameters without allocating the network.
ParamCount param_count(const NetworkConfig& config);

struct NamedTensor {
  std::string name;
  Tensor value;

  bool operator==(const NamedTensor&) const = default;
};

// Snapshot of every trainable parameter and buffer, in network order.
struct ParameterSet {
  std::vector<NamedTensor> tensors;

  bool operator==(const ParameterSet&) const = default;
};

// Truncated normal N(0, std^2) with draws outside +-2 std rejected.
Tensor init_truncated_normal(const Shape& shape, double stddev, std::uint64_t seed);
Tensor init_truncated_normal(const Shape& shape, double stddev, Rng& rng);

class Network {
 public:
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }

  // Kernels get truncated normal with std sqrt(2 / fan_in); biases zero.
  void initialize(std::uint64_t seed);

  // Returns logits [N x classes]. Input is [N, ...input_shape].
  Tensor forward(const Tensor& x, Mode mode, Rng& rng);

  // Loss = cross entropy + sum over decaying weights of (l2 / 2) * ||W||^2.
  double loss(const Tensor& logits, std::span<const int> labels, double default_l2);
  double l2_penalty(double default_l2);

  // Zeroes gradients, runs a train-mode forward pass and backpropagates the
  // regularized loss. Returns the loss.
  double forward_backward(const Tensor& x, std::span<const int> labels, double default_l2,
                          Rng& rng);

  // Class probabilities in inference mode, evaluated in chunks.
  Tensor predict_proba(const Tensor& x, std::size_t chunk = 256);

  std::vector<Param*> params();
  ParameterSet snapshot();
  void load(const ParameterSet& params);  // names and shapes must match

  std::size_t num_layers() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }

 private:
  NetworkConfig config_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::string> prefixes_;
};

Network build_network(const NetworkConfig& config);

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l2 = 0.6;  // conv kernels unless a layer overrides it
  std::uint64_t seed = 1;

  void validate() const;  // ConfigError
  bool operator==(const TrainConfig&) const = default;
};

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  // One bias-corrected update at step t >= 1 (t counts from 1).
  void step(std::span<Param* const> params, std::size_t t, double lr);

 private:
  double beta1_, beta2_, epsilon_;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainResult {
  std::vector<double> loss_curve;  // mean batch loss per epoch
};

// Sees every batch tensor fed to the network during training.
using BatchObserver = std::function<void(const Tensor& batch)>;

// Seeded mini-batch Adam loop. A trailing batch of one sample is folded into
// the previous batch (batch norm needs two). NaN/inf loss throws NumericError
// naming the epoch and batch.
TrainResult train(Network& net, const Tensor& inputs, std::span<const int> labels,
                  const TrainConfig& config, const BatchObserver& observer = {});

// Predicted class per row (argmax of probabilities, lower index on ties).
std::vector<int> predict_classes(Network& net, const Tensor& inputs);

// Rows [idx...] of a batched tensor.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

}  // namespace depl::nn
