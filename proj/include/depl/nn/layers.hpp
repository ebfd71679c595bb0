#pragma once

#include "depl/nn/tensor.hpp"
#include "depl/rng.hpp"

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace depl::nn {

enum class Mode { Train, Infer };
enum class Padding { Same, Valid };
enum class Activation { Swish, Relu, Sigmoid };

// ---------------------------------------------------------------------------
// Elementwise activations.

double sigmoid(double x);
double relu(double x);
double swish(double x);             // x * sigmoid(x)
double swish_derivative(double x);  // sigmoid(x) + x * sigmoid(x) * (1 - sigmoid(x))
double activate(Activation kind, double x);
double activation_derivative(Activation kind, double x);
Tensor apply_activation(const Tensor& x, Activation kind);

// ---------------------------------------------------------------------------
// Stateless forward operations on batched tensors.

// input [N,H,W,Cin], weights [k,k,Cin,Cout], bias [Cout]. Stride 1. Same
// padding puts (k-1)/2 rows/cols before and the rest after.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      Padding padding);

struct PoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};
// Output dims floor((H - size) / stride) + 1.
PoolResult maxpool_forward(const Tensor& input, std::size_t size = 2, std::size_t stride = 2);

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
};
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// Normalizes over every axis but the last. Train mode uses batch statistics
// and updates the running ones; infer mode uses the running statistics.
Tensor batchnorm_forward(const Tensor& input, std::span<const double> scale,
                         std::span<const double> shift, Mode mode, BatchNormStats& stats);

struct SeResult {
  Tensor output;
  std::vector<double> squeeze;  // z, [N x C]
  std::vector<double> gates;    // s, [N x C]
};
// U [N,H,W,C], w1 [C/r x C], w2 [C x C/r]:
// z = spatial mean, s = sigmoid(w2 relu(w1 z)), output_c = s_c * u_c.
SeResult se_block_forward(const Tensor& u, const Tensor& w1, const Tensor& w2);

// input [N, ...] flattened per row, weights [F x U], bias [U] -> [N, U].
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

// Inverted dropout. Infer mode, or keep_prob == 1, is the identity and draws
// nothing from rng.
Tensor dropout(const Tensor& input, double keep_prob, Mode mode, Rng& rng);

// Row-wise softmax of [N x K] logits with max subtraction.
Tensor softmax(const Tensor& logits);

// -(1/n) sum_i sum_j y_ij log p_ij with p clamped to [1e-12, 1].
double cross_entropy(const Tensor& probs, const Tensor& one_hot);

// d cross_entropy(softmax(z), y) / dz = (softmax(z) - y) / N.
Tensor softmax_cross_entropy_grad(const Tensor& probs, const Tensor& one_hot);

Tensor one_hot(std::span<const int> labels, std::size_t classes);

// ---------------------------------------------------------------------------
// Trainable layers with cached forward state for backpropagation.

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decays = false;       // subject to the default L2 strength
  std::optional<double> l2;  // per-layer override
};

// Buffers are non-trainable state such as batch-norm running statistics.
struct Buffer {
  std::string name;
  std::vector<double>* values;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string describe() const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode, Rng& rng) = 0;
  // Accumulates parameter gradients and returns dL/dx. Requires a preceding
  // train-mode forward; throws StateError otherwise.
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual std::vector<Param*> params() { return {}; }
  virtual std::vector<Buffer> buffers() { return {}; }

  // The first layer of a network never needs dL/dx.
  void set_needs_input_grad(bool v) { needs_input_grad_ = v; }

 protected:
  bool needs_input_grad_ = true;
};

class Conv2DLayer : public Layer {
 public:
  Conv2DLayer(std::size_t in_channels, std::size_t filters, std::size_t kernel, Padding padding,
              std::optional<double> l2);
  std::string describe() const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weights_, &bias_}; }

 private:
  std::size_t in_channels_, filters_, kernel_;
  Padding padding_;
  Param weights_, bias_;
  Shape in_shape_;
  std::vector<double> cols_;
  bool cached_ = false;
};

class MaxPoolLayer : public Layer {
 public:
  MaxPoolLayer(std::size_t size, std::size_t stride) : size_(size), stride_(stride) {}
  std::string describe() const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::size_t size_, stride_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
  bool cached_ = false;
};

class BatchNormLayer : public Layer {
 public:
  explicit BatchNormLayer(std::size_t channels);
  std::string describe() const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&scale_, &shift_}; }
  std::vector<Buffer> buffers() override;

 private:
  std::size_t channels_;
  Param scale_, shift_;
  BatchNormStats stats_;
  Tensor x_hat_;
  std::vector<double> inv_std_;
  bool cached_ = false;
};

class SeBlockLayer : public Layer {
 public:
  SeBlockLayer(std::size_t channels, std::size_t ratio);
  std::string describe() const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&w1_, &w2_}; }

 private:
  std::size_t channels_, ratio_;
  Param w1_, w2_;
  Tensor input_;
  std::vector<double> squeeze_, hidden_pre_, gates_;
  bool cached_ = false;
};

class DenseLayer : public Layer {
 public:
  DenseLayer(std::size_t in_features, std::size_t units, std::optional<double> l2);
  std::string describe() const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weights_, &bias_}; }

 private:
  std::size_t in_features_, units_;
  Param weights_, bias_;
  Shape in_shape_;
  Tensor input_;
  bool cached_ = false;
};

class DropoutLayer : public Layer {
 public:
  explicit DropoutLayer(double keep_prob);
  std::string describe() const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  double keep_prob_;
  std::vector<double> mask_;  // 0 or 1/keep_prob
  bool cached_ = false;
};

class ActivationLayer : public Layer {
 public:
  explicit ActivationLayer(Activation kind) : kind_(kind) {}
  std::string describe() const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Activation kind_;
  Tensor input_;
  bool cached_ = false;
};

}  // namespace depl::nn
