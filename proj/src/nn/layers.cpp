#include "depl/nn/layers.hpp"

#include "depl/error.hpp"
#include "gemm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace depl::nn {

namespace {

struct ConvGeometry {
  std::size_t n, h, w, cin, k, out_h, out_w, pad_top, pad_left;

  std::size_t rows() const { return n * out_h * out_w; }
  std::size_t patch() const { return k * k * cin; }
};

ConvGeometry conv_geometry(const Shape& in, std::size_t k, Padding padding) {
  if (in.size() != 4) throw ConfigError("conv2d: expected a [N,H,W,C] input");
  ConvGeometry g{in[0], in[1], in[2], in[3], k, 0, 0, 0, 0};
  if (padding == Padding::Same) {
    g.out_h = g.h;
    g.out_w = g.w;
    g.pad_top = (k - 1) / 2;
    g.pad_left = (k - 1) / 2;
  } else {
    if (k > g.h || k > g.w) {
      throw ConfigError("conv2d: kernel " + std::to_string(k) + " does not fit input " +
                        shape_string(in));
    }
    g.out_h = g.h - k + 1;
    g.out_w = g.w - k + 1;
  }
  return g;
}

// Patch rows ordered (kh, kw, cin) to match the [k,k,Cin,Cout] weight layout.
void im2col(const ConvGeometry& g, const double* x, double* cols) {
  const std::size_t patch = g.patch();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        double* row = cols + ((n * g.out_h + oh) * g.out_w + ow) * patch;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
          for (std::size_t kw = 0; kw < g.k; ++kw) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kw) -
                                      static_cast<std::ptrdiff_t>(g.pad_left);
            double* dst = row + (kh * g.k + kw) * g.cin;
            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.h) ||
                iw >= static_cast<std::ptrdiff_t>(g.w)) {
              std::fill(dst, dst + g.cin, 0.0);
            } else {
              const double* src =
                  x + ((n * g.h + static_cast<std::size_t>(ih)) * g.w +
                       static_cast<std::size_t>(iw)) * g.cin;
              std::memcpy(dst, src, g.cin * sizeof(double));
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* cols, double* dx) {
  const std::size_t patch = g.patch();
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        const double* row = cols + ((n * g.out_h + oh) * g.out_w + ow) * patch;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t kw = 0; kw < g.k; ++kw) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kw) -
                                      static_cast<std::ptrdiff_t>(g.pad_left);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) continue;
            const double* src = row + (kh * g.k + kw) * g.cin;
            double* dst = dx + ((n * g.h + static_cast<std::size_t>(ih)) * g.w +
                                static_cast<std::size_t>(iw)) * g.cin;
            for (std::size_t c = 0; c < g.cin; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

Tensor conv_from_cols(const ConvGeometry& g, const std::vector<double>& cols,
                      const Tensor& weights, const Tensor& bias) {
  const std::size_t cout = weights.dim(3);
  Tensor out({g.n, g.out_h, g.out_w, cout});
  double* o = out.data();
  for (std::size_t r = 0; r < g.rows(); ++r) {
    std::copy(bias.data(), bias.data() + cout, o + r * cout);
  }
  detail::gemm_acc(g.rows(), cout, g.patch(), cols.data(), weights.data(), o);
  return out;
}

void require_cached(bool cached, const char* layer) {
  if (!cached) {
    throw StateError(std::string(layer) + ": backward called without a train-mode forward pass");
  }
}

Param make_param(std::string name, Shape shape, double fill, bool decays,
                 std::optional<double> l2 = std::nullopt) {
  Param p;
  p.name = std::move(name);
  p.value = Tensor(shape, fill);
  p.grad = Tensor(std::move(shape), 0.0);
  p.decays = decays;
  p.l2 = l2;
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

double swish(double x) { return x * sigmoid(x); }

double swish_derivative(double x) {
  const double s = sigmoid(x);
  return s + x * s * (1.0 - s);
}

double activate(Activation kind, double x) {
  switch (kind) {
    case Activation::Swish: return swish(x);
    case Activation::Relu: return relu(x);
    case Activation::Sigmoid: return sigmoid(x);
  }
  return x;
}

double activation_derivative(Activation kind, double x) {
  switch (kind) {
    case Activation::Swish: return swish_derivative(x);
    case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

Tensor apply_activation(const Tensor& x, Activation kind) {
  Tensor y = x;
  for (double& v : y.values()) v = activate(kind, v);
  return y;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      Padding padding) {
  if (weights.rank() != 4 || weights.dim(0) != weights.dim(1)) {
    throw ConfigError("conv2d: weights must be [k,k,Cin,Cout]");
  }
  const ConvGeometry g = conv_geometry(input.shape(), weights.dim(0), padding);
  if (weights.dim(2) != g.cin) {
    throw ConfigError("conv2d: weights expect " + std::to_string(weights.dim(2)) +
                      " input channels, input has " + std::to_string(g.cin));
  }
  if (bias.size() != weights.dim(3)) throw ConfigError("conv2d: bias size != filter count");
  std::vector<double> cols(g.rows() * g.patch());
  im2col(g, input.data(), cols.data());
  return conv_from_cols(g, cols, weights, bias);
}

PoolResult maxpool_forward(const Tensor& input, std::size_t size, std::size_t stride) {
  if (input.rank() != 4) throw ConfigError("maxpool: expected a [N,H,W,C] input");
  if (size == 0 || stride == 0) throw ConfigError("maxpool: size and stride must be >= 1");
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  if (h < size || w < size) {
    throw ConfigError("maxpool: input " + shape_string(input.shape()) + " smaller than window");
  }
  const std::size_t oh = (h - size) / stride + 1;
  const std::size_t ow = (w - size) / stride + 1;
  PoolResult r{Tensor({n, oh, ow, c}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t di = 0; di < size; ++di) {
            for (std::size_t dj = 0; dj < size; ++dj) {
              const std::size_t idx = ((b * h + i * stride + di) * w + j * stride + dj) * c + ch;
              if (input[idx] > best) {
                best = input[idx];
                best_idx = idx;
              }
            }
          }
          r.output[o] = best;
          r.argmax[o] = best_idx;
        }
      }
    }
  }
  return r;
}

Tensor batchnorm_forward(const Tensor& input, std::span<const double> scale,
                         std::span<const double> shift, Mode mode, BatchNormStats& stats) {
  if (input.rank() < 2) throw ConfigError("batchnorm: expected a batched input");
  const std::size_t c = input.shape().back();
  const std::size_t rows = input.size() / c;
  if (scale.size() != c || shift.size() != c) throw ConfigError("batchnorm: channel mismatch");
  if (stats.running_mean.size() != c) stats.running_mean.assign(c, 0.0);
  if (stats.running_var.size() != c) stats.running_var.assign(c, 1.0);

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (mode == Mode::Train) {
    if (input.dim(0) < 2) throw ArgumentError("batchnorm: train mode needs a batch of >= 2");
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += input[r * c + ch];
    }
    for (double& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = input[r * c + ch] - mean[ch];
        var[ch] += d * d;
      }
    }
    for (double& v : var) v /= static_cast<double>(rows);
    for (std::size_t ch = 0; ch < c; ++ch) {
      stats.running_mean[ch] =
          kBatchNormMomentum * stats.running_mean[ch] + (1.0 - kBatchNormMomentum) * mean[ch];
      stats.running_var[ch] =
          kBatchNormMomentum * stats.running_var[ch] + (1.0 - kBatchNormMomentum) * var[ch];
    }
  } else {
    mean = stats.running_mean;
    var = stats.running_var;
  }

  Tensor out(input.shape());
  for (std::size_t ch = 0; ch < c; ++ch) var[ch] = 1.0 / std::sqrt(var[ch] + kBatchNormEps);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      out[r * c + ch] = scale[ch] * (input[r * c + ch] - mean[ch]) * var[ch] + shift[ch];
    }
  }
  return out;
}

SeResult se_block_forward(const Tensor& u, const Tensor& w1, const Tensor& w2) {
  if (u.rank() != 4) throw ConfigError("se_block: expected a [N,H,W,C] input");
  const std::size_t n = u.dim(0), hw = u.dim(1) * u.dim(2), c = u.dim(3);
  if (w1.rank() != 2 || w2.rank() != 2 || w1.dim(1) != c || w2.dim(0) != c ||
      w2.dim(1) != w1.dim(0)) {
    throw ConfigError("se_block: weight shapes do not match " + std::to_string(c) + " channels");
  }
  const std::size_t hidden = w1.dim(0);
  SeResult r{Tensor(u.shape()), std::vector<double>(n * c, 0.0), std::vector<double>(n * c)};
  std::vector<double> a1(hidden);
  for (std::size_t b = 0; b < n; ++b) {
    double* z = &r.squeeze[b * c];
    const double* ub = u.data() + b * hw * c;
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) z[ch] += ub[p * c + ch];
    }
    for (std::size_t ch = 0; ch < c; ++ch) z[ch] /= static_cast<double>(hw);
    for (std::size_t j = 0; j < hidden; ++j) {
      double acc = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) acc += w1[j * c + ch] * z[ch];
      a1[j] = relu(acc);
    }
    double* s = &r.gates[b * c];
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t j = 0; j < hidden; ++j) acc += w2[ch * hidden + j] * a1[j];
      s[ch] = sigmoid(acc);
    }
    double* ob = r.output.data() + b * hw * c;
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) ob[p * c + ch] = s[ch] * ub[p * c + ch];
    }
  }
  return r;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() < 1 || weights.rank() != 2) throw ConfigError("dense: bad tensor ranks");
  const std::size_t n = input.dim(0), f = input.row_size(), units = weights.dim(1);
  if (weights.dim(0) != f) {
    throw ConfigError("dense: weights expect " + std::to_string(weights.dim(0)) +
                      " inputs, got " + std::to_string(f));
  }
  if (bias.size() != units) throw ConfigError("dense: bias size != units");
  Tensor out({n, units});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy(bias.data(), bias.data() + units, out.data() + r * units);
  }
  detail::gemm_acc(n, units, f, input.data(), weights.data(), out.data());
  return out;
}

Tensor dropout(const Tensor& input, double keep_prob, Mode mode, Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ArgumentError("dropout: keep probability must be in (0, 1]");
  }
  if (mode == Mode::Infer || keep_prob == 1.0) return input;
  Tensor out = input;
  for (double& v : out.values()) v = rng.uniform() < keep_prob ? v / keep_prob : 0.0;
  return out;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ArgumentError("softmax: expected [N x K] logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = logits.data() + r * k;
    double* p = out.data() + r * k;
    const double mx = *std::max_element(x, x + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += (p[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < k; ++j) p[j] /= sum;
  }
  return out;
}

double cross_entropy(const Tensor& probs, const Tensor& one_hot) {
  if (probs.shape() != one_hot.shape() || probs.rank() != 2) {
    throw ArgumentError("cross_entropy: probabilities and targets must both be [N x K]");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (one_hot[i] != 0.0) total -= one_hot[i] * std::log(std::clamp(probs[i], 1e-12, 1.0));
  }
  return total / static_cast<double>(probs.dim(0));
}

Tensor softmax_cross_entropy_grad(const Tensor& probs, const Tensor& one_hot) {
  if (probs.shape() != one_hot.shape() || probs.rank() != 2) {
    throw ArgumentError("softmax_cross_entropy_grad: shapes must match and be [N x K]");
  }
  Tensor grad(probs.shape());
  const double inv_n = 1.0 / static_cast<double>(probs.dim(0));
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = (probs[i] - one_hot[i]) * inv_n;
  return grad;
}

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  Tensor t({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ArgumentError("one_hot: label " + std::to_string(labels[i]) + " out of range");
    }
    t[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return t;
}

// ---------------------------------------------------------------------------

Conv2DLayer::Conv2DLayer(std::size_t in_channels, std::size_t filters, std::size_t kernel,
                         Padding padding, std::optional<double> l2)
    : in_channels_(in_channels),
      filters_(filters),
      kernel_(kernel),
      padding_(padding),
      weights_(make_param("kernel", {kernel, kernel, in_channels, filters}, 0.0, true, l2)),
      bias_(make_param("bias", {filters}, 0.0, false)) {}

std::string Conv2DLayer::describe() const {
  return "conv(" + std::to_string(filters_) + "," + std::to_string(kernel_) + "," +
         (padding_ == Padding::Same ? "same" : "valid") + ")";
}

Tensor Conv2DLayer::forward(const Tensor& x, Mode mode, Rng&) {
  const ConvGeometry g = conv_geometry(x.shape(), kernel_, padding_);
  if (g.cin != in_channels_) throw ConfigError("conv2d: input channel mismatch");
  cols_.resize(g.rows() * g.patch());
  im2col(g, x.data(), cols_.data());
  in_shape_ = x.shape();
  cached_ = mode == Mode::Train;
  return conv_from_cols(g, cols_, weights_.value, bias_.value);
}

Tensor Conv2DLayer::backward(const Tensor& grad_out) {
  require_cached(cached_, "conv2d");
  const ConvGeometry g = conv_geometry(in_shape_, kernel_, padding_);
  const std::size_t rows = g.rows(), patch = g.patch();
  const double* dy = grad_out.data();

  detail::gemm_tn_acc(patch, filters_, rows, cols_.data(), dy, weights_.grad.data());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t f = 0; f < filters_; ++f) bias_.grad[f] += dy[r * filters_ + f];
  }

  Tensor dx(in_shape_);
  if (!needs_input_grad_) return dx;
  std::vector<double> wt(patch * filters_);
  detail::transpose(patch, filters_, weights_.value.data(), wt.data());
  std::vector<double> dcols(rows * patch, 0.0);
  detail::gemm_acc(rows, patch, filters_, dy, wt.data(), dcols.data());
  col2im(g, dcols.data(), dx.data());
  return dx;
}

std::string MaxPoolLayer::describe() const {
  return "maxpool(" + std::to_string(size_) + "," + std::to_string(stride_) + ")";
}

Tensor MaxPoolLayer::forward(const Tensor& x, Mode mode, Rng&) {
  PoolResult r = maxpool_forward(x, size_, stride_);
  in_shape_ = x.shape();
  argmax_ = std::move(r.argmax);
  cached_ = mode == Mode::Train;
  return std::move(r.output);
}

Tensor MaxPoolLayer::backward(const Tensor& grad_out) {
  require_cached(cached_, "maxpool");
  Tensor dx(in_shape_);
  for (std::size_t i = 0; i < grad_out.size(); ++i) dx[argmax_[i]] += grad_out[i];
  return dx;
}

BatchNormLayer::BatchNormLayer(std::size_t channels)
    : channels_(channels),
      scale_(make_param("gamma", {channels}, 1.0, false)),
      shift_(make_param("beta", {channels}, 0.0, false)),
      stats_{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)} {}

std::string BatchNormLayer::describe() const { return "batchnorm"; }

std::vector<Buffer> BatchNormLayer::buffers() {
  return {{"moving_mean", &stats_.running_mean}, {"moving_var", &stats_.running_var}};
}

Tensor BatchNormLayer::forward(const Tensor& x, Mode mode, Rng&) {
  if (x.shape().back() != channels_) throw ConfigError("batchnorm: channel mismatch");
  Tensor y = batchnorm_forward(x, scale_.value.values(), shift_.value.values(), mode, stats_);
  cached_ = mode == Mode::Train;
  if (cached_) {
    // Batch statistics for the backward cache.
    const std::size_t rows = x.size() / channels_;
    std::vector<double> mean(channels_, 0.0), var(channels_, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels_; ++c) mean[c] += x[r * channels_ + c];
    }
    for (double& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels_; ++c) {
        const double d = x[r * channels_ + c] - mean[c];
        var[c] += d * d;
      }
    }
    inv_std_.resize(channels_);
    for (std::size_t c = 0; c < channels_; ++c) {
      inv_std_[c] = 1.0 / std::sqrt(var[c] / static_cast<double>(rows) + kBatchNormEps);
    }
    x_hat_ = Tensor(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels_; ++c) {
        x_hat_[r * channels_ + c] = (x[r * channels_ + c] - mean[c]) * inv_std_[c];
      }
    }
  }
  return y;
}

Tensor BatchNormLayer::backward(const Tensor& grad_out) {
  require_cached(cached_, "batchnorm");
  const std::size_t c = channels_;
  const std::size_t rows = grad_out.size() / c;
  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double dy = grad_out[r * c + ch];
      sum_dy[ch] += dy;
      sum_dy_xhat[ch] += dy * x_hat_[r * c + ch];
    }
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    scale_.grad[ch] += sum_dy_xhat[ch];
    shift_.grad[ch] += sum_dy[ch];
  }
  Tensor dx(grad_out.shape());
  const double m = static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double k = scale_.value[ch] * inv_std_[ch] / m;
      dx[r * c + ch] =
          k * (m * grad_out[r * c + ch] - sum_dy[ch] - x_hat_[r * c + ch] * sum_dy_xhat[ch]);
    }
  }
  return dx;
}

SeBlockLayer::SeBlockLayer(std::size_t channels, std::size_t ratio)
    : channels_(channels),
      ratio_(ratio),
      w1_(make_param("w1", {channels / ratio, channels}, 0.0, false)),
      w2_(make_param("w2", {channels, channels / ratio}, 0.0, false)) {
  if (ratio == 0 || channels % ratio != 0) {
    throw ConfigError("se_block: " + std::to_string(channels) +
                      " channels not divisible by ratio " + std::to_string(ratio));
  }
}

std::string SeBlockLayer::describe() const { return "se(" + std::to_string(ratio_) + ")"; }

Tensor SeBlockLayer::forward(const Tensor& x, Mode mode, Rng&) {
  SeResult r = se_block_forward(x, w1_.value, w2_.value);
  cached_ = mode == Mode::Train;
  if (cached_) {
    input_ = x;
    squeeze_ = std::move(r.squeeze);
    gates_ = std::move(r.gates);
    const std::size_t n = x.dim(0), hidden = channels_ / ratio_;
    hidden_pre_.assign(n * hidden, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t j = 0; j < hidden; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels_; ++c) {
          acc += w1_.value[j * channels_ + c] * squeeze_[b * channels_ + c];
        }
        hidden_pre_[b * hidden + j] = acc;
      }
    }
  }
  return std::move(r.output);
}

Tensor SeBlockLayer::backward(const Tensor& grad_out) {
  require_cached(cached_, "se_block");
  const std::size_t n = input_.dim(0), hw = input_.dim(1) * input_.dim(2), c = channels_;
  const std::size_t hidden = c / ratio_;
  Tensor dx(input_.shape());
  std::vector<double> da2(c), dh(hidden), da1(hidden), dz(c);
  for (std::size_t b = 0; b < n; ++b) {
    const double* u = input_.data() + b * hw * c;
    const double* dy = grad_out.data() + b * hw * c;
    const double* s = &gates_[b * c];
    const double* z = &squeeze_[b * c];
    const double* a1 = &hidden_pre_[b * hidden];

    // Product rule over x~ = s * u: gate path first.
    std::fill(da2.begin(), da2.end(), 0.0);
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) da2[ch] += dy[p * c + ch] * u[p * c + ch];
    }
    for (std::size_t ch = 0; ch < c; ++ch) da2[ch] *= s[ch] * (1.0 - s[ch]);

    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t j = 0; j < hidden; ++j) {
        w2_.grad[ch * hidden + j] += da2[ch] * relu(a1[j]);
        dh[j] += w2_.value[ch * hidden + j] * da2[ch];
      }
    }
    for (std::size_t j = 0; j < hidden; ++j) da1[j] = a1[j] > 0.0 ? dh[j] : 0.0;

    std::fill(dz.begin(), dz.end(), 0.0);
    for (std::size_t j = 0; j < hidden; ++j) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        w1_.grad[j * c + ch] += da1[j] * z[ch];
        dz[ch] += w1_.value[j * c + ch] * da1[j];
      }
    }

    double* dxb = dx.data() + b * hw * c;
    const double inv_hw = 1.0 / static_cast<double>(hw);
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        dxb[p * c + ch] = s[ch] * dy[p * c + ch] + dz[ch] * inv_hw;
      }
    }
  }
  return dx;
}

DenseLayer::DenseLayer(std::size_t in_features, std::size_t units, std::optional<double> l2)
    : in_features_(in_features),
      units_(units),
      weights_(make_param("kernel", {in_features, units}, 0.0, false, l2)),
      bias_(make_param("bias", {units}, 0.0, false)) {}

std::string DenseLayer::describe() const { return "dense(" + std::to_string(units_) + ")"; }

Tensor DenseLayer::forward(const Tensor& x, Mode mode, Rng&) {
  Tensor y = dense_forward(x, weights_.value, bias_.value);
  cached_ = mode == Mode::Train;
  if (cached_) {
    in_shape_ = x.shape();
    input_ = x;
  }
  return y;
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
  require_cached(cached_, "dense");
  const std::size_t n = in_shape_[0];
  detail::gemm_tn_acc(in_features_, units_, n, input_.data(), grad_out.data(),
                      weights_.grad.data());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t u = 0; u < units_; ++u) bias_.grad[u] += grad_out[r * units_ + u];
  }
  Tensor dx(in_shape_);
  if (!needs_input_grad_) return dx;
  std::vector<double> wt(in_features_ * units_);
  detail::transpose(in_features_, units_, weights_.value.data(), wt.data());
  detail::gemm_acc(n, in_features_, units_, grad_out.data(), wt.data(), dx.data());
  return dx;
}

DropoutLayer::DropoutLayer(double keep_prob) : keep_prob_(keep_prob) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ConfigError("dropout: keep probability must be in (0, 1]");
  }
}

std::string DropoutLayer::describe() const {
  return "dropout(" + std::to_string(keep_prob_) + ")";
}

Tensor DropoutLayer::forward(const Tensor& x, Mode mode, Rng& rng) {
  cached_ = mode == Mode::Train;
  if (!cached_) return x;
  mask_.resize(x.size());
  Tensor y = x;
  if (keep_prob_ == 1.0) {
    std::fill(mask_.begin(), mask_.end(), 1.0);
    return y;
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    mask_[i] = rng.uniform() < keep_prob_ ? 1.0 / keep_prob_ : 0.0;
    y[i] *= mask_[i];
  }
  return y;
}

Tensor DropoutLayer::backward(const Tensor& grad_out) {
  require_cached(cached_, "dropout");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
  return dx;
}

std::string ActivationLayer::describe() const {
  switch (kind_) {
    case Activation::Swish: return "swish";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "activation";
}

Tensor ActivationLayer::forward(const Tensor& x, Mode mode, Rng&) {
  cached_ = mode == Mode::Train;
  if (cached_) input_ = x;
  return apply_activation(x, kind_);
}

Tensor ActivationLayer::backward(const Tensor& grad_out) {
  require_cached(cached_, "activation");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= activation_derivative(kind_, input_[i]);
  return dx;
}

}  // namespace depl::nn
