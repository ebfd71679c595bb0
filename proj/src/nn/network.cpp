#include "depl/nn/network.hpp"

#include "depl/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace depl::nn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, std::string_view what) {
  s = trim(s);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError("layer spec: bad number '" + std::string(s) + "' for " + std::string(what));
  }
  return v;
}

std::size_t parse_size(std::string_view s, std::string_view what) {
  s = trim(s);
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || v == 0) {
    throw ConfigError("layer spec: bad positive integer '" + std::string(s) + "' for " +
                      std::string(what));
  }
  return v;
}

std::string kind_tag(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::SeBlock: return "se";
    case LayerKind::Dense: return "dense";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Activation: return "activation";
    case LayerKind::Softmax: return "softmax";
  }
  return "layer";
}

std::string pad2(std::size_t i) { return (i < 10 ? "0" : "") + std::to_string(i); }

}  // namespace

std::string format_layer(const LayerSpec& s) {
  const std::string l2 = s.l2 ? ",l2=" + format_double(*s.l2) : "";
  switch (s.kind) {
    case LayerKind::Conv:
      return "conv(" + std::to_string(s.filters) + "," + std::to_string(s.kernel) + "," +
             (s.padding == Padding::Same ? "same" : "valid") + l2 + ")";
    case LayerKind::MaxPool:
      return "maxpool(" + std::to_string(s.pool_size) + "," + std::to_string(s.stride) + ")";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::SeBlock: return "se(" + std::to_string(s.se_ratio) + ")";
    case LayerKind::Dense: return "dense(" + std::to_string(s.units) + l2 + ")";
    case LayerKind::Dropout: return "dropout(" + format_double(s.keep_prob) + ")";
    case LayerKind::Activation:
      switch (s.activation) {
        case Activation::Swish: return "swish";
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
      }
      break;
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

LayerSpec parse_layer(std::string_view text) {
  text = trim(text);
  std::string_view name = text;
  std::vector<std::string_view> args;
  if (const auto open = text.find('('); open != std::string_view::npos) {
    if (text.back() != ')') throw ConfigError("layer spec: missing ')' in '" + std::string(text) + "'");
    name = trim(text.substr(0, open));
    std::string_view inner = text.substr(open + 1, text.size() - open - 2);
    while (!inner.empty()) {
      const auto comma = inner.find(',');
      args.push_back(trim(inner.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      inner.remove_prefix(comma + 1);
    }
  }

  LayerSpec s;
  std::vector<std::string_view> positional;
  for (auto a : args) {
    if (a.starts_with("l2=")) {
      s.l2 = parse_double(a.substr(3), "l2");
    } else {
      positional.push_back(a);
    }
  }
  auto expect_args = [&](std::size_t lo, std::size_t hi) {
    if (positional.size() < lo || positional.size() > hi) {
      throw ConfigError("layer spec: wrong number of arguments in '" + std::string(text) + "'");
    }
  };

  if (name == "conv") {
    s.kind = LayerKind::Conv;
    expect_args(1, 3);
    s.filters = parse_size(positional[0], "conv filters");
    if (positional.size() > 1) s.kernel = parse_size(positional[1], "conv kernel");
    if (positional.size() > 2) {
      if (positional[2] == "same") {
        s.padding = Padding::Same;
      } else if (positional[2] == "valid") {
        s.padding = Padding::Valid;
      } else {
        throw ConfigError("layer spec: padding must be same or valid");
      }
    }
  } else if (name == "maxpool") {
    s.kind = LayerKind::MaxPool;
    expect_args(0, 2);
    if (!positional.empty()) s.pool_size = s.stride = parse_size(positional[0], "pool size");
    if (positional.size() > 1) s.stride = parse_size(positional[1], "pool stride");
  } else if (name == "batchnorm") {
    s.kind = LayerKind::BatchNorm;
    expect_args(0, 0);
  } else if (name == "se") {
    s.kind = LayerKind::SeBlock;
    expect_args(0, 1);
    if (!positional.empty()) s.se_ratio = parse_size(positional[0], "se ratio");
  } else if (name == "dense") {
    s.kind = LayerKind::Dense;
    expect_args(1, 1);
    s.units = parse_size(positional[0], "dense units");
  } else if (name == "dropout") {
    s.kind = LayerKind::Dropout;
    expect_args(1, 1);
    s.keep_prob = parse_double(positional[0], "dropout keep probability");
  } else if (name == "swish" || name == "relu" || name == "sigmoid") {
    s.kind = LayerKind::Activation;
    expect_args(0, 0);
    s.activation = name == "swish" ? Activation::Swish
                   : name == "relu" ? Activation::Relu
                                    : Activation::Sigmoid;
  } else if (name == "softmax") {
    s.kind = LayerKind::Softmax;
    expect_args(0, 0);
  } else {
    throw ConfigError("layer spec: unknown layer '" + std::string(name) + "'");
  }
  if (s.l2 && s.kind != LayerKind::Conv && s.kind != LayerKind::Dense) {
    throw ConfigError("layer spec: l2 only applies to conv and dense layers");
  }
  return s;
}

std::string NetworkConfig::layers_string() const {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += " -> ";
    out += format_layer(layers[i]);
  }
  return out;
}

NetworkConfig parse_layers(std::string_view name, const Shape& input_shape,
                           std::string_view layers) {
  NetworkConfig cfg;
  cfg.name = std::string(name);
  cfg.input_shape = input_shape;
  std::size_t pos = 0;
  while (pos <= layers.size()) {
    std::size_t next = layers.find("->", pos);
    const std::string_view part =
        trim(layers.substr(pos, next == std::string_view::npos ? std::string_view::npos
                                                                : next - pos));
    if (!part.empty()) cfg.layers.push_back(parse_layer(part));
    if (next == std::string_view::npos) break;
    pos = next + 2;
  }
  return cfg;
}

namespace {

NetworkConfig depl_stack(std::string name, std::size_t input_channels, std::size_t kernel,
                         std::size_t dense2, double keep_prob, std::size_t se_ratio) {
  std::ostringstream os;
  const std::string keep = format_double(keep_prob);
  const std::string conv = "conv(100," + std::to_string(kernel) + ",same)";
  const std::string se = "se(" + std::to_string(se_ratio) + ")";
  for (int block = 0; block < 2; ++block) {
    os << conv << " -> swish -> batchnorm -> " << se << " -> maxpool(2,2) -> ";
  }
  os << "dense(120) -> swish -> dropout(" << keep << ") -> dense(" << dense2
     << ") -> swish -> dropout(" << keep << ") -> dense(2) -> softmax";
  return parse_layers(name, {9, 9, input_channels}, os.str());
}

}  // namespace

NetworkConfig preset_depl_text(std::size_t input_channels, double keep_prob,
                               std::size_t se_ratio) {
  return depl_stack("depl-text", input_channels, 3, 120, keep_prob, se_ratio);
}

NetworkConfig preset_depl_table6(std::size_t input_channels, double keep_prob,
                                 std::size_t se_ratio) {
  return depl_stack("depl-table6", input_channels, 5, 84, keep_prob, se_ratio);
}

NetworkConfig preset(std::string_view name, std::size_t input_channels, double keep_prob,
                     std::size_t se_ratio) {
  if (name == "depl-text") return preset_depl_text(input_channels, keep_prob, se_ratio);
  if (name == "depl-table6") return preset_depl_table6(input_channels, keep_prob, se_ratio);
  throw ConfigError("unknown preset '" + std::string(name) +
                    "' (expected depl-text or depl-table6)");
}

ParamCount param_count(const NetworkConfig& config) {
  if (config.input_shape.empty() || config.input_shape.size() > 3 ||
      shape_size(config.input_shape) == 0) {
    throw ConfigError("network: input shape must have 1 to 3 non-zero axes");
  }
  if (config.layers.empty()) throw ConfigError("network: no layers");

  ParamCount count;
  Shape s = config.input_shape;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const LayerSpec& l = config.layers[i];
    auto fail = [&](const std::string& why) {
      throw ConfigError("network layer " + std::to_string(i) + " (" + format_layer(l) +
                        "): " + why + "; input shape " + shape_string(s));
    };
    LayerCount lc;
    lc.layer = format_layer(l);
    switch (l.kind) {
      case LayerKind::Conv: {
        if (s.size() != 3) fail("convolution needs an H x W x C input");
        if (l.padding == Padding::Valid && (l.kernel > s[0] || l.kernel > s[1])) {
          fail("kernel larger than input");
        }
        lc.trainable = l.kernel * l.kernel * s[2] * l.filters + l.filters;
        if (l.padding == Padding::Valid) {
          s = {s[0] - l.kernel + 1, s[1] - l.kernel + 1, l.filters};
        } else {
          s = {s[0], s[1], l.filters};
        }
        break;
      }
      case LayerKind::MaxPool:
        if (s.size() != 3) fail("pooling needs an H x W x C input");
        if (s[0] < l.pool_size || s[1] < l.pool_size) fail("input smaller than pool window");
        s = {(s[0] - l.pool_size) / l.stride + 1, (s[1] - l.pool_size) / l.stride + 1, s[2]};
        break;
      case LayerKind::BatchNorm:
        lc.trainable = 2 * s.back();
        lc.non_trainable = 2 * s.back();
        break;
      case LayerKind::SeBlock:
        if (s.size() != 3) fail("SE block needs an H x W x C input");
        if (s[2] % l.se_ratio != 0) fail("channels not divisible by SE ratio");
        lc.trainable = 2 * s[2] * (s[2] / l.se_ratio);
        break;
      case LayerKind::Dense: {
        const std::size_t f = shape_size(s);
        lc.trainable = f * l.units + l.units;
        s = {l.units};
        break;
      }
      case LayerKind::Dropout:
        if (!(l.keep_prob > 0.0 && l.keep_prob <= 1.0)) fail("keep probability outside (0, 1]");
        break;
      case LayerKind::Activation: break;
      case LayerKind::Softmax:
        if (i + 1 != config.layers.size()) fail("softmax must be the last layer");
        if (s.size() != 1 || s[0] != config.num_classes) {
          fail("softmax needs " + std::to_string(config.num_classes) + " units");
        }
        break;
    }
    lc.output_shape = s;
    count.trainable += lc.trainable;
    count.non_trainable += lc.non_trainable;
    count.layers.push_back(std::move(lc));
  }
  if (config.layers.back().kind != LayerKind::Softmax) {
    throw ConfigError("network: last layer must be softmax");
  }
  return count;
}

Tensor init_truncated_normal(const Shape& shape, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  return init_truncated_normal(shape, stddev, rng);
}

Tensor init_truncated_normal(const Shape& shape, double stddev, Rng& rng) {
  if (!(stddev > 0.0)) throw ArgumentError("init_truncated_normal: std must be positive");
  Tensor t(shape);
  for (double& v : t.values()) {
    double z;
    do {
      z = rng.normal();
    } while (std::abs(z) > 2.0);
    v = z * stddev;
  }
  return t;
}

Network::Network(NetworkConfig config) : config_(std::move(config)) {
  const ParamCount count = param_count(config_);
  Shape s = config_.input_shape;
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    const LayerSpec& l = config_.layers[i];
    std::unique_ptr<Layer> layer;
    switch (l.kind) {
      case LayerKind::Conv:
        layer = std::make_unique<Conv2DLayer>(s[2], l.filters, l.kernel, l.padding, l.l2);
        break;
      case LayerKind::MaxPool:
        layer = std::make_unique<MaxPoolLayer>(l.pool_size, l.stride);
        break;
      case LayerKind::BatchNorm: layer = std::make_unique<BatchNormLayer>(s.back()); break;
      case LayerKind::SeBlock: layer = std::make_unique<SeBlockLayer>(s[2], l.se_ratio); break;
      case LayerKind::Dense:
        layer = std::make_unique<DenseLayer>(shape_size(s), l.units, l.l2);
        break;
      case LayerKind::Dropout: layer = std::make_unique<DropoutLayer>(l.keep_prob); break;
      case LayerKind::Activation: layer = std::make_unique<ActivationLayer>(l.activation); break;
      case LayerKind::Softmax: break;
    }
    s = count.layers[i].output_shape;
    if (!layer) continue;
    if (layers_.empty()) layer->set_needs_input_grad(false);
    prefixes_.push_back(pad2(i) + "_" + kind_tag(l.kind));
    layers_.push_back(std::move(layer));
  }
}

Network build_network(const NetworkConfig& config) { return Network(config); }

void Network::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& layer : layers_) {
    for (Param* p : layer->params()) {
      if (p->name == "kernel" || p->name == "w1" || p->name == "w2") {
        const Shape& sh = p->value.shape();
        const std::size_t fan_in = p->name == "kernel" ? p->value.size() / sh.back() : sh[1];
        p->value = init_truncated_normal(sh, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
      } else if (p->name == "gamma") {
        p->value.fill(1.0);
      } else {
        p->value.fill(0.0);
      }
      p->grad.fill(0.0);
    }
    for (Buffer& b : layer->buffers()) {
      std::fill(b.values->begin(), b.values->end(), b.name == "moving_var" ? 1.0 : 0.0);
    }
  }
}

Tensor Network::forward(const Tensor& x, Mode mode, Rng& rng) {
  if (x.rank() != config_.input_shape.size() + 1 ||
      !std::equal(config_.input_shape.begin(), config_.input_shape.end(),
                  x.shape().begin() + 1)) {
    throw ConfigError("network: input " + shape_string(x.shape()) +
                      " does not match configured sample shape " +
                      shape_string(config_.input_shape));
  }
  Tensor h = x;
  for (auto& layer : layers_) h = layer->forward(h, mode, rng);
  return h;
}

double Network::l2_penalty(double default_l2) {
  double total = 0.0;
  for (Param* p : params()) {
    const double lambda = p->l2.value_or(p->decays ? default_l2 : 0.0);
    if (lambda == 0.0) continue;
    double sq = 0.0;
    for (double w : p->value.values()) sq += w * w;
    total += 0.5 * lambda * sq;
  }
  return total;
}

double Network::loss(const Tensor& logits, std::span<const int> labels, double default_l2) {
  return cross_entropy(softmax(logits), one_hot(labels, config_.num_classes)) +
         l2_penalty(default_l2);
}

double Network::forward_backward(const Tensor& x, std::span<const int> labels,
                                 double default_l2, Rng& rng) {
  if (labels.size() != x.dim(0)) throw ArgumentError("network: labels/batch size mismatch");
  auto ps = params();
  for (Param* p : ps) p->grad.fill(0.0);

  const Tensor logits = forward(x, Mode::Train, rng);
  const Tensor probs = softmax(logits);
  const Tensor targets = one_hot(labels, config_.num_classes);
  const double loss = cross_entropy(probs, targets) + l2_penalty(default_l2);

  Tensor grad = softmax_cross_entropy_grad(probs, targets);
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) grad = (*it)->backward(grad);

  for (Param* p : ps) {
    const double lambda = p->l2.value_or(p->decays ? default_l2 : 0.0);
    if (lambda == 0.0) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += lambda * p->value[i];
  }
  return loss;
}

Tensor Network::predict_proba(const Tensor& x, std::size_t chunk) {
  const std::size_t n = x.dim(0);
  Tensor out({n, config_.num_classes});
  Rng unused(0);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const Tensor probs = softmax(forward(gather_rows(x, rows), Mode::Infer, unused));
    std::copy(probs.values().begin(), probs.values().end(),
              out.data() + start * config_.num_classes);
  }
  return out;
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  for (auto& layer : layers_) {
    for (Param* p : layer->params()) out.push_back(p);
  }
  return out;
}

ParameterSet Network::snapshot() {
  ParameterSet set;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (Param* p : layers_[i]->params()) {
      set.tensors.push_back({prefixes_[i] + "/" + p->name, p->value});
    }
    for (Buffer& b : layers_[i]->buffers()) {
      set.tensors.push_back({prefixes_[i] + "/" + b.name, Tensor({b.values->size()}, *b.values)});
    }
  }
  return set;
}

void Network::load(const ParameterSet& set) {
  std::size_t k = 0;
  auto next = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    if (k >= set.tensors.size()) throw ConfigError("parameter set has too few tensors");
    const NamedTensor& t = set.tensors[k++];
    if (t.name != name || t.value.shape() != shape) {
      throw ConfigError("parameter set mismatch at " + name + ": file has " + t.name + " " +
                        shape_string(t.value.shape()) + ", network expects " +
                        shape_string(shape));
    }
    return t.value;
  };
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (Param* p : layers_[i]->params()) {
      p->value = next(prefixes_[i] + "/" + p->name, p->value.shape());
    }
    for (Buffer& b : layers_[i]->buffers()) {
      const Tensor& t = next(prefixes_[i] + "/" + b.name, {b.values->size()});
      b.values->assign(t.values().begin(), t.values().end());
    }
  }
  if (k != set.tensors.size()) throw ConfigError("parameter set has extra tensors");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning rate must be finite and >= 0");
  }
  if (batch_size < 2) throw ConfigError("train: batch size must be >= 2");
  if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: Adam moments must be in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be positive");
  if (!(l2 >= 0.0)) throw ConfigError("train: l2 must be >= 0");
}

void Adam::step(std::span<Param* const> params, std::size_t t, double lr) {
  if (t == 0) throw ArgumentError("Adam::step: t counts from 1");
  if (m_.size() != params.size()) {
    m_.assign(params.size(), {});
    v_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i]->value.size(), 0.0);
      v_[i].assign(params[i]->value.size(), 0.0);
    }
  }
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p.value[j] -= lr * m_hat / (std::sqrt(v_hat) + epsilon_);
    }
  }
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  Shape shape = x.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  const std::size_t stride = x.row_size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(x.data() + rows[i] * stride, x.data() + (rows[i] + 1) * stride,
              out.data() + i * stride);
  }
  return out;
}

TrainResult train(Network& net, const Tensor& inputs, std::span<const int> labels,
                  const TrainConfig& config, const BatchObserver& observer) {
  config.validate();
  const std::size_t n = inputs.rank() == 0 ? 0 : inputs.dim(0);
  if (n < 2) throw ArgumentError("train: need at least two samples");
  if (labels.size() != n) throw ArgumentError("train: label count != sample count");

  Rng rng(config.seed);
  Adam adam(config.beta1, config.beta2, config.epsilon);
  auto params = net.params();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> batch_labels;

  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n;) {
      std::size_t end = std::min(n, start + config.batch_size);
      if (n - end == 1) end = n;
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Tensor xb = gather_rows(inputs, rows);
      batch_labels.resize(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) batch_labels[i] = labels[rows[i]];
      if (observer) observer(xb);

      const double loss = net.forward_backward(xb, batch_labels, config.l2, rng);
      if (!std::isfinite(loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(batches + 1));
      }
      adam.step(params, ++step, config.learning_rate);
      epoch_loss += loss;
      ++batches;
      start = end;
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(batches));
  }
  return result;
}

std::vector<int> predict_classes(Network& net, const Tensor& inputs) {
  const Tensor probs = net.predict_proba(inputs);
  const std::size_t k = probs.dim(1);
  std::vector<int> out(probs.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* row = probs.data() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

}  // namespace depl::nn
