#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "depl/error.hpp"
#include "depl/nn/layers.hpp"
#include "depl/nn/network.hpp"
#include "gradcheck.hpp"

#include <cmath>
#include <numeric>

using namespace depl;
using namespace depl::nn;
using gradcheck::random_tensor;

namespace {

// Direct seven-loop convolution.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, Padding padding) {
  const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), cin = x.dim(3);
  const std::size_t k = w.dim(0), cout = w.dim(3);
  const long before = padding == Padding::Same ? static_cast<long>((k - 1) / 2) : 0;
  const std::size_t oh = padding == Padding::Same ? h : h - k + 1;
  const std::size_t ow = padding == Padding::Same ? wd : wd - k + 1;
  Tensor y({n, oh, ow, cout});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        for (std::size_t o = 0; o < cout; ++o) {
          double acc = b[o];
          for (std::size_t di = 0; di < k; ++di) {
            for (std::size_t dj = 0; dj < k; ++dj) {
              const long r = static_cast<long>(i + di) - before;
              const long c = static_cast<long>(j + dj) - before;
              if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(wd)) {
                continue;
              }
              for (std::size_t ci = 0; ci < cin; ++ci) {
                acc += x.at(s, static_cast<std::size_t>(r), static_cast<std::size_t>(c), ci) *
                       w.at(di, dj, ci, o);
              }
            }
          }
          y.at(s, i, j, o) = acc;
        }
      }
    }
  }
  return y;
}

Tensor pool_oracle(const Tensor& x, std::size_t size, std::size_t stride) {
  const std::size_t oh = (x.dim(1) - size) / stride + 1, ow = (x.dim(2) - size) / stride + 1;
  Tensor y({x.dim(0), oh, ow, x.dim(3)});
  for (std::size_t s = 0; s < x.dim(0); ++s) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        for (std::size_t c = 0; c < x.dim(3); ++c) {
          double m = -INFINITY;
          for (std::size_t a = 0; a < size; ++a) {
            for (std::size_t b = 0; b < size; ++b) {
              m = std::max(m, x.at(s, i * stride + a, j * stride + b, c));
            }
          }
          y.at(s, i, j, c) = m;
        }
      }
    }
  }
  return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Two gaussian blobs on a 3x3 single-channel grid, separated along one cell.
void toy_problem(std::size_t n, std::uint64_t seed, Tensor& x, std::vector<int>& y) {
  Rng rng(seed);
  x = Tensor({n, 3, 3, 1});
  y.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    for (std::size_t c = 0; c < 9; ++c) x[i * 9 + c] = rng.normal(0.0, 0.5);
    x[i * 9 + 4] += y[i] ? 2.0 : -2.0;
  }
}

NetworkConfig toy_config() {
  return parse_layers("toy", {3, 3, 1},
                      "conv(4,3,same) -> swish -> batchnorm -> se(2) -> dense(8) -> swish -> "
                      "dropout(0.8) -> dense(2) -> softmax");
}

}  // namespace

TEST_SUITE("forward oracles") {
  TEST_CASE("conv2d matches the direct loop") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
      Rng rng(seed);
      const std::size_t k = 1 + 2 * rng.below(3);
      const std::size_t h = k + rng.below(5), w = k + rng.below(5);
      const std::size_t cin = 1 + rng.below(4), cout = 1 + rng.below(20);
      const Tensor x = random_tensor({1 + rng.below(3), h, w, cin}, rng);
      const Tensor wt = random_tensor({k, k, cin, cout}, rng);
      const Tensor b = random_tensor({cout}, rng);
      for (Padding p : {Padding::Same, Padding::Valid}) {
        CHECK(max_abs_diff(conv2d_forward(x, wt, b, p), conv_oracle(x, wt, b, p)) < 1e-12);
      }
    }
  }

  TEST_CASE("even kernel same padding puts the extra row after") {
    Tensor x({1, 2, 2, 1}, std::vector<double>{1, 2, 3, 4});
    Tensor w({2, 2, 1, 1}, std::vector<double>{1, 0, 0, 0});
    const Tensor y = conv2d_forward(x, w, Tensor({1}), Padding::Same);
    CHECK(y.values()[0] == 1.0);
    CHECK(max_abs_diff(y, conv_oracle(x, w, Tensor({1}), Padding::Same)) == 0.0);
  }

  TEST_CASE("maxpool matches the direct loop and floors odd sizes") {
    Rng rng(3);
    const Tensor x = random_tensor({2, 9, 9, 3}, rng);
    const auto r = maxpool_forward(x, 2, 2);
    CHECK(r.output.shape() == Shape{2, 4, 4, 3});
    CHECK(max_abs_diff(r.output, pool_oracle(x, 2, 2)) == 0.0);
    for (std::size_t i = 0; i < r.output.size(); ++i) CHECK(x[r.argmax[i]] == r.output[i]);
  }

  TEST_CASE("dense matches the matrix product") {
    Rng rng(4);
    const Tensor x = random_tensor({3, 2, 2, 2}, rng);
    const Tensor w = random_tensor({8, 5}, rng), b = random_tensor({5}, rng);
    const Tensor y = dense_forward(x, w, b);
    REQUIRE(y.shape() == Shape{3, 5});
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t u = 0; u < 5; ++u) {
        double acc = b[u];
        for (std::size_t f = 0; f < 8; ++f) acc += x[s * 8 + f] * w[f * 5 + u];
        CHECK(y[s * 5 + u] == doctest::Approx(acc).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("swish values") {
    CHECK(swish(0.0) == 0.0);
    CHECK(swish(1.0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    CHECK(swish(-50.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(swish(50.0) == doctest::Approx(50.0));
    CHECK(swish_derivative(0.0) == doctest::Approx(0.5));
  }

  TEST_CASE("softmax rows sum to one and survive large logits") {
    Rng rng(5);
    Tensor z = random_tensor({6, 4}, rng, 5.0);
    z[0] = 1000.0;
    z[5] = -1000.0;
    const Tensor p = softmax(z);
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        CHECK(std::isfinite(p[i * 4 + k]));
        CHECK(p[i * 4 + k] >= 0.0);
        s += p[i * 4 + k];
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(p[0] == doctest::Approx(1.0));
  }

  TEST_CASE("cross entropy of uniform probabilities is ln K") {
    const Tensor p({2, 4}, 0.25);
    const int labels[] = {1, 3};
    CHECK(cross_entropy(p, one_hot(labels, 4)) == doctest::Approx(std::log(4.0)));
  }

  TEST_CASE("SE gates lie in (0,1) and never amplify") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed);
      const Tensor u = random_tensor({2, 4, 4, 8}, rng, 3.0);
      const auto r = se_block_forward(u, random_tensor({2, 8}, rng), random_tensor({8, 2}, rng));
      for (double s : r.gates) {
        CHECK(s > 0.0);
        CHECK(s < 1.0);
      }
      for (std::size_t i = 0; i < u.size(); ++i) CHECK(std::abs(r.output[i]) <= std::abs(u[i]));
      // squeeze is the spatial mean
      double m = 0.0;
      for (std::size_t p = 0; p < 16; ++p) m += u[p * 8];
      CHECK(r.squeeze[0] == doctest::Approx(m / 16.0));
    }
  }

  TEST_CASE("batch norm train output has zero mean and unit variance per channel") {
    Rng rng(6);
    const Tensor x = random_tensor({4, 3, 3, 2}, rng, 4.0);
    BatchNormStats st{{0, 0}, {1, 1}};
    const std::vector<double> one{1, 1}, zero{0, 0};
    const Tensor y = batchnorm_forward(x, one, zero, Mode::Train, st);
    for (std::size_t c = 0; c < 2; ++c) {
      double m = 0.0, v = 0.0;
      for (std::size_t i = c; i < y.size(); i += 2) m += y[i];
      m /= 36.0;
      for (std::size_t i = c; i < y.size(); i += 2) v += (y[i] - m) * (y[i] - m);
      CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
      CHECK(v / 36.0 == doctest::Approx(1.0).epsilon(1e-4));
    }
    CHECK(st.running_mean[0] != 0.0);
  }

  TEST_CASE("batch norm infer uses running statistics") {
    const Tensor x({1, 1, 1, 1}, std::vector<double>{5.0});
    BatchNormStats st{{1.0}, {4.0}};
    const std::vector<double> scale{2.0}, shift{0.5};
    const Tensor y = batchnorm_forward(x, scale, shift, Mode::Infer, st);
    CHECK(y[0] == doctest::Approx(2.0 * 4.0 / std::sqrt(4.0 + kBatchNormEps) + 0.5));
  }

  TEST_CASE("dropout") {
    Rng rng(7);
    const Tensor x({1, 10000}, 1.0);
    CHECK(dropout(x, 0.6, Mode::Infer, rng) == x);
    CHECK(dropout(x, 1.0, Mode::Train, rng) == x);
    const Tensor y = dropout(x, 0.6, Mode::Train, rng);
    double kept = 0.0;
    for (double v : y.values()) {
      CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.6)));
      kept += v != 0.0;
    }
    CHECK(kept / 10000.0 == doctest::Approx(0.6).epsilon(0.05));
  }
}

TEST_SUITE("gradients") {
  TEST_CASE("every layer type passes finite differences on 20 random instances") {
    std::map<std::string, double> worst;
    std::map<std::string, int> count;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      for (const auto& inst : gradcheck::layer_suite(seed)) {
        worst[inst.kind] = std::max(worst[inst.kind], inst.error);
        ++count[inst.kind];
      }
    }
    for (const auto& [kind, err] : worst) {
      INFO(kind, " worst relative error ", err);
      CHECK(count[kind] >= 20);
      CHECK(err <= 1e-4);
    }
    CHECK(worst.size() == 11);
  }

  TEST_CASE("relu layer away from the kink") {
    ActivationLayer act(Activation::Relu);
    Tensor x({2, 5}, std::vector<double>{-2, -1, 0.5, 1, 3, -0.7, 0.4, 2, -3, 1.5});
    CHECK(gradcheck::check_layer(act, x, 1).worst() <= 1e-8);
  }

  TEST_CASE("backward without a train forward is a state error") {
    Conv2DLayer conv(1, 2, 3, Padding::Same, std::nullopt);
    CHECK_THROWS_AS(conv.backward(Tensor({1, 3, 3, 2})), StateError);
    DenseLayer dense(4, 2, std::nullopt);
    Rng rng(1);
    dense.forward(Tensor({1, 4}), Mode::Infer, rng);
    CHECK_THROWS_AS(dense.backward(Tensor({1, 2})), StateError);
    BatchNormLayer bn(1);
    CHECK_THROWS_AS(bn.backward(Tensor({2, 1, 1, 1})), StateError);
    SeBlockLayer se(4, 2);
    CHECK_THROWS_AS(se.backward(Tensor({1, 1, 1, 4})), StateError);
    MaxPoolLayer pool(2, 2);
    CHECK_THROWS_AS(pool.backward(Tensor({1, 1, 1, 1})), StateError);
  }
}

TEST_SUITE("parameter counting") {
  TEST_CASE("small examples") {
    CHECK(param_count(parse_layers("d", {4}, "dense(2) -> softmax")).trainable == 10);
    const auto c = param_count(parse_layers("c", {9, 9, 1}, "conv(100,3) -> dense(2) -> softmax"));
    CHECK(c.layers[0].trainable == 1000);
    CHECK(c.layers[0].output_shape == Shape{9, 9, 100});
    const auto bn = param_count(parse_layers("b", {9, 9, 3}, "batchnorm -> dense(2) -> softmax"));
    CHECK(bn.layers[0].trainable == 6);
    CHECK(bn.layers[0].non_trainable == 6);
    const auto se = param_count(parse_layers("s", {2, 2, 8}, "se(4) -> dense(2) -> softmax"));
    CHECK(se.layers[0].trainable == 2 * 8 * 2);
  }

  TEST_CASE("totals are the sum of the layers") {
    for (const auto& cfg : {preset_depl_text(), preset_depl_table6(), toy_config()}) {
      const auto c = param_count(cfg);
      std::size_t t = 0, nt = 0;
      for (const auto& l : c.layers) {
        t += l.trainable;
        nt += l.non_trainable;
      }
      CHECK(t == c.trainable);
      CHECK(nt == c.non_trainable);
    }
  }

  TEST_CASE("presets") {
    // conv 1000 + 90100, batch norm 2 x 200 (+ 2 x 200 moving), se 2 x 5000,
    // flatten 2x2x100 -> dense 48120, 14520, 242
    const auto text = param_count(preset_depl_text());
    CHECK(text.trainable == 1000 + 90100 + 400 + 10000 + 48120 + 14520 + 242);
    CHECK(text.trainable == 164382);
    CHECK(text.non_trainable == 400);
    const auto t6 = param_count(preset_depl_table6());
    CHECK(t6.trainable == 2600 + 250100 + 400 + 10000 + 48120 + 10164 + 170);
    CHECK(t6.trainable == 321554);
    CHECK(kPublishedParameterCount == 152566);
  }

  TEST_CASE("built network agrees with the count") {
    for (const auto& cfg : {preset_depl_text(), toy_config()}) {
      Network net(cfg);
      std::size_t n = 0;
      for (Param* p : net.params()) n += p->value.size();
      CHECK(n == param_count(cfg).trainable);
    }
  }

  TEST_CASE("invalid stacks are configuration errors") {
    CHECK_THROWS_AS(param_count(parse_layers("x", {9, 9, 1}, "conv(4,3) -> dense(2)")),
                    ConfigError);
    CHECK_THROWS_AS(param_count(parse_layers("x", {9, 9, 1}, "conv(4,11,valid) -> dense(2) -> softmax")),
                    ConfigError);
    CHECK_THROWS_AS(param_count(parse_layers("x", {9, 9, 6}, "se(4) -> dense(2) -> softmax")),
                    ConfigError);
    CHECK_THROWS_AS(param_count(parse_layers("x", {4}, "dense(3) -> softmax")), ConfigError);
    CHECK_THROWS_AS(param_count(parse_layers("x", {4}, "softmax -> dense(2)")), ConfigError);
  }
}

TEST_SUITE("layer text") {
  TEST_CASE("format then parse is the identity") {
    for (const char* s : {"conv(100,3,same)", "conv(8,5,valid,l2=0.01)", "maxpool(2,2)", "batchnorm",
                          "se(4)", "dense(120)", "dense(2,l2=0.5)", "dropout(0.6)", "swish", "relu",
                          "sigmoid", "softmax"}) {
      CHECK(format_layer(parse_layer(s)) == s);
    }
    const auto p = preset_depl_table6();
    CHECK(parse_layers(p.name, p.input_shape, p.layers_string()) == p);
  }

  TEST_CASE("bad layer text") {
    CHECK_THROWS_AS(parse_layer("conv"), ConfigError);
    CHECK_THROWS_AS(parse_layer("conv(4,3,full)"), ConfigError);
    CHECK_THROWS_AS(parse_layer("dense(2"), ConfigError);
    CHECK_THROWS_AS(parse_layer("tanh"), ConfigError);
    CHECK_THROWS_AS(parse_layer("se(l2=0.1)"), ConfigError);
    CHECK_THROWS_AS(parse_layer("dense(-1)"), ConfigError);
    CHECK_THROWS_AS(preset("lenet"), ConfigError);
  }
}

TEST_SUITE("initialization and optimizer") {
  TEST_CASE("truncated normal at two standard deviations") {
    const double sigma = 0.3;
    const Tensor t = init_truncated_normal({200000}, sigma, 11);
    double m = 0.0, v = 0.0, mx = 0.0;
    for (double x : t.values()) {
      m += x;
      mx = std::max(mx, std::abs(x));
    }
    m /= static_cast<double>(t.size());
    for (double x : t.values()) v += (x - m) * (x - m);
    const double sd = std::sqrt(v / static_cast<double>(t.size()));
    // std of N(0,1) truncated to [-2,2]
    const double phi2 = std::exp(-2.0) / std::sqrt(2.0 * std::numbers::pi);
    const double z = std::erf(2.0 / std::sqrt(2.0));
    const double expected = sigma * std::sqrt(1.0 - 4.0 * phi2 / z);
    CHECK(expected == doctest::Approx(0.8796 * sigma).epsilon(1e-3));
    CHECK(sd == doctest::Approx(expected).epsilon(0.01));
    CHECK(std::abs(m) < 0.005);
    CHECK(mx <= 2.0 * sigma);
  }

  TEST_CASE("he initialization scale and zero biases") {
    Network net(preset_depl_text());
    net.initialize(3);
    for (Param* p : net.params()) {
      if (p->name == "bias" || p->name == "beta") {
        for (double v : p->value.values()) CHECK(v == 0.0);
      }
      if (p->name == "gamma") {
        for (double v : p->value.values()) CHECK(v == 1.0);
      }
    }
    Param* k = nullptr;
    for (Param* p : net.params()) {
      if (p->name == "kernel" && p->value.dim(0) == 3 && p->value.dim(2) == 100) k = p;
    }
    REQUIRE(k);
    double v = 0.0;
    for (double x : k->value.values()) v += x * x;
    const double sd = std::sqrt(v / static_cast<double>(k->value.size()));
    CHECK(sd == doctest::Approx(0.8796 * std::sqrt(2.0 / 900.0)).epsilon(0.02));
  }

  TEST_CASE("one Adam step by hand") {
    Param p{"w", Tensor({2}, std::vector<double>{1.0, -1.0}), Tensor({2}, std::vector<double>{2.0, -0.5}), false, std::nullopt};
    Param* ps[] = {&p};
    Adam adam(0.9, 0.999, 1e-8);
    adam.step(ps, 1, 0.1);
    // m_hat = g, v_hat = g^2, so the first step is lr * sign(g) up to epsilon
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-15));
    CHECK(p.value[1] == doctest::Approx(-1.0 + 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-15));
    // second step with the same gradient
    adam.step(ps, 2, 0.1);
    const double m = 0.9 * 0.1 * 2.0 + 0.1 * 2.0, v = 0.999 * 0.001 * 4.0 + 0.001 * 4.0;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.2 / (2.0 + 1e-8) - 0.1 * mh / (std::sqrt(vh) + 1e-8)));
    CHECK_THROWS_AS(adam.step(ps, 0, 0.1), ArgumentError);
  }
}

TEST_SUITE("training") {
  TrainConfig fast() {
    TrainConfig t;
    t.learning_rate = 1e-2;
    t.batch_size = 16;
    t.epochs = 20;
    t.l2 = 1e-3;
    t.seed = 5;
    return t;
  }

  TEST_CASE("zero learning rate leaves parameters unchanged") {
    Tensor x;
    std::vector<int> y;
    toy_problem(40, 1, x, y);
    Network net(toy_config());
    net.initialize(2);
    std::vector<Tensor> before;
    for (Param* p : net.params()) before.push_back(p->value);
    auto cfg = fast();
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    train(net, x, y, cfg);
    const auto ps = net.params();
    for (std::size_t i = 0; i < ps.size(); ++i) CHECK(ps[i]->value == before[i]);
  }

  TEST_CASE("same seed gives identical loss curves and weights") {
    Tensor x;
    std::vector<int> y;
    toy_problem(50, 2, x, y);
    auto run = [&] {
      Network net(toy_config());
      net.initialize(4);
      auto r = train(net, x, y, fast());
      return std::make_pair(r.loss_curve, net.snapshot());
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK(a.first.size() == 20);
  }

  TEST_CASE("separable toy problem is learned") {
    Tensor x, xt;
    std::vector<int> y, yt;
    toy_problem(120, 3, x, y);
    toy_problem(60, 4, xt, yt);
    Network net(toy_config());
    net.initialize(6);
    const auto r = train(net, x, y, fast());
    CHECK(r.loss_curve[9] < r.loss_curve[0]);
    const auto pred = predict_classes(net, xt);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == yt[i];
    CHECK(static_cast<double>(ok) / static_cast<double>(pred.size()) >= 0.95);
  }

  TEST_CASE("inference draws nothing from the generator") {
    Tensor x;
    std::vector<int> y;
    toy_problem(8, 5, x, y);
    Network net(toy_config());
    net.initialize(1);
    Rng a(9), b(9);
    net.forward(x, Mode::Infer, a);
    CHECK(a.next_u64() == b.next_u64());
  }

  TEST_CASE("predictions do not depend on chunking") {
    Tensor x;
    std::vector<int> y;
    toy_problem(37, 6, x, y);
    Network net(toy_config());
    net.initialize(1);
    train(net, x, y, fast());
    CHECK(max_abs_diff(net.predict_proba(x, 5), net.predict_proba(x, 256)) < 1e-12);
  }

  TEST_CASE("snapshot and load round trip") {
    Network a(toy_config()), b(toy_config());
    a.initialize(1);
    b.initialize(2);
    b.load(a.snapshot());
    CHECK(a.snapshot() == b.snapshot());
    auto set = a.snapshot();
    set.tensors.pop_back();
    CHECK_THROWS_AS(b.load(set), ConfigError);
  }

  TEST_CASE("non-finite loss is reported") {
    Tensor x;
    std::vector<int> y;
    toy_problem(10, 7, x, y);
    x[3] = std::nan("");
    Network net(toy_config());
    net.initialize(1);
    CHECK_THROWS_AS(train(net, x, y, fast()), NumericError);
  }

  TEST_CASE("trailing single-sample batch is merged") {
    Tensor x;
    std::vector<int> y;
    toy_problem(17, 8, x, y);
    Network net(toy_config());
    net.initialize(1);
    std::vector<std::size_t> sizes;
    auto cfg = fast();
    cfg.epochs = 1;
    train(net, x, y, cfg, [&](const Tensor& b) { sizes.push_back(b.dim(0)); });
    CHECK(sizes == std::vector<std::size_t>{17});
  }

  TEST_CASE("configuration validation") {
    TrainConfig t;
    t.batch_size = 1;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.beta1 = 1.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.learning_rate = -1.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
  }
}
