#pragma once

// Feature-level datasets, the sentinel leakage probe and the t-test oracle
// comparison. Shared by the unit tests and the acceptance binary.

#include "depl/eval.hpp"
#include "depl/rng.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <span>
#include <vector>

namespace fixture {

// Subjects 1..subjects, trials alternate low/high valence (arousal is the
// opposite). High-valence epochs are shifted by `effect` on every gamma
// feature.
inline depl::EpochsBySubject make_epochs(std::size_t subjects, std::size_t trials,
                                         std::size_t epochs, double effect, std::uint64_t seed) {
  depl::Rng rng(seed);
  depl::EpochsBySubject out;
  for (std::size_t s = 1; s <= subjects; ++s) {
    auto& v = out[static_cast<std::int32_t>(s)];
    const double offset = rng.normal(0.0, 0.3);
    for (std::size_t t = 1; t <= trials; ++t) {
      const int high = static_cast<int>(t % 2);
      for (std::size_t e = 0; e < epochs; ++e) {
        depl::FeatureEpoch ep;
        ep.subject_id = static_cast<std::int32_t>(s);
        ep.trial_id = static_cast<std::int32_t>(t);
        ep.epoch_index = static_cast<std::int32_t>(e);
        ep.labels = {high, 1 - high};
        for (std::size_t i = 0; i < depl::kFeatureDim; ++i) ep.values[i] = offset + rng.normal();
        for (std::size_t c = 0; c < depl::kNumChannels; ++c) {
          ep.values[depl::feature_index(depl::Band::Gamma, c)] += high * effect;
        }
        v.push_back(ep);
      }
    }
  }
  return out;
}

inline depl::ModelSpec tiny_depl(std::size_t epochs = 3) {
  depl::ModelSpec m;
  m.kind = depl::ModelKind::Depl;
  m.network = depl::nn::parse_layers(
      "tiny", {9, 9, 1},
      "conv(4,3,same) -> swish -> batchnorm -> se(2) -> maxpool(2,2) -> dense(8) -> swish -> "
      "dropout(0.8) -> dense(2) -> softmax");
  m.train.learning_rate = 1e-2;
  m.train.epochs = epochs;
  m.train.batch_size = 16;
  return m;
}

inline std::vector<depl::ModelSpec> all_models() {
  std::vector<depl::ModelSpec> out;
  out.push_back(tiny_depl());
  for (auto k : {depl::ModelKind::Knn, depl::ModelKind::Nb, depl::ModelKind::LogReg}) {
    depl::ModelSpec m;
    m.kind = k;
    m.knn_k = 5;
    m.logreg.epochs = 50;
    out.push_back(m);
  }
  return out;
}

inline constexpr double kSentinel = 1.0e9;

struct LeakageReport {
  std::size_t folds = 0;
  std::size_t clean_folds = 0;
  std::vector<std::string> failures;
};

// For each fold the test subject's features are overwritten with a huge
// sentinel. Training rows are normalized with training statistics only, so
// any sentinel that reaches the normalizer, the training design or a batch
// shows up as a value far outside the training range.
inline LeakageReport sentinel_probe(const depl::ModelSpec& model,
                                    const depl::EpochsBySubject& data,
                                    const depl::EvalConfig& config) {
  std::vector<std::int32_t> ids;
  for (const auto& [s, v] : data) ids.push_back(s);
  const auto plan = depl::loso_split(ids);
  LeakageReport report;
  for (const auto& fold : plan.folds) {
    auto poisoned = data;
    for (auto& e : poisoned[fold.test_subject]) e.values.fill(kSentinel);
    std::size_t expected_train = 0;
    for (auto s : fold.train_subjects) expected_train += data.at(s).size();

    bool clean = true;
    auto fail = [&](const std::string& what) {
      clean = false;
      report.failures.push_back("subject " + std::to_string(fold.test_subject) + ": " + what);
    };
    auto check_values = [&](std::span<const double> v, const char* where) {
      for (double x : v) {
        if (!(std::abs(x) < 1e3)) {
          fail(std::string("sentinel-sized value in ") + where);
          return;
        }
      }
    };
    depl::FoldProbe probe;
    probe.on_normalizer = [&](std::span<const depl::FeatureEpoch> epochs,
                              const depl::Normalizer& norm) {
      if (epochs.size() != expected_train) fail("normalizer saw the wrong number of epochs");
      for (const auto& e : epochs) {
        if (e.subject_id == fold.test_subject) {
          fail("normalizer saw a test epoch");
          break;
        }
      }
      check_values(norm.mean(), "normalizer mean");
      check_values(norm.stddev(), "normalizer std");
    };
    probe.on_training_data = [&](std::span<const double> v) { check_values(v, "training design"); };
    probe.on_batch = [&](const depl::nn::Tensor& b) { check_values(b.values(), "training batch"); };
    depl::run_fold(fold, model, poisoned, config, &probe);
    ++report.folds;
    report.clean_folds += clean;
  }
  return report;
}

struct TTestAgreement {
  std::size_t cases = 0;
  double max_t_error = 0.0;
  double max_p_error = 0.0;
  bool antisymmetric = true;
};

// 50 random paired samples for each n, compared with a direct t statistic
// and a quadrature p-value.
inline TTestAgreement t_test_agreement(std::span<const std::size_t> sizes, std::uint64_t seed) {
  depl::Rng rng(seed);
  TTestAgreement out;
  for (std::size_t n : sizes) {
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> a(n), b(n);
      const double shift = rng.normal(0.0, 0.5);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng.normal(0.7, 0.1);
        b[i] = a[i] + shift * 0.1 + rng.normal(0.0, 0.05);
      }
      double md = 0.0;
      for (std::size_t i = 0; i < n; ++i) md += (a[i] - b[i]) / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) ss += (a[i] - b[i] - md) * (a[i] - b[i] - md);
      const double t = md / std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
      const double p = oracle::t_two_sided_p(t, static_cast<double>(n - 1));

      const auto r = depl::paired_t_test(a, b);
      const auto r2 = depl::paired_t_test(b, a);
      ++out.cases;
      out.max_t_error = std::max(out.max_t_error, std::abs(r.t - t));
      out.max_p_error = std::max(out.max_p_error, std::abs(r.p - p));
      out.antisymmetric = out.antisymmetric && r2.t == -r.t && r2.p == r.p;
    }
  }
  return out;
}

}  // namespace fixture
