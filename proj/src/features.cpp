#include "depl/features.hpp"

#include "depl/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace depl {

double differential_entropy(std::span<const double> window) {
  if (window.size() < 2) throw ArgumentError("differential_entropy: need at least 2 samples");
  const double n = static_cast<double>(window.size());
  double mean = 0.0;
  for (double v : window) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : window) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0.0)) throw DegenerateInputError("differential_entropy: window has zero variance");
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * var);
}

std::optional<BaselineFeature> baseline_de(const BandDecomposition& baseline,
                                           std::size_t window_len) {
  const std::size_t len = baseline.bands[0].cols();
  if (len == 0) return std::nullopt;
  if (window_len == 0 || len % window_len != 0) {
    throw ArgumentError("baseline_de: baseline length " + std::to_string(len) +
                        " is not a positive multiple of " + std::to_string(window_len));
  }
  if (baseline.bands[0].rows() != kNumChannels) {
    throw ArgumentError("baseline_de: expected 32 channels");
  }
  BaselineFeature out;
  for (Band b : kAllBands) {
    const Matrix& m = baseline[b];
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
      const auto windows = segment_windows(m.row(ch), window_len, window_len);
      double acc = 0.0;
      for (const auto& w : windows) acc += differential_entropy(w);
      out.values[feature_index(b, ch)] = acc / static_cast<double>(windows.size());
    }
  }
  return out;
}

std::vector<double> smooth_sequence(std::span<const double> seq, std::size_t d) {
  if (d == 0) throw ArgumentError("smooth_sequence: delay d must be >= 1");
  if (seq.empty()) throw ArgumentError("smooth_sequence: sequence is empty");
  std::vector<double> out(seq.size());
  for (std::size_t n = 0; n < seq.size(); ++n) {
    const std::size_t first = n + 1 >= d ? n + 1 - d : 0;
    double acc = 0.0;
    for (std::size_t i = first; i <= n; ++i) acc += seq[i];
    out[n] = acc / static_cast<double>(n - first + 1);
  }
  return out;
}

FeatureVector subtract_baseline(const FeatureVector& smoothed,
                                const std::optional<BaselineFeature>& baseline) {
  if (!baseline) return smoothed;
  FeatureVector out;
  for (std::size_t i = 0; i < kFeatureDim; ++i) out[i] = smoothed[i] - baseline->values[i];
  return out;
}

std::vector<FeatureEpoch> eeg_pre(const EegTrial& trial, const PreprocessConfig& config) {
  trial.validate();
  if (trial.channel_names.size() != kNumChannels) {
    throw ArgumentError("eeg_pre: expected 32 channels, trial has " +
                        std::to_string(trial.channel_names.size()));
  }
  const std::size_t window = config.window_len;
  const std::size_t total = trial.num_samples();
  const std::size_t base_len = trial.baseline_len_samples;
  if (window == 0) throw ArgumentError("eeg_pre: window length must be >= 1");
  const std::size_t n_epochs = (total - base_len) / window;
  if (n_epochs == 0) {
    throw ArgumentError("eeg_pre: experimental segment shorter than one window");
  }

  const BandDecomposition bands = decompose_bands(trial.samples, config.filters);
  const auto baseline = baseline_de(bands.columns(0, base_len), window);

  // de[feature][epoch], smoothed in place per (channel, band) sequence.
  std::vector<std::vector<double>> de(kFeatureDim);
  for (Band b : kAllBands) {
    const Matrix& m = bands[b];
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
      const auto exper = m.row(ch).subspan(base_len, n_epochs * window);
      const auto windows = segment_windows(exper, window, window);
      std::vector<double> seq;
      seq.reserve(windows.size());
      for (const auto& w : windows) seq.push_back(differential_entropy(w));
      de[feature_index(b, ch)] = smooth_sequence(seq, config.smooth_d);
    }
  }

  std::vector<FeatureEpoch> epochs(n_epochs);
  for (std::size_t n = 0; n < n_epochs; ++n) {
    FeatureVector smoothed;
    for (std::size_t f = 0; f < kFeatureDim; ++f) smoothed[f] = de[f][n];
    FeatureEpoch& e = epochs[n];
    e.subject_id = trial.subject_id;
    e.trial_id = trial.trial_id;
    e.epoch_index = static_cast<std::int32_t>(n);
    e.values = subtract_baseline(smoothed, baseline);
    e.labels = trial.labels;
  }
  return epochs;
}

Normalizer::Normalizer(const FeatureVector& mean, const FeatureVector& stddev)
    : mean_(mean), stddev_(stddev) {
  for (double s : stddev_) {
    if (!(s > 0.0)) throw ArgumentError("Normalizer: standard deviations must be positive");
  }
}

FeatureVector Normalizer::apply(const FeatureVector& v) const {
  FeatureVector out;
  for (std::size_t i = 0; i < kFeatureDim; ++i) out[i] = (v[i] - mean_[i]) / stddev_[i];
  return out;
}

Normalizer fit_normalizer(std::span<const FeatureEpoch> train) {
  if (train.empty()) throw ArgumentError("fit_normalizer: training set is empty");
  const double n = static_cast<double>(train.size());
  // Mean as an offset from the first epoch, exact for constant columns.
  const FeatureVector& ref = train.front().values;
  FeatureVector mean{};
  for (const auto& e : train) {
    for (std::size_t i = 0; i < kFeatureDim; ++i) mean[i] += e.values[i] - ref[i];
  }
  for (std::size_t i = 0; i < kFeatureDim; ++i) mean[i] = ref[i] + mean[i] / n;
  FeatureVector var{};
  for (const auto& e : train) {
    for (std::size_t i = 0; i < kFeatureDim; ++i) {
      const double d = e.values[i] - mean[i];
      var[i] += d * d;
    }
  }
  FeatureVector sd;
  for (std::size_t i = 0; i < kFeatureDim; ++i) {
    const double s = std::sqrt(var[i] / n);
    sd[i] = s > 1e-12 * (1.0 + std::abs(mean[i])) ? s : 1.0;
  }
  return Normalizer(mean, sd);
}

std::vector<FeatureEpoch> apply_normalizer(const Normalizer& norm,
                                           std::span<const FeatureEpoch> epochs) {
  std::vector<FeatureEpoch> out(epochs.begin(), epochs.end());
  for (auto& e : out) e.values = norm.apply(e.values);
  return out;
}

}  // namespace depl
