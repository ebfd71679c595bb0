#pragma once

#include "depl/signal.hpp"
#include "depl/trial.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace depl {

inline constexpr std::size_t kNumChannels = 32;
inline constexpr std::size_t kFeatureDim = kNumChannels * kNumBands;  // 128

// Layout: index band * 32 + channel, bands theta, alpha, beta, gamma.
using FeatureVector = std::array<double, kFeatureDim>;

constexpr std::size_t feature_index(Band band, std::size_t channel) {
  return static_cast<std::size_t>(band) * kNumChannels + channel;
}

struct FeatureEpoch {
  std::int32_t subject_id = 0;
  std::int32_t trial_id = 0;
  std::int32_t epoch_index = 0;
  FeatureVector values{};
  Labels labels;

  bool operator==(const FeatureEpoch&) const = default;
};

struct BaselineFeature {
  FeatureVector values{};
};

// Gaussian differential entropy 0.5 * ln(2 pi e var) in nats, using the
// mean-subtracted maximum-likelihood variance.
double differential_entropy(std::span<const double> window);

// Per-window DE of the pre-trial segment, averaged over its windows. Returns
// nullopt when the segment is empty (recordings without a baseline).
std::optional<BaselineFeature> baseline_de(const BandDecomposition& baseline,
                                           std::size_t window_len = 128);

// Trailing moving average over the last d values; the first d - 1 outputs
// average the available prefix.
std::vector<double> smooth_sequence(std::span<const double> seq, std::size_t d);

FeatureVector subtract_baseline(const FeatureVector& smoothed,
                                const std::optional<BaselineFeature>& baseline);

struct PreprocessConfig {
  FilterBank filters = design_filter_bank(128.0, 4);
  std::size_t window_len = 128;
  std::size_t smooth_d = 3;
};

// Full feature pipeline for one trial: band decomposition of the whole
// recording, baseline DE, smoothed experimental DE, baseline subtraction.
// Emits floor((T - baseline_len) / window_len) epochs.
std::vector<FeatureEpoch> eeg_pre(const EegTrial& trial, const PreprocessConfig& config);

// Per-dimension z-score fitted on training data only.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(const FeatureVector& mean, const FeatureVector& stddev);

  const FeatureVector& mean() const { return mean_; }
  const FeatureVector& stddev() const { return stddev_; }

  FeatureVector apply(const FeatureVector& v) const;

 private:
  FeatureVector mean_{};
  FeatureVector stddev_{};
};

// Zero-variance dimensions get stddev 1.
Normalizer fit_normalizer(std::span<const FeatureEpoch> train);
std::vector<FeatureEpoch> apply_normalizer(const Normalizer& norm,
                                           std::span<const FeatureEpoch> epochs);

}  // namespace depl
