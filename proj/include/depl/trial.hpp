#pragma once

#include "depl/signal.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace depl {

enum class Task { Valence = 0, Arousal = 1 };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);

struct Ratings {
  double valence = 5.0;
  double arousal = 5.0;

  bool operator==(const Ratings&) const = default;
};

// Binary classes: 1 = high, 0 = low.
struct Labels {
  int valence = 0;
  int arousal = 0;

  int get(Task task) const { return task == Task::Valence ? valence : arousal; }
  bool operator==(const Labels&) const = default;
};

inline constexpr double kDefaultLabelThreshold = 5.0;

// A rating strictly above `threshold` is the high class.
Labels derive_labels(const Ratings& ratings, double threshold);

// The 32 electrodes in DEAP channel order.
const std::vector<std::string>& canonical_channels();

struct EegTrial {
  std::int32_t subject_id = 0;
  std::int32_t trial_id = 0;
  double sample_rate_hz = 128.0;
  std::vector<std::string> channel_names;
  Matrix samples;  // channels x samples
  std::size_t baseline_len_samples = 0;
  Ratings ratings;
  Labels labels;

  std::size_t num_samples() const { return samples.cols(); }

  // Throws ArgumentError when the shape invariants do not hold.
  void validate() const;

  bool operator==(const EegTrial&) const = default;
};

}  // namespace depl
