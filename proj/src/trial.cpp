#include "depl/trial.hpp"

#include "depl/error.hpp"

#include <string>

namespace depl {

std::string_view task_name(Task task) {
  return task == Task::Valence ? "valence" : "arousal";
}

Task parse_task(std::string_view name) {
  if (name == "valence") return Task::Valence;
  if (name == "arousal") return Task::Arousal;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected valence or arousal)");
}

Labels derive_labels(const Ratings& ratings, double threshold) {
  return {ratings.valence > threshold ? 1 : 0, ratings.arousal > threshold ? 1 : 0};
}

const std::vector<std::string>& canonical_channels() {
  static const std::vector<std::string> names = {
      "FP1", "AF3", "F3",  "F7",  "FC5", "FC1", "C3",  "T7",  "CP5", "CP1", "P3",
      "P7",  "PO3", "O1",  "OZ",  "PZ",  "FP2", "AF4", "FZ",  "F4",  "F8",  "FC6",
      "FC2", "CZ",  "C4",  "T8",  "CP6", "CP2", "P4",  "P8",  "PO4", "O2"};
  return names;
}

void EegTrial::validate() const {
  if (!(sample_rate_hz > 0.0)) throw ArgumentError("EegTrial: sample rate must be positive");
  if (samples.rows() != channel_names.size()) {
    throw ArgumentError("EegTrial: " + std::to_string(samples.rows()) +
                        " sample rows but " + std::to_string(channel_names.size()) +
                        " channel names");
  }
  if (baseline_len_samples >= samples.cols()) {
    throw ArgumentError("EegTrial: baseline length " + std::to_string(baseline_len_samples) +
                        " must be shorter than the trial (" + std::to_string(samples.cols()) +
                        " samples)");
  }
}

}  // namespace depl
