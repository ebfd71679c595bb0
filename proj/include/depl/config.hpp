#pragma once

#include "depl/eval.hpp"
#include "depl/features.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace depl {

// Everything that determines a run's results. Text form:
//
//   [preprocess]  filter_order window_len smooth_d threshold
//   [model]       kind preset band se_ratio keep_prob layers knn_k layout
//   [train]       learning_rate batch_size epochs beta1 beta2 epsilon l2
//   [logreg]      learning_rate epochs l2
//   [eval]        task seed
//
// Any other section or key is an error.
struct RunConfig {
  // preprocess
  std::size_t filter_order = 4;
  std::size_t window_len = 128;
  std::size_t smooth_d = 3;
  double threshold = kDefaultLabelThreshold;

  // model
  ModelKind model = ModelKind::Depl;
  std::string preset = "depl-text";
  Band band = Band::Gamma;
  std::size_t se_ratio = 4;
  double keep_prob = 0.6;
  std::string layers;  // custom layer stack; replaces the preset when set
  std::size_t knn_k = 20;
  std::string layout;  // electrode layout file; empty selects the standard grid

  nn::TrainConfig train;
  LogRegConfig logreg;

  // eval
  Task task = Task::Valence;
  std::uint64_t seed = 1;

  void validate() const;  // ConfigError
  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Canonical text; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& c);

// Hash of the canonical text, and of the [preprocess] part alone.
std::uint64_t config_hash(const RunConfig& c);
std::uint64_t preprocess_hash(const RunConfig& c);

PreprocessConfig preprocess_config(const RunConfig& c, double sample_rate_hz);
nn::NetworkConfig network_config(const RunConfig& c);
ModelSpec model_spec(const RunConfig& c);
ElectrodeLayout electrode_layout(const RunConfig& c);
EvalConfig eval_config(const RunConfig& c);

}  // namespace depl
