#pragma once

#include "depl/config.hpp"
#include "depl/eval.hpp"
#include "depl/io.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace depl {

// eeg_pre over every trial of a dataset, in manifest order.
std::vector<FeatureEpoch> extract_features(const Dataset& dataset, const RunConfig& config);

EpochsBySubject group_by_subject(std::span<const FeatureEpoch> epochs);

struct LoadedFeatures {
  std::vector<FeatureEpoch> epochs;
  std::uint64_t preprocess_hash = 0;
  std::uint64_t dataset_hash = 0;
  std::uint64_t features_hash = 0;
  std::string source;  // "cache", "trials", or "trials (stale cache ignored)"
};

// Features for `dir`: a features.depf written with the same preprocess
// settings, else recomputed from manifest.ini and its trials. A stale cache
// with no trials to fall back on is a ConfigError.
LoadedFeatures load_features(const std::filesystem::path& dir, const RunConfig& config);

}  // namespace depl
