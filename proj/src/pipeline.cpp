#include "depl/pipeline.hpp"

#include "depl/error.hpp"
#include "depl/hash.hpp"

namespace depl {

namespace fs = std::filesystem;

std::vector<FeatureEpoch> extract_features(const Dataset& dataset, const RunConfig& config) {
  const auto pre = preprocess_config(config, dataset.manifest.sample_rate_hz);
  std::vector<FeatureEpoch> out;
  for (const auto& trial : dataset.trials) {
    auto epochs = eeg_pre(trial, pre);
    out.insert(out.end(), epochs.begin(), epochs.end());
  }
  return out;
}

EpochsBySubject group_by_subject(std::span<const FeatureEpoch> epochs) {
  EpochsBySubject out;
  for (const auto& e : epochs) out[e.subject_id].push_back(e);
  return out;
}

LoadedFeatures load_features(const fs::path& dir, const RunConfig& config) {
  const fs::path cache_path = dir / kFeatureCacheName;
  const fs::path manifest_path = dir / kManifestName;
  const bool has_cache = fs::exists(cache_path);
  const bool has_trials = fs::exists(manifest_path);
  if (!has_cache && !has_trials) {
    throw IoError("'" + dir.string() + "' holds neither " + kManifestName + " nor " +
                  kFeatureCacheName);
  }

  LoadedFeatures out;
  out.preprocess_hash = preprocess_hash(config);
  if (has_cache) {
    auto cache = read_feature_cache(cache_path);
    if (cache.preprocess_hash == out.preprocess_hash) {
      out.epochs = std::move(cache.epochs);
      out.dataset_hash = cache.dataset_hash;
      out.features_hash = features_hash(out.epochs);
      out.source = "cache";
      return out;
    }
    if (!has_trials) {
      throw ConfigError("feature cache '" + cache_path.string() +
                        "' was built with different preprocess settings (" +
                        hex64(cache.preprocess_hash) + " vs " + hex64(out.preprocess_hash) +
                        "); rerun preprocess");
    }
  }
  const auto dataset = load_dataset(dir, config.threshold);
  out.epochs = extract_features(dataset, config);
  out.dataset_hash = dataset.content_hash;
  out.features_hash = features_hash(out.epochs);
  out.source = has_cache ? "trials (stale cache ignored)" : "trials";
  return out;
}

}  // namespace depl
