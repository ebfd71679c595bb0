#pragma once

#include "depl/features.hpp"
#include "depl/nn/network.hpp"
#include "depl/trial.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace depl {

// --- trial files ------------------------------------------------------------
//
// "EEGT" | u16 version | i32 subject | i32 trial | f64 rate | u64 baseline
// | f64 valence | f64 arousal | u32 channels | channels x (u16 len, bytes)
// | u64 samples | f64 x channels x samples, channel-major. All little-endian.

inline constexpr std::uint16_t kTrialFormatVersion = 1;

void write_trial(std::ostream& out, const EegTrial& trial);
// Labels are derived from the stored ratings with `threshold`.
EegTrial read_trial(std::istream& in, double threshold = kDefaultLabelThreshold);

void export_trial(const EegTrial& trial, const std::filesystem::path& path);
EegTrial import_trial(const std::filesystem::path& path,
                      double threshold = kDefaultLabelThreshold);

// --- dataset manifest -------------------------------------------------------

struct DatasetManifest {
  std::string name = "dataset";
  std::size_t subjects = 0;
  std::size_t trials_per_subject = 0;
  double sample_rate_hz = 128.0;
  std::vector<std::string> channels = canonical_channels();
  std::size_t baseline_len_samples = 0;
  double label_threshold = kDefaultLabelThreshold;
  std::vector<std::string> files;  // relative to the manifest directory

  bool operator==(const DatasetManifest&) const = default;
};

inline constexpr const char* kManifestName = "manifest.ini";

std::string format_manifest(const DatasetManifest& m);
DatasetManifest parse_manifest(const std::string& text);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct Dataset {
  DatasetManifest manifest;
  std::vector<EegTrial> trials;
  std::uint64_t content_hash = 0;  // over the raw trial file bytes, in manifest order
};

// Reads dir/manifest.ini and every listed trial; checks that each trial
// agrees with the manifest. `threshold` overrides the manifest's.
Dataset load_dataset(const std::filesystem::path& dir,
                     std::optional<double> threshold = std::nullopt);

// --- feature cache ----------------------------------------------------------
//
// "DEPF" | u16 version | u64 preprocess hash | u64 dataset hash | u64 count
// | count x (i32 subject, i32 trial, i32 epoch, u8 valence, u8 arousal,
// 128 x f64) | u64 content hash.

inline constexpr const char* kFeatureCacheName = "features.depf";

struct FeatureCache {
  std::uint64_t preprocess_hash = 0;
  std::uint64_t dataset_hash = 0;
  std::vector<FeatureEpoch> epochs;
};

// Hash of the epoch records exactly as serialized.
std::uint64_t features_hash(std::span<const FeatureEpoch> epochs);

void write_feature_cache(const FeatureCache& cache, const std::filesystem::path& path);
FeatureCache read_feature_cache(const std::filesystem::path& path);

// --- network parameters -----------------------------------------------------
//
// "DEPW" | u16 version | u32 tensors | per tensor (u16 name len, name,
// u8 rank, rank x u64 dims) | all values as f64 in table order.

void write_parameters(std::ostream& out, const nn::ParameterSet& params);
nn::ParameterSet read_parameters(std::istream& in);
void save_parameters(const nn::ParameterSet& params, const std::filesystem::path& path);
nn::ParameterSet load_parameters(const std::filesystem::path& path);

// Whole file as a string; IoError when it cannot be read.
std::string read_text_file(const std::filesystem::path& path);
// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace depl
