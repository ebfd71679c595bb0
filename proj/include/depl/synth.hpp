#pragma once

#include "depl/io.hpp"
#include "depl/trial.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace depl {

// Seeded synthetic EEG with a known class effect in the gamma band.
struct SynthSpec {
  std::size_t subjects = 8;
  std::size_t trials = 12;      // per subject, half of them high class
  double duration_s = 60.0;     // experimental segment
  double baseline_s = 3.0;      // pre-trial segment, carries no class effect
  std::uint64_t seed = 1;
  double effect = 3.0;          // gamma amplitude multiplier on parieto-occipital sites
  double gain_jitter = 0.2;     // per-subject channel gain in [1 - j, 1 + j]
  double offset_sd = 10.0;      // per-subject channel DC offset, microvolts
  double sample_rate_hz = 128.0;

  void validate() const;  // ConfigError
};

// Channels whose gamma oscillation is scaled for high-class trials.
const std::vector<std::string>& effect_channels();

// Trial `trial` (0-based) of subject `subject` (0-based). Subject and trial ids
// in the returned record are 1-based.
EegTrial generate_trial(const SynthSpec& spec, std::size_t subject, std::size_t trial);
std::vector<EegTrial> generate_dataset(const SynthSpec& spec);

// Writes one EEGT file per trial plus manifest.ini into `dir`.
DatasetManifest write_synthetic(const SynthSpec& spec, const std::filesystem::path& dir);

}  // namespace depl
