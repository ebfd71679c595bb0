#pragma once

#include "depl/rng.hpp"
#include "depl/trial.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <unistd.h>

namespace fixture {

// White-noise trial in canonical channel order.
inline depl::EegTrial noise_trial(std::size_t samples, std::size_t baseline, std::uint64_t seed,
                                  double valence = 8.0, double arousal = 2.0) {
  depl::EegTrial t;
  t.subject_id = 3;
  t.trial_id = 5;
  t.channel_names = depl::canonical_channels();
  t.samples = depl::Matrix(t.channel_names.size(), samples);
  t.baseline_len_samples = baseline;
  t.ratings = {valence, arousal};
  t.labels = depl::derive_labels(t.ratings, depl::kDefaultLabelThreshold);
  depl::Rng rng(seed);
  for (double& v : t.samples.data()) v = rng.normal();
  return t;
}

inline void add_sine(depl::EegTrial& t, std::size_t channel, double f_hz, double amp,
                     std::size_t from = 0) {
  auto row = t.samples.row(channel);
  for (std::size_t i = from; i < row.size(); ++i) {
    row[i] += amp * std::sin(2.0 * std::numbers::pi * f_hz * static_cast<double>(i) / t.sample_rate_hz);
  }
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("depl-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& child = "") const {
    return child.empty() ? path_.string() : (path_ / child).string();
  }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
