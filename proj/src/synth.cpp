#include "depl/synth.hpp"

#include "depl/error.hpp"
#include "depl/rng.hpp"
#include "depl/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

namespace depl {

namespace fs = std::filesystem;

namespace {

constexpr double kArCoefficient = 0.9;
constexpr std::size_t kTonesPerBand = 2;
// Oscillation amplitude per band (theta, alpha, beta, gamma), microvolts.
constexpr double kBandAmplitude[kNumBands] = {3.0, 4.0, 2.0, 1.5};
constexpr double kHighRating = 8.0;
constexpr double kLowRating = 2.0;

// Salts keep the per-subject and per-trial streams apart.
constexpr std::uint64_t kSubjectSalt = 0x5b3c1a9d;
constexpr std::uint64_t kTrialSalt = 0x71e4d2c7;
constexpr std::uint64_t kLabelSalt = 0x2f9a6e13;

struct SubjectTraits {
  std::vector<double> gain, offset;
  double band_scale[kNumBands];
};

SubjectTraits subject_traits(const SynthSpec& spec, std::size_t subject) {
  Rng rng(mix_seed(mix_seed(spec.seed, kSubjectSalt), subject));
  SubjectTraits t;
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    t.gain.push_back(rng.uniform(1.0 - spec.gain_jitter, 1.0 + spec.gain_jitter));
    t.offset.push_back(rng.normal(0.0, spec.offset_sd));
  }
  // Individual rhythm strengths, shared by baseline and task.
  for (double& s : t.band_scale) s = std::exp(rng.normal(0.0, 0.25));
  return t;
}

// Trials of a subject that are high class: a seeded half.
std::vector<bool> high_class_trials(const SynthSpec& spec, std::size_t subject) {
  std::vector<std::size_t> order(spec.trials);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(mix_seed(spec.seed, kLabelSalt), subject));
  rng.shuffle(std::span(order));
  std::vector<bool> high(spec.trials, false);
  for (std::size_t i = 0; i < spec.trials / 2; ++i) high[order[i]] = true;
  return high;
}

}  // namespace

void SynthSpec::validate() const {
  if (subjects < 1 || trials < 1) throw ConfigError("synth: subjects and trials must be >= 1");
  if (!(sample_rate_hz > 2.0 * band_edges(Band::Gamma).high_hz)) {
    throw ConfigError("synth: sample rate must exceed twice the gamma upper edge");
  }
  if (!(duration_s > 0.0) || !(baseline_s >= 0.0)) {
    throw ConfigError("synth: duration must be positive and baseline non-negative");
  }
  if (!(effect > 0.0)) throw ConfigError("synth: effect size must be positive");
  if (!(gain_jitter >= 0.0 && gain_jitter < 1.0)) throw ConfigError("synth: gain jitter must be in [0, 1)");
  if (!(offset_sd >= 0.0)) throw ConfigError("synth: offset sd must be >= 0");
}

const std::vector<std::string>& effect_channels() {
  static const std::vector<std::string> names = {"P7", "P3", "PZ", "P4", "P8",
                                                 "PO3", "PO4", "O1", "OZ", "O2"};
  return names;
}

EegTrial generate_trial(const SynthSpec& spec, std::size_t subject, std::size_t trial) {
  spec.validate();
  if (subject >= spec.subjects || trial >= spec.trials) {
    throw ArgumentError("synth: subject/trial index out of range");
  }
  const auto traits = subject_traits(spec, subject);
  const bool high = high_class_trials(spec, subject)[trial];
  const double fs = spec.sample_rate_hz;
  const auto base_len = static_cast<std::size_t>(std::lround(spec.baseline_s * fs));
  const auto total = base_len + static_cast<std::size_t>(std::lround(spec.duration_s * fs));

  EegTrial t;
  t.subject_id = static_cast<std::int32_t>(subject + 1);
  t.trial_id = static_cast<std::int32_t>(trial + 1);
  t.sample_rate_hz = fs;
  t.channel_names = canonical_channels();
  t.baseline_len_samples = base_len;
  t.ratings = {high ? kHighRating : kLowRating, high ? kHighRating : kLowRating};
  t.labels = derive_labels(t.ratings, kDefaultLabelThreshold);
  t.samples = Matrix(kNumChannels, total);

  Rng rng(mix_seed(mix_seed(mix_seed(spec.seed, kTrialSalt), subject), trial));

  // Task-state drift of each rhythm during the stimulus, unrelated to the class.
  double task_scale[kNumBands];
  for (double& s : task_scale) s = std::exp(rng.normal(0.0, 0.15));

  const auto& effect_names = effect_channels();
  const double stationary_sd = 1.0 / std::sqrt(1.0 - kArCoefficient * kArCoefficient);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    const bool effect_site = std::find(effect_names.begin(), effect_names.end(),
                                       t.channel_names[c]) != effect_names.end();
    auto row = t.samples.row(c);

    double x = rng.normal(0.0, stationary_sd);
    for (std::size_t n = 0; n < total; ++n) {
      x = kArCoefficient * x + rng.normal();
      row[n] = x;
    }

    for (Band b : kAllBands) {
      const auto [lo, hi] = band_edges(b);
      const auto bi = static_cast<std::size_t>(b);
      for (std::size_t k = 0; k < kTonesPerBand; ++k) {
        const double f = rng.uniform(lo + 0.5, hi - 0.5);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double amp = kBandAmplitude[bi] * traits.band_scale[bi] * rng.uniform(0.8, 1.2);
        double task_amp = amp * task_scale[bi];
        if (high && effect_site && b == Band::Gamma) task_amp *= spec.effect;
        const double w = 2.0 * std::numbers::pi * f / fs;
        for (std::size_t n = 0; n < total; ++n) {
          row[n] += (n < base_len ? amp : task_amp) * std::sin(w * static_cast<double>(n) + phase);
        }
      }
    }

    for (double& v : row) v = traits.gain[c] * v + traits.offset[c];
  }
  return t;
}

std::vector<EegTrial> generate_dataset(const SynthSpec& spec) {
  std::vector<EegTrial> out;
  for (std::size_t s = 0; s < spec.subjects; ++s) {
    for (std::size_t k = 0; k < spec.trials; ++k) out.push_back(generate_trial(spec, s, k));
  }
  return out;
}

DatasetManifest write_synthetic(const SynthSpec& spec, const fs::path& dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  DatasetManifest m;
  m.name = "synthetic";
  m.subjects = spec.subjects;
  m.trials_per_subject = spec.trials;
  m.sample_rate_hz = spec.sample_rate_hz;
  m.baseline_len_samples = static_cast<std::size_t>(std::lround(spec.baseline_s * spec.sample_rate_hz));
  m.label_threshold = kDefaultLabelThreshold;
  for (std::size_t s = 0; s < spec.subjects; ++s) {
    for (std::size_t k = 0; k < spec.trials; ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "s%02zu_t%02zu.eegt", s + 1, k + 1);
      export_trial(generate_trial(spec, s, k), dir / name);
      m.files.emplace_back(name);
    }
  }
  write_manifest(m, dir / kManifestName);
  return m;
}

}  // namespace depl
