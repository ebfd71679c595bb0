#include "depl/signal.hpp"

#include "depl/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

namespace depl {

namespace {

using cplx = std::complex<double>;

// Steady-state section states for a unit step, scaled later by the first
// input sample.
std::vector<std::array<double, 2>> step_initial_states(const FilterSpec& spec) {
  std::vector<std::array<double, 2>> zi(spec.sections.size());
  double level = 1.0;
  for (std::size_t k = 0; k < spec.sections.size(); ++k) {
    const auto& s = spec.sections[k];
    const double gain = (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[1] + s.a[2]);
    const double z2 = (s.b[2] - s.a[2] * gain) * level;
    const double z1 = (s.b[1] - s.a[1] * gain) * level + z2;
    zi[k] = {z1, z2};
    level *= gain;
  }
  return zi;
}

void run_cascade(const FilterSpec& spec, std::vector<double>& x,
                 std::vector<std::array<double, 2>> state) {
  for (std::size_t k = 0; k < spec.sections.size(); ++k) {
    const auto& s = spec.sections[k];
    double z1 = state[k][0];
    double z2 = state[k][1];
    for (double& v : x) {
      const double in = v;
      const double out = s.b[0] * in + z1;
      z1 = s.b[1] * in - s.a[1] * out + z2;
      z2 = s.b[2] * in - s.a[2] * out;
      v = out;
    }
  }
}

cplx section_response(const Biquad& s, double omega) {
  const cplx z1 = std::polar(1.0, -omega);
  const cplx z2 = z1 * z1;
  return (s.b[0] + s.b[1] * z1 + s.b[2] * z2) / (s.a[0] + s.a[1] * z1 + s.a[2] * z2);
}

}  // namespace

std::string_view band_name(Band band) {
  switch (band) {
    case Band::Theta: return "theta";
    case Band::Alpha: return "alpha";
    case Band::Beta: return "beta";
    case Band::Gamma: return "gamma";
  }
  return "unknown";
}

Band parse_band(std::string_view name) {
  for (Band b : kAllBands) {
    if (band_name(b) == name) return b;
  }
  throw ConfigError("unknown band '" + std::string(name) +
                    "' (expected theta, alpha, beta or gamma)");
}

BandEdges band_edges(Band band) {
  switch (band) {
    case Band::Theta: return {4.0, 7.0};
    case Band::Alpha: return {8.0, 13.0};
    case Band::Beta: return {14.0, 30.0};
    case Band::Gamma: return {31.0, 45.0};
  }
  throw ConfigError("unknown band");
}

Matrix Matrix::columns(std::size_t begin, std::size_t count) const {
  if (begin + count > cols_) throw ArgumentError("Matrix::columns: range exceeds matrix width");
  Matrix out(rows_, count);
  for (std::size_t r = 0; r < rows_; ++r) {
    const auto src = row(r).subspan(begin, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

FilterSpec design_bandpass(Band band, double sample_rate_hz, int order) {
  const auto edges = band_edges(band);
  return design_bandpass(band, edges.low_hz, edges.high_hz, sample_rate_hz, order);
}

FilterSpec design_bandpass(Band band, double low_hz, double high_hz, double sample_rate_hz,
                           int order) {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw ConfigError("design_bandpass: sample rate must be positive and finite");
  }
  if (order < 2 || order % 2 != 0) {
    throw ConfigError("design_bandpass: order must be even and >= 2, got " +
                      std::to_string(order));
  }
  const double nyquist = 0.5 * sample_rate_hz;
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist)) {
    throw ConfigError("design_bandpass: cutoffs must satisfy 0 < low < high < Nyquist (" +
                      std::to_string(nyquist) + " Hz) for band " +
                      std::string(band_name(band)));
  }

  const double fs2 = 2.0 * sample_rate_hz;
  const double w1 = fs2 * std::tan(std::numbers::pi * low_hz / sample_rate_hz);
  const double w2 = fs2 * std::tan(std::numbers::pi * high_hz / sample_rate_hz);
  const double bw = w2 - w1;
  const double w0_sq = w1 * w2;
  const int proto = order / 2;

  // Analog low-pass prototype -> analog band-pass -> bilinear transform.
  std::vector<cplx> poles;
  poles.reserve(static_cast<std::size_t>(order));
  for (int k = 1; k <= proto; ++k) {
    const double angle = std::numbers::pi * (2.0 * k + proto - 1) / (2.0 * proto);
    const cplx p = std::polar(1.0, angle);
    const cplx half = p * (bw / 2.0);
    const cplx root = std::sqrt(half * half - w0_sq);
    for (const cplx s : {half + root, half - root}) {
      poles.push_back((fs2 + s) / (fs2 - s));
    }
  }

  // Pair conjugates into sections; real poles (very wide bands) pair up
  // among themselves.
  constexpr double kImagEps = 1e-12;
  std::vector<std::array<double, 2>> denominators;
  std::vector<double> real_poles;
  for (const cplx z : poles) {
    if (z.imag() > kImagEps) {
      denominators.push_back({-2.0 * z.real(), std::norm(z)});
    } else if (std::abs(z.imag()) <= kImagEps) {
      real_poles.push_back(z.real());
    }
  }
  std::sort(real_poles.begin(), real_poles.end());
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
    denominators.push_back(
        {-(real_poles[i] + real_poles[i + 1]), real_poles[i] * real_poles[i + 1]});
  }

  FilterSpec spec;
  spec.band = band;
  spec.low_hz = low_hz;
  spec.high_hz = high_hz;
  spec.sample_rate_hz = sample_rate_hz;
  spec.order = order;

  // Every section gets one zero at z = 1 and one at z = -1 and unit gain at
  // the digital image of the analog center frequency.
  const double center = 2.0 * std::atan(std::sqrt(w0_sq) / fs2);
  for (const auto& den : denominators) {
    Biquad s;
    s.b = {1.0, 0.0, -1.0};
    s.a = {1.0, den[0], den[1]};
    const double g = 1.0 / std::abs(section_response(s, center));
    s.b = {g, 0.0, -g};
    spec.sections.push_back(s);
  }
  if (spec.sections.size() != static_cast<std::size_t>(proto) || !is_stable(spec)) {
    throw ConfigError("design_bandpass: could not realize a stable filter for band " +
                      std::string(band_name(band)));
  }
  return spec;
}

bool is_stable(const FilterSpec& spec) {
  for (const auto& s : spec.sections) {
    // Roots of z^2 + a1 z + a2.
    const cplx disc = std::sqrt(cplx(s.a[1] * s.a[1] - 4.0 * s.a[2], 0.0));
    const cplx r1 = (-s.a[1] + disc) / 2.0;
    const cplx r2 = (-s.a[1] - disc) / 2.0;
    if (!(std::abs(r1) < 1.0 && std::abs(r2) < 1.0)) return false;
  }
  return true;
}

double magnitude_response(const FilterSpec& spec, double f_hz) {
  const double omega = 2.0 * std::numbers::pi * f_hz / spec.sample_rate_hz;
  cplx h = 1.0;
  for (const auto& s : spec.sections) h *= section_response(s, omega);
  return std::abs(h);
}

std::vector<double> filter_causal(const FilterSpec& spec, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run_cascade(spec, y, std::vector<std::array<double, 2>>(spec.sections.size(), {0.0, 0.0}));
  return y;
}

std::vector<double> filter_signal(const FilterSpec& spec, std::span<const double> x) {
  if (x.empty()) throw ArgumentError("filter_signal: input is empty");
  const std::size_t n = x.size();
  const std::size_t pad = std::min<std::size_t>(3 * static_cast<std::size_t>(spec.order), n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = step_initial_states(spec);
  auto scaled = [&zi](double v) {
    auto out = zi;
    for (auto& st : out) {
      st[0] *= v;
      st[1] *= v;
    }
    return out;
  };

  run_cascade(spec, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_cascade(spec, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

FilterBank design_filter_bank(double sample_rate_hz, int order) {
  FilterBank bank;
  for (Band b : kAllBands) {
    bank[static_cast<std::size_t>(b)] = design_bandpass(b, sample_rate_hz, order);
  }
  return bank;
}

BandDecomposition BandDecomposition::columns(std::size_t begin, std::size_t count) const {
  BandDecomposition out;
  for (std::size_t b = 0; b < kNumBands; ++b) out.bands[b] = bands[b].columns(begin, count);
  return out;
}

BandDecomposition decompose_bands(const Matrix& samples, std::span<const FilterSpec> specs) {
  std::array<const FilterSpec*, kNumBands> by_band{};
  for (const auto& spec : specs) {
    auto& slot = by_band[static_cast<std::size_t>(spec.band)];
    if (slot != nullptr) {
      throw ConfigError("decompose_bands: duplicate filter for band " +
                        std::string(band_name(spec.band)));
    }
    slot = &spec;
  }
  for (Band b : kAllBands) {
    if (by_band[static_cast<std::size_t>(b)] == nullptr) {
      throw ConfigError("decompose_bands: missing filter for band " +
                        std::string(band_name(b)));
    }
  }

  BandDecomposition out;
  for (Band b : kAllBands) {
    const FilterSpec& spec = *by_band[static_cast<std::size_t>(b)];
    Matrix& dst = out[b];
    dst = Matrix(samples.rows(), samples.cols());
    if (samples.cols() == 0) continue;
    for (std::size_t ch = 0; ch < samples.rows(); ++ch) {
      const auto y = filter_signal(spec, samples.row(ch));
      std::copy(y.begin(), y.end(), dst.row(ch).begin());
    }
  }
  return out;
}

std::vector<std::span<const double>> segment_windows(std::span<const double> x,
                                                     std::size_t window_len, std::size_t hop) {
  if (window_len == 0) throw ArgumentError("segment_windows: window_len must be >= 1");
  if (hop == 0) throw ArgumentError("segment_windows: hop must be >= 1");
  if (window_len > x.size()) {
    throw ArgumentError("segment_windows: window_len " + std::to_string(window_len) +
                        " exceeds signal length " + std::to_string(x.size()));
  }
  const std::size_t count = (x.size() - window_len) / hop + 1;
  std::vector<std::span<const double>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(x.subspan(i * hop, window_len));
  return out;
}

double ks_normality(std::span<const double> x) {
  if (x.size() < 8) throw ArgumentError("ks_normality: need at least 8 samples");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0.0)) throw DegenerateInputError("ks_normality: input has zero variance");
  const double sd = std::sqrt(var);

  std::vector<double> z(x.size());
  std::transform(x.begin(), x.end(), z.begin(), [&](double v) { return (v - mean) / sd; });
  std::sort(z.begin(), z.end());

  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-z[i] / std::numbers::sqrt2);
    const double above = static_cast<double>(i + 1) / n - cdf;
    const double below = cdf - static_cast<double>(i) / n;
    d = std::max({d, above, below});
  }
  return d;
}

}  // namespace depl
