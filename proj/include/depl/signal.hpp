#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace depl {

// The four classical EEG rhythms, in canonical feature order.
enum class Band { Theta = 0, Alpha = 1, Beta = 2, Gamma = 3 };

inline constexpr std::size_t kNumBands = 4;
inline constexpr std::array<Band, kNumBands> kAllBands = {Band::Theta, Band::Alpha, Band::Beta,
                                                         Band::Gamma};

std::string_view band_name(Band band);
Band parse_band(std::string_view name);  // throws ConfigError on unknown names

struct BandEdges {
  double low_hz;
  double high_hz;
};

// theta (4, 7), alpha (8, 13), beta (14, 30), gamma (31, 45)
BandEdges band_edges(Band band);

// Dense row-major matrix. Rows are channels, columns are samples.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  // Copy of columns [begin, begin + count).
  Matrix columns(std::size_t begin, std::size_t count) const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// One biquad in transposed direct form II, a0 normalized to 1.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 3> a{1.0, 0.0, 0.0};
};

// Butterworth band-pass realized as a cascade of second-order sections.
// `order` is the order of the band-pass filter itself (two poles per section).
struct FilterSpec {
  Band band = Band::Theta;
  double low_hz = 0.0;
  double high_hz = 0.0;
  double sample_rate_hz = 0.0;
  int order = 0;
  std::vector<Biquad> sections;
};

FilterSpec design_bandpass(Band band, double sample_rate_hz, int order);
FilterSpec design_bandpass(Band band, double low_hz, double high_hz, double sample_rate_hz,
                           int order);

// True when every section's poles lie strictly inside the unit circle.
bool is_stable(const FilterSpec& spec);

// Complex frequency response magnitude of the cascade (single pass) at f_hz.
double magnitude_response(const FilterSpec& spec, double f_hz);

// Single causal pass through the cascade, zero initial state.
std::vector<double> filter_causal(const FilterSpec& spec, std::span<const double> x);

// Zero-phase forward-backward filtering. The input is extended at both ends by
// odd reflection of 3 * order samples (capped at len - 1) and the sections
// start from their steady-state response to the first extended sample.
std::vector<double> filter_signal(const FilterSpec& spec, std::span<const double> x);

// Filter specs for all four bands, indexed by Band.
using FilterBank = std::array<FilterSpec, kNumBands>;

FilterBank design_filter_bank(double sample_rate_hz, int order);

// One filtered copy of the channel matrix per band, indexed by Band.
struct BandDecomposition {
  std::array<Matrix, kNumBands> bands;

  const Matrix& operator[](Band b) const { return bands[static_cast<std::size_t>(b)]; }
  Matrix& operator[](Band b) { return bands[static_cast<std::size_t>(b)]; }

  // Same decomposition restricted to columns [begin, begin + count).
  BandDecomposition columns(std::size_t begin, std::size_t count) const;
};

// Filters every channel independently in every band. `specs[i]` must be the
// filter for band i.
BandDecomposition decompose_bands(const Matrix& samples, std::span<const FilterSpec> specs);

// Views into `x`; window i covers [i * hop, i * hop + window_len).
std::vector<std::span<const double>> segment_windows(std::span<const double> x,
                                                     std::size_t window_len, std::size_t hop);

// Kolmogorov-Smirnov distance between the empirical CDF of the standardized
// sample and the standard normal CDF.
double ks_normality(std::span<const double> x);

}  // namespace depl
