#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include "depl/error.hpp"
#include "depl/rng.hpp"
#include "depl/signal.hpp"

#include <cmath>
#include <complex>

using namespace depl;

namespace {

constexpr double kFs = 128.0;
constexpr std::size_t kN = 4096;  // 1/32 Hz bins at 128 Hz

double db(double amplitude) { return 20.0 * std::log10(amplitude); }

double filtered_gain(const FilterSpec& spec, double f) {
  const auto y = filter_signal(spec, oracle::sine(kN, f, kFs));
  return oracle::amplitude_at(y, f, kFs);
}

std::vector<double> random_signal(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                  double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = rng.uniform(lo, hi);
  return x;
}

}  // namespace

TEST_SUITE("design_bandpass") {
  TEST_CASE("gamma passes 38 Hz") {
    const auto g = filtered_gain(design_bandpass(Band::Gamma, kFs, 4), 38.0);
    CHECK(g >= 0.90);
    CHECK(g <= 1.01);
  }

  TEST_CASE("gamma rejects 5 Hz by at least 30 dB") {
    CHECK(db(filtered_gain(design_bandpass(Band::Gamma, kFs, 4), 5.0)) <= -30.0);
  }

  TEST_CASE("theta of the zero signal is zero") {
    const auto y = filter_signal(design_bandpass(Band::Theta, kFs, 4), std::vector<double>(300, 0.0));
    for (double v : y) REQUIRE(v == 0.0);
  }

  TEST_CASE("cutoffs follow the band table") {
    const double want[4][2] = {{4, 7}, {8, 13}, {14, 30}, {31, 45}};
    for (Band b : kAllBands) {
      const auto s = design_bandpass(b, kFs, 4);
      CHECK(s.low_hz == want[static_cast<int>(b)][0]);
      CHECK(s.high_hz == want[static_cast<int>(b)][1]);
      CHECK(s.sections.size() == 2);
    }
  }

  TEST_CASE("every section is stable for a range of orders") {
    for (int order : {2, 4, 6, 8}) {
      for (Band b : kAllBands) {
        const auto s = design_bandpass(b, kFs, order);
        CHECK(is_stable(s));
        CHECK(s.sections.size() == static_cast<std::size_t>(order / 2));
        for (const auto& q : s.sections) {
          // Roots of z^2 + a1 z + a2.
          const std::complex<double> disc = std::sqrt(std::complex<double>(q.a[1] * q.a[1] - 4 * q.a[2]));
          CHECK(std::abs((-q.a[1] + disc) / 2.0) < 1.0);
          CHECK(std::abs((-q.a[1] - disc) / 2.0) < 1.0);
        }
      }
    }
  }

  TEST_CASE("passband is maximally flat: response peaks near 1 and never exceeds it") {
    for (Band b : kAllBands) {
      const auto s = design_bandpass(b, kFs, 4);
      double peak = 0.0;
      for (double f = 0.25; f < kFs / 2; f += 0.25) peak = std::max(peak, magnitude_response(s, f));
      CHECK(peak == doctest::Approx(1.0).epsilon(1e-3));
      CHECK(peak <= 1.0 + 1e-9);
    }
  }

  TEST_CASE("invalid settings are configuration errors") {
    CHECK_THROWS_AS(design_bandpass(Band::Gamma, kFs, 3), ConfigError);
    CHECK_THROWS_AS(design_bandpass(Band::Gamma, kFs, 0), ConfigError);
    CHECK_THROWS_AS(design_bandpass(Band::Gamma, 64.0, 4), ConfigError);  // 45 Hz above Nyquist
    CHECK_THROWS_AS(design_bandpass(Band::Alpha, 13.0, 8.0, kFs, 4), ConfigError);
    CHECK_THROWS_AS(design_bandpass(Band::Alpha, 0.0, 8.0, kFs, 4), ConfigError);
  }
}

TEST_SUITE("filter_signal") {
  const auto gamma = design_bandpass(Band::Gamma, kFs, 4);

  TEST_CASE("zeros in, zeros out") {
    const auto y = filter_signal(gamma, std::vector<double>(512, 0.0));
    CHECK(y.size() == 512);
    for (double v : y) REQUIRE(v == 0.0);
  }

  TEST_CASE("homogeneous in the input scale") {
    const auto x = random_signal(700, 11);
    std::vector<double> ax(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) ax[i] = -3.7 * x[i];
    const auto y = filter_signal(gamma, x);
    const auto ay = filter_signal(gamma, ax);
    for (std::size_t i = 0; i < y.size(); ++i) {
      REQUIRE(std::abs(ay[i] - -3.7 * y[i]) <= 1e-9 * std::max(1.0, std::abs(ay[i])));
    }
  }

  TEST_CASE("gamma keeps the 38 Hz part of a 5 + 38 Hz mixture") {
    const auto a = oracle::sine(kN, 5.0, kFs);
    const auto b = oracle::sine(kN, 38.0, kFs);
    std::vector<double> x(kN);
    for (std::size_t i = 0; i < kN; ++i) x[i] = a[i] + b[i];
    CHECK(oracle::correlation(filter_signal(gamma, x), b) > 0.95);
  }

  TEST_CASE("output length equals input length, including short inputs") {
    for (std::size_t n : {1u, 2u, 5u, 13u, 128u}) {
      CHECK(filter_signal(gamma, random_signal(n, n)).size() == n);
    }
  }

  TEST_CASE("empty input is an argument error") {
    CHECK_THROWS_AS(filter_signal(gamma, std::vector<double>{}), ArgumentError);
  }

  TEST_CASE("bounded input gives bounded output in every band") {
    for (Band b : kAllBands) {
      const auto y = filter_signal(design_bandpass(b, kFs, 4), random_signal(10000, 100 + static_cast<int>(b)));
      double peak = 0.0;
      for (double v : y) peak = std::max(peak, std::abs(v));
      CHECK(std::isfinite(peak));
      CHECK(peak < 1e3);
    }
  }

  TEST_CASE("zero phase: the cross-correlation peak sits at lag 0") {
    for (Band b : kAllBands) {
      const auto s = design_bandpass(b, kFs, 4);
      const double f = 0.5 * (s.low_hz + s.high_hz);
      const auto x = oracle::sine(2048, f, kFs, 1.0, 0.3);
      const auto y = filter_signal(s, x);
      int best_lag = 0;
      double best = -1e300;
      for (int lag = -20; lag <= 20; ++lag) {
        double c = 0.0;
        for (int i = 200; i < 1800; ++i) c += x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i + lag)];
        if (c > best) {
          best = c;
          best_lag = lag;
        }
      }
      CHECK(std::abs(best_lag) <= 1);
    }
  }

  TEST_CASE("off-centre, a causal pass shifts phase and forward-backward does not") {
    const auto x = oracle::sine(2048, 33.0, kFs);
    const auto causal = filter_causal(gamma, x);
    const auto zp = filter_signal(gamma, x);
    CHECK(oracle::correlation(std::span(zp).subspan(256, 1024), std::span(x).subspan(256, 1024)) > 0.999);
    CHECK(oracle::correlation(std::span(causal).subspan(256, 1024), std::span(x).subspan(256, 1024)) < 0.9);
  }
}

TEST_SUITE("decompose_bands") {
  const auto bank = design_filter_bank(kFs, 4);

  TEST_CASE("zero trial decomposes into four zero matrices") {
    const auto d = decompose_bands(Matrix(4, 256), bank);
    for (Band b : kAllBands) {
      CHECK(d[b].rows() == 4);
      CHECK(d[b].cols() == 256);
      for (double v : d[b].data()) REQUIRE(v == 0.0);
    }
  }

  TEST_CASE("a 32 x 8064 trial keeps its shape in every band") {
    Matrix m(32, 8064);
    Rng rng(3);
    for (double& v : m.data()) v = rng.normal();
    const auto d = decompose_bands(m, bank);
    for (Band b : kAllBands) {
      CHECK(d[b].rows() == 32);
      CHECK(d[b].cols() == 8064);
    }
  }

  TEST_CASE("a 38 Hz channel lands in gamma") {
    Matrix m(1, kN);
    const auto s = oracle::sine(kN, 38.0, kFs);
    std::copy(s.begin(), s.end(), m.row(0).begin());
    const auto d = decompose_bands(m, bank);
    double total = 0.0;
    for (Band b : kAllBands) {
      const auto amp = oracle::amplitude_spectrum(d[b].row(0));
      total += oracle::energy(amp);
    }
    const double g = oracle::energy(oracle::amplitude_spectrum(d[Band::Gamma].row(0)));
    CHECK(g / total >= 0.95);
  }

  TEST_CASE("channels are filtered independently") {
    Matrix a(2, 600), b(2, 600);
    Rng rng(8);
    for (std::size_t i = 0; i < 600; ++i) {
      a(0, i) = b(0, i) = rng.normal();
      a(1, i) = rng.normal();
      b(1, i) = 50.0 * rng.normal();
    }
    const auto da = decompose_bands(a, bank);
    const auto db_ = decompose_bands(b, bank);
    for (Band band : kAllBands) {
      for (std::size_t i = 0; i < 600; ++i) REQUIRE(da[band](0, i) == db_[band](0, i));
    }
  }

  TEST_CASE("missing or repeated bands are configuration errors") {
    const std::vector<FilterSpec> three(bank.begin(), bank.begin() + 3);
    CHECK_THROWS_AS(decompose_bands(Matrix(1, 64), three), ConfigError);
    std::vector<FilterSpec> dup(bank.begin(), bank.end());
    dup[3] = dup[2];
    CHECK_THROWS_AS(decompose_bands(Matrix(1, 64), dup), ConfigError);
  }
}

TEST_SUITE("segment_windows") {
  TEST_CASE("window counts") {
    CHECK(segment_windows(std::vector<double>(384), 128, 128).size() == 3);
    CHECK(segment_windows(std::vector<double>(7680), 128, 128).size() == 60);
    CHECK(segment_windows(std::vector<double>(300), 128, 64).size() == 3);
  }

  TEST_CASE("a single full window equals the input") {
    const auto x = random_signal(128, 4);
    const auto w = segment_windows(x, 128, 128);
    REQUIRE(w.size() == 1);
    CHECK(std::equal(w[0].begin(), w[0].end(), x.begin(), x.end()));
  }

  TEST_CASE("non-overlapping windows tile the covered prefix exactly") {
    for (std::size_t n : {128u, 129u, 500u, 1000u}) {
      std::vector<double> x(n);
      for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
      const auto w = segment_windows(x, 128, 128);
      std::vector<double> joined;
      for (auto s : w) joined.insert(joined.end(), s.begin(), s.end());
      REQUIRE(joined.size() == n / 128 * 128);
      for (std::size_t i = 0; i < joined.size(); ++i) REQUIRE(joined[i] == static_cast<double>(i));
    }
  }

  TEST_CASE("bad arguments") {
    CHECK_THROWS_AS(segment_windows(std::vector<double>(100), 128, 128), ArgumentError);
    CHECK_THROWS_AS(segment_windows(std::vector<double>(100), 10, 0), ArgumentError);
  }
}

TEST_SUITE("ks_normality") {
  TEST_CASE("normal draws are close to normal for 20 seeds") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed);
      std::vector<double> x(1000);
      for (double& v : x) v = rng.normal();
      CHECK(ks_normality(x) < 0.05);
    }
  }

  TEST_CASE("uniform draws are further from normal than normal draws") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed);
      std::vector<double> n(1000), u(1000);
      for (double& v : n) v = rng.normal();
      for (double& v : u) v = rng.uniform(-1.0, 1.0);
      CHECK(ks_normality(u) > ks_normality(n));
    }
  }

  TEST_CASE("statistic lies in [0, 1]") {
    const auto x = random_signal(50, 9);
    const double d = ks_normality(x);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }

  TEST_CASE("invariant under positive affine maps") {
    const auto x = random_signal(400, 12);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = 7.5 * x[i] - 3.0;
    CHECK(std::abs(ks_normality(x) - ks_normality(y)) <= 1e-12);
  }

  TEST_CASE("degenerate and short inputs") {
    CHECK_THROWS_AS(ks_normality(std::vector<double>(20, 1.5)), DegenerateInputError);
    CHECK_THROWS_AS(ks_normality(std::vector<double>(7, 1.0)), ArgumentError);
  }
}
