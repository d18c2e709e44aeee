#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mvh/error.hpp"
#include "mvh/probe.hpp"

using namespace mvh;
using namespace mvh::probe;
using spectral::EigenInit;
using spectral::InitScheme;

namespace {

FrequencyTarget raw_target(std::vector<double> values, double dt = 0.01) {
  FrequencyTarget t;
  t.band = {0.0, 1.0};
  t.seq_len = static_cast<int>(values.size());
  t.dt = dt;
  t.values = std::move(values);
  return t;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::InvalidInput;
}

}  // namespace

TEST_CASE("feature matrix follows the per-pole recurrence") {
  const std::vector<double> eigs{-1.0, -3.0};
  const Mat f = feature_matrix(eigs, 400, 0.01);
  for (int j = 0; j < 2; ++j) {
    const double lam = -eigs[j];
    // Closed form of a unit step through ZOH: (1 - exp(-lam dt (k+1))) / lam.
    for (int k : {0, 1, 10, 399}) CHECK(f(k, j) == doctest::Approx((1 - std::exp(-lam * 0.01 * (k + 1))) / lam).epsilon(1e-12));
  }
  CHECK_THROWS_AS(feature_matrix(std::vector<double>{0.5}, 10, 0.01), Error);
}

TEST_CASE("realizable targets are recovered exactly") {
  Rng rng(1);
  for (int N : {2, 3}) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> eigs;
      for (int j = 0; j < N; ++j) eigs.push_back(-(j + 1) * rng.uniform(0.8, 1.2));
      Eigen::VectorXd c(N);
      for (int j = 0; j < N; ++j) c(j) = rng.normal();
      const Mat f = feature_matrix(eigs, 512, 0.01);
      const Eigen::VectorXd y = f * c;
      const auto fit = fit_residues(eigs, raw_target({y.data(), y.data() + y.size()}), 0.0);
      for (int j = 0; j < N; ++j) CHECK(std::abs(fit.residues[j] - c(j)) < 1e-8);
      CHECK(fit.rmse < 1e-8);
    }
  }
}

TEST_CASE("a single pole passes DC: error shrinks with sequence length") {
  const std::vector<double> eigs{-1.0};
  double prev = INFINITY;
  for (int len : {64, 256, 1024, 4096, 16384}) {
    const double rmse = fit_residues(eigs, raw_target(std::vector<double>(len, 0.7)), 0.0).rmse;
    CHECK(rmse < prev);
    prev = rmse;
  }
  CHECK(prev < 0.06);
}

TEST_CASE("cascaded N=8: high band fits worse than low band on >= 95 of 100 seeds") {
  const EigenInit init{InitScheme::Cascaded, 8};
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) wins += low_high_contrast(init, seed).ratio > 1.0;
  CHECK(wins >= 95);
}

TEST_CASE("median asymmetry holds for every negative-real init") {
  for (InitScheme scheme : {InitScheme::Cascaded, InitScheme::Uniform})
    for (int N : {1, 2, 4, 8}) {
      std::vector<double> ratios;
      for (std::uint64_t seed = 0; seed < 100; ++seed) ratios.push_back(low_high_contrast({scheme, N}, seed).ratio);
      std::nth_element(ratios.begin(), ratios.begin() + 50, ratios.end());
      INFO(spectral::to_string(scheme) << " N=" << N);
      CHECK(ratios[50] >= 1.0);
    }
}

TEST_CASE("rmse is non-increasing for nested eigenvalue sets") {
  const ProbeSettings s;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto target = make_target(Band{0.0, 6.0}, s, seed);
    double prev = INFINITY;
    for (int N = 1; N <= 6; ++N) {
      const double rmse = fit_residues(init_eigs({InitScheme::Cascaded, N}), target, 0.0).rmse;
      CHECK(rmse <= prev + 1e-12);
      prev = rmse;
    }
  }
}

TEST_CASE("uniform init is rank-deficient without ridge") {
  const auto target = make_target(Band{0.0, 1.0}, ProbeSettings{}, 3);
  CHECK(kind_of([&] { fit_residues(init_eigs({InitScheme::Uniform, 4}), target, 0.0); }) == ErrorKind::SingularSystem);
  CHECK_NOTHROW(fit_residues(init_eigs({InitScheme::Uniform, 4}), target, 1e-8));
}

TEST_CASE("targets") {
  const ProbeSettings s;
  SUBCASE("unit RMS and reproducible per (band, seed)") {
    const auto a = make_target(Band{1.0, 2.0}, s, 5), b = make_target(Band{1.0, 2.0}, s, 5);
    CHECK(a.values == b.values);
    double p = 0.0;
    for (double v : a.values) p += v * v;
    CHECK(std::sqrt(p / a.values.size()) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(make_target(Band{1.0, 2.0}, s, 6).values != a.values);
  }
  SUBCASE("Nyquist and band validity") {
    CHECK(kind_of([&] { make_target(Band{0.0, 400.0}, s, 1); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { make_target(Band{2.0, 1.0}, s, 1); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { make_target(Band{-1.0, 1.0}, s, 1); }) == ErrorKind::InvalidArgument);
  }
  SUBCASE("bands derived from an init") {
    const EigenInit init{InitScheme::Cascaded, 8};
    CHECK(low_band(init).hi == 0.5);
    CHECK(high_band(init).lo == 32.0);
    CHECK(high_band(init).hi == 64.0);
  }
}

TEST_CASE("bias_sweep") {
  const std::vector<EigenInit> inits{{InitScheme::Cascaded, 8}};
  SUBCASE("empty bands give no results") { CHECK(bias_sweep(inits, {}, 3).empty()); }
  SUBCASE("degenerate sweep echoes fit_residues") {
    const Band band{0.0, 4.0};
    const auto r = bias_sweep(inits, {band}, 1, {}, 17);
    REQUIRE(r.size() == 1);
    CHECK(r[0].seed == 17);
    CHECK(r[0].rmse == fit_residues(init_eigs(inits[0]), make_target(band, {}, 17), 1e-8).rmse);
  }
  SUBCASE("seeds must be positive") { CHECK_THROWS_AS(bias_sweep(inits, {Band{0, 1}}, 0), Error); }
  SUBCASE("cascaded beats uniform on [0, N] for >= 90 of 100 seeds") {
    const auto r = bias_sweep({{InitScheme::Cascaded, 8}, {InitScheme::Uniform, 8}}, {Band{0.0, 8.0}}, 100);
    REQUIRE(r.size() == 200);
    int wins = 0;
    for (int s = 0; s < 100; ++s) wins += r[s].rmse < r[100 + s].rmse;
    CHECK(wins >= 90);
    const auto cells = summarize(r);
    REQUIRE(cells.size() == 2);
    CHECK(cells[0].count == 100);
    CHECK(cells[0].mean < cells[1].mean);
  }
  SUBCASE("csv layout") {
    const auto csv = to_csv(bias_sweep(inits, {Band{0.0, 4.0}}, 2));
    CHECK(csv.rfind("init,N,band_lo,band_hi,seed,rmse\ncascaded,8,0,4,0,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  }
}
