#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "mvh/error.hpp"
#include "mvh/rng.hpp"
#include "mvh/scan.hpp"
#include "mvh/selective.hpp"

using namespace mvh;
using namespace mvh::ssm;
using namespace fixtures;

TEST_CASE("discretize_zoh") {
  auto z = discretize_zoh(-1.0, 1.0, std::log(2.0));
  CHECK(z.a_bar == doctest::Approx(0.5));
  CHECK(z.b_bar == doctest::Approx(0.5));

  z = discretize_zoh(-1.0, 1.0, 1e-9);
  CHECK(z.a_bar == doctest::Approx(1.0));
  CHECK(z.b_bar == doctest::Approx(1e-9).epsilon(1e-6));

  // Scalar ODE x' = -2x + 3 from x(0)=0 held for one unit: x(1) = 3 (1 - e^-2) / 2.
  z = discretize_zoh(-2.0, 3.0, 1.0);
  CHECK(z.a_bar == doctest::Approx(std::exp(-2.0)));
  CHECK(z.b_bar == doctest::Approx(1.5 * (1.0 - std::exp(-2.0))));
  CHECK(z.b_bar == doctest::Approx(1.29700).epsilon(1e-5));

  CHECK_THROWS_AS(discretize_zoh(0.0, 1.0, 1.0), Error);
  CHECK_THROWS_AS(discretize_zoh(0.5, 1.0, 1.0), Error);
  CHECK_THROWS_AS(discretize_zoh(-1.0, 1.0, 0.0), Error);
}

TEST_CASE("scan_sequential") {
  const std::vector<double> u{5, 7};
  CHECK(scan_sequential({0.0, 1.0, 1.0, 0.0}, u) == std::vector<double>{5, 7});
  const std::vector<double> ones{1, 1, 1};
  const auto y = scan_sequential({0.5, 1.0, 1.0, 0.0}, ones);
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] == doctest::Approx(1.5));
  CHECK(y[2] == doctest::Approx(1.75));
  const std::vector<double> u2{3, 4};
  CHECK(scan_sequential({0.3, 1.0, 0.0, 2.0}, u2) == std::vector<double>{6, 8});
  CHECK_THROWS_AS(DiscreteSSM(1.0, 1.0, 1.0, 0.0), Error);
}

TEST_CASE("scan_parallel matches the serial reference") {
  Rng rng(7);
  for (int draw = 0; draw < 100; ++draw) {
    const auto ssm = random_ssm(rng);
    for (std::size_t len : {1u, 2u, 17u, 1024u}) {
      const auto u = random_seq(rng, len);
      const auto ref = scan_sequential(ssm, u);
      for (std::size_t chunk : {std::size_t{1}, std::size_t{7}, std::size_t{64}, len}) {
        CHECK(max_rel_dev(ref, scan_parallel(ssm, u, chunk)) < 1e-6);
      }
    }
  }
  SUBCASE("single chunk is bitwise equal") {
    const auto ssm = random_ssm(rng);
    const auto u = random_seq(rng, 300);
    CHECK(scan_parallel(ssm, u, u.size()) == scan_sequential(ssm, u));
  }
  SUBCASE("single element") {
    DiscreteSSM s(0.4, 2.0, 3.0, 0.5);
    const std::vector<double> u{1.5};
    CHECK(scan_parallel(s, u, 4)[0] == doctest::Approx(3.0 * 2.0 * 1.5 + 0.5 * 1.5));
  }
  SUBCASE("chunking is deterministic") {
    const auto ssm = random_ssm(rng);
    const auto u = random_seq(rng, 1024);
    CHECK(scan_parallel(ssm, u, 7) == scan_parallel(ssm, u, 7));
  }
  CHECK_THROWS_AS(scan_parallel(random_ssm(rng), std::vector<double>{1.0}, 0), Error);
}

TEST_CASE("scan stability and linearity") {
  Rng rng(99);
  for (int draw = 0; draw < 50; ++draw) {
    DiscreteSSM s(rng.uniform(0.0, 0.99), rng.uniform(0.1, 2.0), 1.0, 0.0);
    const double bound_m = 2.0;
    std::vector<double> u(500);
    for (auto& v : u) v = rng.uniform(-bound_m, bound_m);
    const auto x = scan_sequential(s, u);  // c = 1, d = 0 exposes the state
    const double bound = bound_m * s.b_bar / (1.0 - s.a_bar);
    for (double v : x) CHECK(std::abs(v) <= bound * (1 + 1e-12));

    const auto ssm = random_ssm(rng);
    const auto a = random_seq(rng, 64), b = random_seq(rng, 64);
    const double alpha = rng.normal(), beta = rng.normal();
    std::vector<double> mix(64);
    for (int i = 0; i < 64; ++i) mix[i] = alpha * a[i] + beta * b[i];
    const auto ya = scan_sequential(ssm, a), yb = scan_sequential(ssm, b), ym = scan_sequential(ssm, mix);
    for (int i = 0; i < 64; ++i) CHECK(std::abs(ym[i] - (alpha * ya[i] + beta * yb[i])) < 1e-9);
  }
}

TEST_CASE("scan_bidirectional") {
  Rng rng(3);
  SUBCASE("reversal equivariance with shared parameters") {
    const auto s = random_ssm(rng);
    const auto u = random_seq(rng, 33);
    auto y = scan_bidirectional(s, s, u);
    std::vector<double> ur(u.rbegin(), u.rend());
    const auto yr = scan_bidirectional(s, s, ur);
    std::reverse(y.begin(), y.end());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - yr[i]) < 1e-10);
  }
  SUBCASE("memoryless directions count the diagonal once") {
    DiscreteSSM f(0.0, 1.5, 2.0, 0.25), b(0.0, 0.7, 3.0, 0.9);
    const std::vector<double> u{1.0, -2.0, 0.5};
    const auto y = scan_bidirectional(f, b, u);
    for (std::size_t i = 0; i < u.size(); ++i) CHECK(y[i] == doctest::Approx((2.0 * 1.5 + 0.25) * u[i]));
  }
  SUBCASE("dense quasiseparable oracle") {
    for (int draw = 0; draw < 20; ++draw) {
      const auto f = random_ssm(rng), b = random_ssm(rng);
      const auto u = random_seq(rng, 40);
      const auto y = scan_bidirectional(f, b, u);
      const auto ref = dense_bidirectional(f, b, u);
      for (std::size_t i = 0; i < u.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-8);
    }
  }
}

TEST_CASE("realize_eigenvalues") {
  ALogParam p{Mat::Zero(2, 3)};
  CHECK((realize_eigenvalues(p).array() == -1.0).all());

  ALogParam cascade{Mat(1, 4)};
  for (int j = 0; j < 4; ++j) cascade.a_log(0, j) = std::log(j + 1.0);
  const Mat a = realize_eigenvalues(cascade);
  for (int j = 0; j < 4; ++j) CHECK(a(0, j) == doctest::Approx(-(j + 1.0)));

  const double x = 0.3, h = 1e-5;
  const double fd = (-std::exp(x + h) - -std::exp(x - h)) / (2 * h);
  CHECK(fd == doctest::Approx(-std::exp(x)).epsilon(1e-6));
  ALogParam single{Mat::Constant(1, 1, x)};
  CHECK(realize_eigenvalues_backward(single, Mat::Ones(1, 1))(0, 0) == doctest::Approx(fd).epsilon(1e-6));

  Rng rng(5);
  ALogParam wild{Mat(8, 8)};
  for (int i = 0; i < 64; ++i) wild.a_log.data()[i] = rng.normal(0.0, 20.0);
  CHECK((realize_eigenvalues(wild).array() < 0.0).all());
}

TEST_CASE("scan_backward") {
  Rng rng(17);
  SUBCASE("zero cotangent") {
    const auto s = random_ssm(rng);
    const auto u = random_seq(rng, 10);
    const auto g = scan_backward(s, u, std::vector<double>(10, 0.0));
    CHECK(g.a_bar == 0.0);
    CHECK(g.b_bar == 0.0);
    CHECK(g.c == 0.0);
    CHECK(g.d == 0.0);
    for (double v : g.u) CHECK(v == 0.0);
  }
  SUBCASE("single token") {
    DiscreteSSM s(0.3, 1.7, 0.9, 0.2);
    const auto g = scan_backward(s, std::vector<double>{2.5}, std::vector<double>{1.3});
    CHECK(g.c == doctest::Approx(1.3 * 1.7 * 2.5));
  }
  SUBCASE("finite differences") {
    for (int draw = 0; draw < 10; ++draw) {
      const auto s = random_ssm(rng);
      const auto u = random_seq(rng, 32), dy = random_seq(rng, 32);
      auto loss = [&](const DiscreteSSM& m, const std::vector<double>& x) {
        const auto y = scan_sequential(m, x);
        double l = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) l += dy[i] * y[i];
        return l;
      };
      const auto g = scan_backward(s, u, dy);
      const double h = 1e-5;
      auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4}); };
      auto perturbed = [&](double DiscreteSSM::*field) {
        DiscreteSSM p = s, m = s;
        p.*field += h;
        m.*field -= h;
        return (loss(p, u) - loss(m, u)) / (2 * h);
      };
      CHECK(rel(perturbed(&DiscreteSSM::a_bar), g.a_bar) < 1e-4);
      CHECK(rel(perturbed(&DiscreteSSM::b_bar), g.b_bar) < 1e-4);
      CHECK(rel(perturbed(&DiscreteSSM::c), g.c) < 1e-4);
      CHECK(rel(perturbed(&DiscreteSSM::d), g.d) < 1e-4);
      for (std::size_t i = 0; i < u.size(); ++i) {
        auto up = u, um = u;
        up[i] += h;
        um[i] -= h;
        CHECK(rel((loss(s, up) - loss(s, um)) / (2 * h), g.u[i]) < 1e-4);
      }
    }
  }
  CHECK_THROWS_AS(scan_backward(random_ssm(rng), std::vector<double>(3), std::vector<double>(2)), Error);
}

TEST_CASE("scan_selective") {
  Rng rng(23);
  SUBCASE("constant parameters reduce to the LTI scan") {
    const int T = 12;
    const double a = -0.7, dt = 0.4, b = 1.3, c = -0.6, d = 0.25;
    SelectiveParams p{Mat::Constant(T, 1, dt), Mat::Constant(T, 1, b), Mat::Constant(T, 1, c)};
    ALogParam al{Mat::Constant(1, 1, std::log(0.7))};
    const Mat u = random_mat(rng, T, 1);
    const std::vector<double> dvec{d};
    const Mat y = scan_selective(p, al, dvec, u);
    const auto ref = scan_sequential(DiscreteSSM::from_continuous(a, b, c, d, dt),
                                     std::span<const double>(u.data(), static_cast<std::size_t>(T)));
    for (int k = 0; k < T; ++k) CHECK(y(k, 0) == doctest::Approx(ref[k]).epsilon(1e-12));
  }
  SUBCASE("forgetting limit") {
    const int T = 6, N = 3;
    SelectiveParams p = random_selective(rng, T, 1, N);
    p.delta.setConstant(1e4);
    ALogParam al{random_mat(rng, 1, N, 0.3)};
    const Mat u = random_mat(rng, T, 1);
    const Mat eigs = realize_eigenvalues(al);
    SelectiveCache cache;
    selective_scan_forward(p, eigs, u, false, &cache);
    for (int k = 0; k < T; ++k) {
      for (int n = 0; n < N; ++n) {
        const double bbar = std::expm1(p.delta(k, 0) * eigs(0, n)) / eigs(0, n) * p.b(k, n);
        CHECK(std::abs(cache.h[static_cast<std::size_t>(k * N + n)] - bbar * u(k, 0)) < 1e-9);
      }
    }
  }
  SUBCASE("dense recurrence oracle") {
    const int T = 16, E = 3, N = 4;
    const auto p = random_selective(rng, T, E, N);
    const Mat a_log = random_mat(rng, E, N, 0.5);
    const std::vector<double> d{0.3, -1.2, 0.8};
    const Mat u = random_mat(rng, T, E);
    const Mat y = scan_selective(p, ALogParam{a_log}, d, u);
    const Mat ref = dense_selective(p, a_log, d, u);
    CHECK((y - ref).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("shape mismatch") {
    auto p = random_selective(rng, 5, 2, 3);
    const std::vector<double> d{0.0, 0.0};
    CHECK_THROWS_AS(scan_selective(p, ALogParam{Mat::Zero(2, 3)}, d, random_mat(rng, 4, 2)), Error);
    CHECK_THROWS_AS(scan_selective(p, ALogParam{Mat::Zero(2, 2)}, d, random_mat(rng, 5, 2)), Error);
  }
}

TEST_CASE("selective_scan_backward matches finite differences") {
  Rng rng(31);
  const int T = 9, E = 2, N = 3;
  for (bool reverse : {false, true}) {
    auto p = random_selective(rng, T, E, N);
    Mat eigs = -random_mat(rng, E, N, 0.4).array().exp().matrix();
    Mat u = random_mat(rng, T, E);
    const Mat dy = random_mat(rng, T, E);
    auto loss = [&] { return (selective_scan_forward(p, eigs, u, reverse).array() * dy.array()).sum(); };
    SelectiveCache cache;
    selective_scan_forward(p, eigs, u, reverse, &cache);
    const auto g = selective_scan_backward(p, eigs, u, dy, cache);
    const double h = 1e-5;
    auto check_group = [&](Mat& param, const Mat& grad) {
      for (Eigen::Index i = 0; i < param.size(); ++i) {
        const double keep = param.data()[i];
        param.data()[i] = keep + h;
        const double lp = loss();
        param.data()[i] = keep - h;
        const double lm = loss();
        param.data()[i] = keep;
        const double fd = (lp - lm) / (2 * h);
        const double an = grad.data()[i];
        CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4}) < 1e-4);
      }
    };
    check_group(p.delta, g.delta);
    check_group(p.b, g.b);
    check_group(p.c, g.c);
    check_group(eigs, g.eigs);
    check_group(u, g.u);
  }
}
