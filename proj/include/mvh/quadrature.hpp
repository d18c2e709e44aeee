#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <vector>

#include "mvh/error.hpp"

namespace mvh::quad {

struct Result {
  double value = 0.0;
  double error = 0.0;
  std::size_t panels = 0;
};

struct Options {
  double rel_tol = 1e-10;
  double abs_tol = 0.0;
  std::size_t max_panels = 10000;
};

namespace detail {

// 21-point Kronrod abscissae with the embedded 10-point Gauss rule.
inline constexpr std::array<double, 11> kXgk = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.000000000000000000000000000000000};
inline constexpr std::array<double, 11> kWgk = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077600525572040, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr std::array<double, 5> kWg = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gauss_kronrod21(const F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[10];
  double gauss = 0.0;
  for (int j = 0; j < 10; ++j) {
    const double dx = half * kXgk[j];
    const double fsum = f(center - dx) + f(center + dx);
    kronrod += kWgk[j] * fsum;
    if (j % 2 == 1) gauss += kWg[j / 2] * fsum;
  }
  kronrod *= half;
  gauss *= half;
  return {a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod (G10/K21) integration on a finite interval.
/// Splits the panel with the largest error estimate until the summed estimate
/// meets max(abs_tol, rel_tol * |I|). Throws NonConvergence past max_panels.
template <class F>
Result integrate(const F& f, double a, double b, const Options& opt = {}) {
  std::priority_queue<detail::Panel> heap;
  auto first = detail::gauss_kronrod21(f, a, b);
  double total = first.value;
  double total_err = first.error;
  heap.push(first);
  std::size_t panels = 1;

  auto converged = [&] {
    return total_err <= std::max(opt.abs_tol, opt.rel_tol * std::abs(total));
  };

  while (!converged()) {
    if (panels >= opt.max_panels) {
      throw Error(ErrorKind::NonConvergence,
                  "adaptive quadrature exceeded " + std::to_string(opt.max_panels) + " panels");
    }
    auto worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      throw Error(ErrorKind::NonConvergence, "panel width underflow during subdivision");
    }
    auto left = detail::gauss_kronrod21(f, worst.a, mid);
    auto right = detail::gauss_kronrod21(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++panels;
  }
  // Re-sum to drop the drift accumulated by incremental updates.
  double value = 0.0, err = 0.0;
  while (!heap.empty()) {
    value += heap.top().value;
    err += heap.top().error;
    heap.pop();
  }
  return {value, err, panels};
}

/// Integral over [lo, +inf) through s = lo + t / (1 - t), t in [0, 1).
template <class F>
Result integrate_to_infinity(const F& f, double lo, const Options& opt = {}) {
  auto mapped = [&](double t) {
    const double one_minus = 1.0 - t;
    if (one_minus <= 0.0) return 0.0;
    const double s = lo + t / one_minus;
    return f(s) / (one_minus * one_minus);
  };
  return integrate(mapped, 0.0, 1.0, opt);
}

}  // namespace mvh::quad
