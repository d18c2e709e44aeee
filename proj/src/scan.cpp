#include "mvh/scan.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mvh/error.hpp"

namespace mvh::ssm {

ZohPair discretize_zoh(double a, double b, double delta) {
  require(a < 0.0, ErrorKind::DomainError, "ZOH requires a < 0");
  require(delta > 0.0, ErrorKind::DomainError, "ZOH requires delta > 0");
  const double a_bar = std::exp(delta * a);
  // expm1 keeps b_bar accurate when delta * a is tiny.
  return {a_bar, std::expm1(delta * a) / a * b};
}

DiscreteSSM::DiscreteSSM(double a_bar_, double b_bar_, double c_, double d_, double delta_)
    : a_bar(a_bar_), b_bar(b_bar_), c(c_), d(d_), delta(delta_) {
  require(std::abs(a_bar) < 1.0, ErrorKind::DomainError, "discrete system must satisfy |a_bar| < 1");
  require(delta > 0.0, ErrorKind::DomainError, "delta must be positive");
}

DiscreteSSM DiscreteSSM::from_continuous(double a, double b, double c, double d, double delta) {
  const auto z = discretize_zoh(a, b, delta);
  return {z.a_bar, z.b_bar, c, d, delta};
}

void linear_recurrence_sequential(std::span<const double> a, std::span<const double> b, std::span<double> x) {
  double s = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) {
    s = a[k] * s + b[k];
    x[k] = s;
  }
}

void linear_recurrence_chunked(std::span<const double> a, std::span<const double> b, std::span<double> x,
                               std::size_t chunk) {
  require(chunk >= 1, ErrorKind::InvalidArgument, "chunk must be >= 1");
  const std::size_t n = b.size();
  if (n == 0) return;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  std::vector<double> agg_a(chunks), agg_b(chunks), carry(chunks);
  const auto nc = static_cast<long long>(chunks);

  // Up-sweep: each chunk reduces to a single affine map.
#pragma omp parallel for schedule(static)
  for (long long c = 0; c < nc; ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    double ca = 1.0, cb = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      ca *= a[k];
      cb = a[k] * cb + b[k];
    }
    agg_a[c] = ca;
    agg_b[c] = cb;
  }

  carry[0] = 0.0;
  for (std::size_t c = 1; c < chunks; ++c) carry[c] = agg_a[c - 1] * carry[c - 1] + agg_b[c - 1];

  // Down-sweep: rescan every chunk from its carried-in state.
#pragma omp parallel for schedule(static)
  for (long long c = 0; c < nc; ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
#ifdef MVH_INJECT_SCAN_FAULT
    double s = 0.5 * carry[c];  // deliberately wrong carry, for negative tests of the bench harness
#else
    double s = carry[c];
#endif
    for (std::size_t k = lo; k < hi; ++k) {
      s = a[k] * s + b[k];
      x[k] = s;
    }
  }
}

std::vector<double> scan_sequential(const DiscreteSSM& ssm, std::span<const double> u) {
  std::vector<double> y(u.size());
  double x = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    x = ssm.a_bar * x + ssm.b_bar * u[k];
    y[k] = ssm.c * x + ssm.d * u[k];
  }
  return y;
}

std::vector<double> scan_parallel(const DiscreteSSM& ssm, std::span<const double> u, std::size_t chunk) {
  const std::size_t n = u.size();
  std::vector<double> a(n, ssm.a_bar), b(n), x(n);
  for (std::size_t k = 0; k < n; ++k) b[k] = ssm.b_bar * u[k];
  linear_recurrence_chunked(a, b, x, chunk);
  for (std::size_t k = 0; k < n; ++k) x[k] = ssm.c * x[k] + ssm.d * u[k];
  return x;
}

std::vector<double> scan_bidirectional(const DiscreteSSM& fwd, const DiscreteSSM& bwd, std::span<const double> u) {
  const std::size_t n = u.size();
  auto y = scan_sequential(fwd, u);
  std::vector<double> rev(u.rbegin(), u.rend());
  const auto yb = scan_sequential(bwd, rev);
  const double self_bwd = bwd.c * bwd.b_bar + bwd.d;
  for (std::size_t k = 0; k < n; ++k) y[k] += yb[n - 1 - k] - self_bwd * u[k];
  return y;
}

ScanGrads scan_backward(const DiscreteSSM& ssm, std::span<const double> u, std::span<const double> dy) {
  require(u.size() == dy.size(), ErrorKind::ShapeMismatch,
          "dy length " + std::to_string(dy.size()) + " != input length " + std::to_string(u.size()));
  const std::size_t n = u.size();
  std::vector<double> x(n);
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    s = ssm.a_bar * s + ssm.b_bar * u[k];
    x[k] = s;
  }
  ScanGrads g;
  g.u.assign(n, 0.0);
  double dx_next = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double dx = ssm.c * dy[i] + ssm.a_bar * dx_next;
    g.c += dy[i] * x[i];
    g.d += dy[i] * u[i];
    g.b_bar += dx * u[i];
    if (i > 0) g.a_bar += dx * x[i - 1];
    g.u[i] = dx * ssm.b_bar + ssm.d * dy[i];
    dx_next = dx;
  }
  return g;
}

Mat realize_eigenvalues(const ALogParam& p) { return -p.a_log.array().exp().matrix(); }

Mat realize_eigenvalues_backward(const ALogParam& p, const Mat& d_eigs) {
  return (d_eigs.array() * realize_eigenvalues(p).array()).matrix();
}

}  // namespace mvh::ssm
