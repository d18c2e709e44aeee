#include "mvh/selective.hpp"

#include <cmath>
#include <string>

#include "mvh/error.hpp"

namespace mvh::ssm {

double softplus(double x) {
  // log(1 + e^x) without overflow for large x.
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

double softplus_grad(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace {

void check_shapes(const SelectiveParams& p, const Mat& eigs, const Mat& u) {
  const auto tokens = u.rows();
  const auto channels = u.cols();
  const auto state = eigs.cols();
  require(p.delta.rows() == tokens && p.delta.cols() == channels, ErrorKind::ShapeMismatch,
          "delta must be tokens x channels");
  require(p.b.rows() == tokens && p.b.cols() == state, ErrorKind::ShapeMismatch, "B must be tokens x state_dim");
  require(p.c.rows() == tokens && p.c.cols() == state, ErrorKind::ShapeMismatch, "C must be tokens x state_dim");
  require(eigs.rows() == channels, ErrorKind::ShapeMismatch, "eigenvalue rows must equal channel count");
}

}  // namespace

Mat selective_scan_forward(const SelectiveParams& p, const Mat& eigs, const Mat& u, bool reverse,
                           SelectiveCache* cache) {
  check_shapes(p, eigs, u);
  const Eigen::Index T = u.rows(), E = u.cols(), N = eigs.cols();
  Mat y = Mat::Zero(T, E);
  if (cache) {
    cache->h.assign(static_cast<std::size_t>(T * E * N), 0.0);
    cache->reverse = reverse;
  }

#pragma omp parallel for schedule(static)
  for (Eigen::Index e = 0; e < E; ++e) {
    std::vector<double> h(static_cast<std::size_t>(N), 0.0);
    for (Eigen::Index step = 0; step < T; ++step) {
      const Eigen::Index k = reverse ? T - 1 - step : step;
      const double dt = p.delta(k, e);
      const double uk = u(k, e);
      double acc = 0.0;
      for (Eigen::Index n = 0; n < N; ++n) {
        const double a = eigs(e, n);
        const double a_bar = std::exp(dt * a);
        const double b_bar = std::expm1(dt * a) / a * p.b(k, n);
        h[n] = a_bar * h[n] + b_bar * uk;
        acc += p.c(k, n) * h[n];
        if (cache) cache->h[static_cast<std::size_t>((step * E + e) * N + n)] = h[n];
      }
      y(k, e) = acc;
    }
  }
  return y;
}

SelectiveGrads selective_scan_backward(const SelectiveParams& p, const Mat& eigs, const Mat& u, const Mat& dy,
                                       const SelectiveCache& cache) {
  check_shapes(p, eigs, u);
  const Eigen::Index T = u.rows(), E = u.cols(), N = eigs.cols();
  require(dy.rows() == T && dy.cols() == E, ErrorKind::ShapeMismatch, "dy must match output shape");
  require(cache.h.size() == static_cast<std::size_t>(T * E * N), ErrorKind::ShapeMismatch,
          "cache does not match forward shapes");

  SelectiveGrads g;
  g.delta = Mat::Zero(T, E);
  g.u = Mat::Zero(T, E);
  g.eigs = Mat::Zero(E, N);
  // B and C are shared by all channels: accumulate per channel, reduce in channel order.
  std::vector<Mat> db(static_cast<std::size_t>(E)), dc(static_cast<std::size_t>(E));
  const bool reverse = cache.reverse;

#pragma omp parallel for schedule(static)
  for (Eigen::Index e = 0; e < E; ++e) {
    Mat& dbe = db[static_cast<std::size_t>(e)];
    Mat& dce = dc[static_cast<std::size_t>(e)];
    dbe = Mat::Zero(T, N);
    dce = Mat::Zero(T, N);
    std::vector<double> carry(static_cast<std::size_t>(N), 0.0);
    for (Eigen::Index step = T; step-- > 0;) {
      const Eigen::Index k = reverse ? T - 1 - step : step;
      const double dt = p.delta(k, e);
      const double uk = u(k, e);
      const double gy = dy(k, e);
      for (Eigen::Index n = 0; n < N; ++n) {
        const double a = eigs(e, n);
        const double a_bar = std::exp(dt * a);
        const double em = std::expm1(dt * a);
        const double coef = em / a;
        const double h = cache.h[static_cast<std::size_t>((step * E + e) * N + n)];
        const double h_prev = step > 0 ? cache.h[static_cast<std::size_t>(((step - 1) * E + e) * N + n)] : 0.0;
        const double dh = gy * p.c(k, n) + carry[n];
        dce(k, n) += gy * h;
        const double d_abar = dh * h_prev;
        const double d_bbar = dh * uk;
        g.u(k, e) += dh * coef * p.b(k, n);
        dbe(k, n) += d_bbar * coef;
        g.delta(k, e) += d_abar * a * a_bar + d_bbar * p.b(k, n) * a_bar;
        g.eigs(e, n) += d_abar * dt * a_bar + d_bbar * p.b(k, n) * (dt * a_bar * a - em) / (a * a);
        carry[n] = a_bar * dh;
      }
    }
  }
  g.b = Mat::Zero(T, N);
  g.c = Mat::Zero(T, N);
  for (Eigen::Index e = 0; e < E; ++e) {
    g.b += db[static_cast<std::size_t>(e)];
    g.c += dc[static_cast<std::size_t>(e)];
  }
  return g;
}

Mat scan_selective(const SelectiveParams& p, const ALogParam& a, std::span<const double> d, const Mat& u) {
  require(static_cast<Eigen::Index>(d.size()) == u.cols(), ErrorKind::ShapeMismatch,
          "feedthrough length must equal channel count");
  Mat y = selective_scan_forward(p, realize_eigenvalues(a), u, false);
  for (Eigen::Index k = 0; k < u.rows(); ++k)
    for (Eigen::Index e = 0; e < u.cols(); ++e) y(k, e) += d[static_cast<std::size_t>(e)] * u(k, e);
  return y;
}

}  // namespace mvh::ssm
