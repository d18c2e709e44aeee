#pragma once

// Random fixtures and dense oracles shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <vector>

#include "mvh/backbone.hpp"
#include "mvh/mixers.hpp"
#include "mvh/rng.hpp"
#include "mvh/scan.hpp"
#include "mvh/selective.hpp"

namespace fixtures {

using mvh::Rng;
using mvh::nn::Mat;
using mvh::nn::Tensor3;
using mvh::ssm::DiscreteSSM;
using mvh::ssm::SelectiveParams;

inline double max_rel_dev(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 0.0, dev = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::abs(a[i]));
    dev = std::max(dev, std::abs(a[i] - b[i]));
  }
  return scale > 0 ? dev / scale : dev;
}

inline std::vector<double> random_seq(Rng& rng, std::size_t n) {
  std::vector<double> u(n);
  for (auto& v : u) v = rng.normal();
  return u;
}

inline DiscreteSSM random_ssm(Rng& rng) {
  return {rng.uniform(-0.99, 0.99), rng.normal(), rng.normal(), rng.normal(), 1.0};
}

inline Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Dense T x T quasiseparable matrix for the bidirectional scan.
inline std::vector<double> dense_bidirectional(const DiscreteSSM& f, const DiscreteSSM& b,
                                               const std::vector<double>& u) {
  const std::size_t n = u.size();
  std::vector<double> y(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t m = 0; m < n; ++m) {
      double w;
      if (m < k)
        w = f.c * std::pow(f.a_bar, static_cast<double>(k - m)) * f.b_bar;
      else if (m > k)
        w = b.c * std::pow(b.a_bar, static_cast<double>(m - k)) * b.b_bar;
      else
        w = f.c * f.b_bar + f.d;
      y[k] += w * u[m];
    }
  }
  return y;
}

// Explicit per-token discretization and state update with no shared kernel code.
inline Mat dense_selective(const SelectiveParams& p, const Mat& a_log, const std::vector<double>& d, const Mat& u) {
  const auto T = u.rows(), E = u.cols(), N = a_log.cols();
  Mat y(T, E);
  for (Eigen::Index e = 0; e < E; ++e) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(N);
    for (Eigen::Index k = 0; k < T; ++k) {
      Eigen::MatrixXd abar = Eigen::MatrixXd::Zero(N, N);
      Eigen::VectorXd bbar(N);
      for (Eigen::Index n = 0; n < N; ++n) {
        const double a = -std::exp(a_log(e, n));
        abar(n, n) = std::exp(p.delta(k, e) * a);
        bbar(n) = (abar(n, n) - 1.0) / a * p.b(k, n);
      }
      x = abar * x + bbar * u(k, e);
      y(k, e) = p.c.row(k).dot(x.transpose()) + d[e] * u(k, e);
    }
  }
  return y;
}

inline SelectiveParams random_selective(Rng& rng, Eigen::Index T, Eigen::Index E, Eigen::Index N) {
  SelectiveParams p{Mat(T, E), Mat(T, N), Mat(T, N)};
  for (Eigen::Index i = 0; i < p.delta.size(); ++i) p.delta.data()[i] = mvh::ssm::delta_from_raw(rng.normal());
  for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < p.c.size(); ++i) p.c.data()[i] = rng.normal();
  return p;
}

inline Tensor3 random_tensor(Rng& rng, int b, int t, int c, double s = 1.0) {
  Tensor3 x(b, t, c);
  for (auto& v : x.data) v = rng.normal(0.0, s);
  return x;
}

// Randomizes biases and feedthrough that init leaves at fixed values.
inline void perturb(mvh::mix::SelectiveBranch& b, Rng& rng) {
  b.conv_b = mvh::nn::randn(rng, 1, b.width(), 0.3);
  b.d = mvh::nn::randn(rng, 1, b.width(), 1.0);
  b.a_log += mvh::nn::randn(rng, b.a_log.rows(), b.a_log.cols(), 0.2);
  b.dt_bias.array() += 2.0;  // larger steps so the recurrence mixes tokens noticeably
}

inline mvh::mix::MVWeights random_mv(Rng& rng, int C = 8, int N = 3, int r = 2) {
  auto w = mvh::mix::MVWeights::init(rng, C, N, r);
  perturb(w.ssm, rng);
  w.skip_b = mvh::nn::randn(rng, 1, C, 0.3);
  return w;
}

inline mvh::mix::ViMWeights random_vim(Rng& rng, int C = 8, int N = 3, int r = 2) {
  auto w = mvh::mix::ViMWeights::init(rng, C, N, r);
  perturb(w.fwd, rng);
  perturb(w.bwd, rng);
  return w;
}

inline mvh::mix::HydraWeights random_hydra(Rng& rng, int C = 8, int N = 3, int r = 2) {
  auto w = mvh::mix::HydraWeights::init(rng, C, N, r);
  perturb(w.ssm, rng);
  return w;
}

inline mvh::mix::EinFFTWeights random_einfft(Rng& rng, int C, int blocks) {
  auto w = mvh::mix::EinFFTWeights::init(rng, C, blocks);
  w.bias = mvh::nn::randn(rng, 1, C, 0.3);
  return w;
}

inline mvh::backbone::ImageBatch random_images(Rng& rng, const mvh::backbone::BackboneConfig& cfg, int batch) {
  mvh::backbone::ImageBatch im(batch, cfg.in_channels, cfg.image_size, cfg.image_size);
  for (auto& v : im.data) v = rng.normal();
  return im;
}

}  // namespace fixtures
