#include <cmath>
#include <string>

#include "mvh/error.hpp"
#include "mvh/mixers.hpp"
#include "mvh/selective.hpp"

namespace mvh::mix {

namespace {

using nn::apply;
using nn::apply_grad;
using nn::conv1d;
using nn::conv1d_backward;
using nn::linear;
using nn::linear_backward;
using nn::silu;
using nn::silu_grad;

constexpr int kSymmetric = 1;
constexpr int kCausal = 2;
constexpr int kAntiCausal = 0;

enum class Direction { Forward, Reverse, Both };

struct BranchCache {
  Mat x, conv, act, xp, dt_low, dt_raw, eigs;
  ssm::SelectiveParams pf, pb;
  ssm::SelectiveCache cf, cb;
};

Mat hcat(const Mat& a, const Mat& b) {
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

// Diagonal of the reverse scan: u_k * sum_n C_kn ((exp(delta A) - 1) / A) B_kn.
Mat backward_diagonal(const ssm::SelectiveParams& p, const Mat& eigs, const Mat& u) {
  const Eigen::Index T = u.rows(), E = u.cols(), N = eigs.cols();
  Mat s(T, E);
  for (Eigen::Index k = 0; k < T; ++k)
    for (Eigen::Index e = 0; e < E; ++e) {
      double acc = 0.0;
      for (Eigen::Index n = 0; n < N; ++n) {
        const double a = eigs(e, n);
        acc += p.c(k, n) * std::expm1(p.delta(k, e) * a) / a * p.b(k, n);
      }
      s(k, e) = acc * u(k, e);
    }
  return s;
}

void backward_diagonal_grad(const ssm::SelectiveParams& p, const Mat& eigs, const Mat& u, const Mat& g, Mat& d_delta,
                            Mat& d_b, Mat& d_c, Mat& d_eigs, Mat& d_u) {
  const Eigen::Index T = u.rows(), E = u.cols(), N = eigs.cols();
  for (Eigen::Index k = 0; k < T; ++k)
    for (Eigen::Index e = 0; e < E; ++e) {
      const double gu = g(k, e) * u(k, e);
      double acc = 0.0;
      for (Eigen::Index n = 0; n < N; ++n) {
        const double a = eigs(e, n);
        const double da = p.delta(k, e) * a;
        const double em = std::expm1(da);
        const double coef = em / a;
        acc += p.c(k, n) * coef * p.b(k, n);
        d_b(k, n) += gu * p.c(k, n) * coef;
        d_c(k, n) += gu * coef * p.b(k, n);
        const double dcoef = gu * p.c(k, n) * p.b(k, n);
        d_delta(k, e) += dcoef * std::exp(da);
        d_eigs(e, n) += dcoef * (da * std::exp(da) - em) / (a * a);
      }
      d_u(k, e) += g(k, e) * acc;
    }
}

Mat branch_forward(const SelectiveBranch& w, const Mat& x, int offset, Direction dir, BranchCache& c) {
  const int r = w.rank(), N = w.state_dim();
  const int pairs = dir == Direction::Both ? 2 : 1;
  require(w.x_proj.rows() == r + 2 * pairs * N && x.cols() == w.width(), ErrorKind::ShapeMismatch,
          "selective branch projections inconsistent with width " + std::to_string(x.cols()));
  c.x = x;
  c.conv = conv1d(x, w.conv_w, w.conv_b, offset);
  c.act = apply(c.conv, silu);
  c.xp = linear(c.act, w.x_proj, Mat());
  c.dt_low = c.xp.leftCols(r);
  c.dt_raw = linear(c.dt_low, w.dt_proj, w.dt_bias);
  const Mat delta = c.dt_raw.unaryExpr([](double v) { return ssm::delta_from_raw(v); });
  c.eigs = ssm::realize_eigenvalues({w.a_log});
  c.pf = {delta, c.xp.middleCols(r, N), c.xp.middleCols(r + N, N)};
  Mat y = ssm::selective_scan_forward(c.pf, c.eigs, c.act, dir == Direction::Reverse, &c.cf);
  if (dir == Direction::Both) {
    c.pb = {delta, c.xp.middleCols(r + 2 * N, N), c.xp.middleCols(r + 3 * N, N)};
    y += ssm::selective_scan_forward(c.pb, c.eigs, c.act, true, &c.cb);
    y -= backward_diagonal(c.pb, c.eigs, c.act);
  }
  y.array() += c.act.array().rowwise() * w.d.row(0).array();
  return y;
}

Mat branch_backward(const SelectiveBranch& w, const BranchCache& c, int offset, Direction dir, const Mat& dy,
                    SelectiveBranch& g) {
  const int r = w.rank(), N = w.state_dim();
  const Eigen::Index T = dy.rows();
  g.d.row(0) += (dy.array() * c.act.array()).colwise().sum().matrix();
  Mat d_act = (dy.array().rowwise() * w.d.row(0).array()).matrix();

  auto sf = ssm::selective_scan_backward(c.pf, c.eigs, c.act, dy, c.cf);
  Mat d_delta = sf.delta;
  Mat d_eigs = sf.eigs;
  d_act += sf.u;
  Mat d_xp = Mat::Zero(T, c.xp.cols());
  d_xp.middleCols(r, N) = sf.b;
  d_xp.middleCols(r + N, N) = sf.c;
  if (dir == Direction::Both) {
    auto sb = ssm::selective_scan_backward(c.pb, c.eigs, c.act, dy, c.cb);
    d_delta += sb.delta;
    d_eigs += sb.eigs;
    d_act += sb.u;
    backward_diagonal_grad(c.pb, c.eigs, c.act, -dy, d_delta, sb.b, sb.c, d_eigs, d_act);
    d_xp.middleCols(r + 2 * N, N) = sb.b;
    d_xp.middleCols(r + 3 * N, N) = sb.c;
  }
  g.a_log += ssm::realize_eigenvalues_backward({w.a_log}, d_eigs);
  const Mat d_raw = apply_grad(c.dt_raw, d_delta, &ssm::softplus_grad);
  d_xp.leftCols(r) = linear_backward(c.dt_low, w.dt_proj, d_raw, g.dt_proj, &g.dt_bias);
  d_act += linear_backward(c.act, w.x_proj, d_xp, g.x_proj, nullptr);
  const Mat d_conv = apply_grad(c.conv, d_act, silu_grad);
  return conv1d_backward(c.x, w.conv_w, d_conv, offset, g.conv_w, g.conv_b);
}

// ---- MV ----

struct MVCache {
  Mat p, z, skip_conv, cat;
  BranchCache br;
};

Mat mv_forward(const MVWeights& w, const Mat& x, MVCache& c) {
  const int H = w.ssm.width();
  require(w.in_proj.rows() == 2 * H && w.in_proj.cols() == x.cols() && w.out_proj.rows() == x.cols() &&
              w.out_proj.cols() == 2 * H,
          ErrorKind::ShapeMismatch, "MV projections inconsistent with " + std::to_string(x.cols()) + " channels");
  c.p = linear(x, w.in_proj, Mat());
  c.z = c.p.rightCols(H);
  const Mat ys = branch_forward(w.ssm, c.p.leftCols(H), kSymmetric, Direction::Forward, c.br);
  c.skip_conv = conv1d(c.z, w.skip_w, w.skip_b, kSymmetric);
  c.cat = hcat(ys, w.skip_activation ? apply(c.skip_conv, silu) : c.skip_conv);
  return linear(c.cat, w.out_proj, Mat());
}

// ---- gated forms shared by ViM and Hydra ----

struct GatedCache {
  Mat p, z, s, gated;
  BranchCache a, b;
};

void check_gated(const Mat& in_proj, const Mat& out_proj, int E, Eigen::Index channels, const char* name) {
  require(in_proj.rows() == 2 * E && in_proj.cols() == channels && out_proj.rows() == channels &&
              out_proj.cols() == E,
          ErrorKind::ShapeMismatch, std::string(name) + " projections inconsistent with " + std::to_string(channels) +
                                        " channels");
}

Mat gate_output(const Mat& out_proj, GatedCache& c) {
  c.gated = (c.s.array() * apply(c.z, silu).array()).matrix();
  return linear(c.gated, out_proj, Mat());
}

// Returns dL/ds and writes dL/dz.
Mat gate_backward(const Mat& out_proj, const GatedCache& c, const Mat& dy, Mat& d_out_proj, Mat& d_z) {
  const Mat d_g = linear_backward(c.gated, out_proj, dy, d_out_proj, nullptr);
  d_z = apply_grad(c.z, (d_g.array() * c.s.array()).matrix(), silu_grad);
  return (d_g.array() * apply(c.z, silu).array()).matrix();
}

Mat vim_forward(const ViMWeights& w, const Mat& x, GatedCache& c) {
  const int E = w.fwd.width();
  check_gated(w.in_proj, w.out_proj, E, x.cols(), "ViM");
  c.p = linear(x, w.in_proj, Mat());
  c.z = c.p.rightCols(E);
  const Mat xs = c.p.leftCols(E);
  c.s = branch_forward(w.fwd, xs, kCausal, Direction::Forward, c.a) +
        branch_forward(w.bwd, xs, kAntiCausal, Direction::Reverse, c.b);
  return gate_output(w.out_proj, c);
}

Mat hydra_forward(const HydraWeights& w, const Mat& x, GatedCache& c) {
  const int E = w.ssm.width();
  check_gated(w.in_proj, w.out_proj, E, x.cols(), "Hydra");
  c.p = linear(x, w.in_proj, Mat());
  c.z = c.p.rightCols(E);
  c.s = branch_forward(w.ssm, c.p.leftCols(E), kSymmetric, Direction::Both, c.a);
  return gate_output(w.out_proj, c);
}

}  // namespace

SelectiveBranch SelectiveBranch::init(Rng& rng, int width, int state_dim, int rank, int pairs,
                                      spectral::InitScheme scheme) {
  require(width > 0 && state_dim > 0 && rank > 0 && pairs > 0, ErrorKind::InvalidArgument,
          "selective branch dimensions must be positive");
  SelectiveBranch b;
  b.conv_w = nn::randn(rng, width, 3, 1.0 / std::sqrt(3.0));
  b.conv_b = Mat::Zero(1, width);
  b.x_proj = nn::randn(rng, rank + 2 * pairs * state_dim, width, 1.0 / std::sqrt(double(width)));
  b.dt_proj = nn::randn(rng, width, rank, 1.0 / std::sqrt(double(rank)));
  b.dt_bias.resize(1, width);
  for (int e = 0; e < width; ++e) {
    // Step sizes log-uniform in [1e-3, 1e-1]; bias is their inverse softplus.
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    b.dt_bias(0, e) = dt + std::log(-std::expm1(-dt));
  }
  const auto mags = spectral::EigenInit{scheme, state_dim}.magnitudes();
  b.a_log.resize(width, state_dim);
  for (int e = 0; e < width; ++e)
    for (int n = 0; n < state_dim; ++n) b.a_log(e, n) = std::log(mags[n]);
  b.d = Mat::Ones(1, width);
  return b;
}

MVWeights MVWeights::init(Rng& rng, int channels, int state_dim, int rank, spectral::InitScheme scheme) {
  MVWeights w;
  const int H = channels;
  w.in_proj = nn::randn(rng, 2 * H, channels, 1.0 / std::sqrt(double(channels)));
  w.ssm = SelectiveBranch::init(rng, H, state_dim, rank, 1, scheme);
  w.skip_w = nn::randn(rng, H, 3, 1.0 / std::sqrt(3.0));
  w.skip_b = Mat::Zero(1, H);
  w.out_proj = nn::randn(rng, channels, 2 * H, 1.0 / std::sqrt(2.0 * H));
  return w;
}

ViMWeights ViMWeights::init(Rng& rng, int channels, int state_dim, int rank, spectral::InitScheme scheme) {
  ViMWeights w;
  const int E = 2 * channels;
  w.in_proj = nn::randn(rng, 2 * E, channels, 1.0 / std::sqrt(double(channels)));
  w.fwd = SelectiveBranch::init(rng, E, state_dim, rank, 1, scheme);
  w.bwd = SelectiveBranch::init(rng, E, state_dim, rank, 1, scheme);
  w.out_proj = nn::randn(rng, channels, E, 1.0 / std::sqrt(double(E)));
  return w;
}

HydraWeights HydraWeights::init(Rng& rng, int channels, int state_dim, int rank, spectral::InitScheme scheme) {
  HydraWeights w;
  const int E = 2 * channels;
  w.in_proj = nn::randn(rng, 2 * E, channels, 1.0 / std::sqrt(double(channels)));
  w.ssm = SelectiveBranch::init(rng, E, state_dim, rank, 2, scheme);
  w.out_proj = nn::randn(rng, channels, E, 1.0 / std::sqrt(double(E)));
  return w;
}

Mat forward_sample(const MVWeights& w, const Mat& x) {
  MVCache c;
  return mv_forward(w, x, c);
}

Mat backward_sample(const MVWeights& w, const Mat& x, const Mat& dy, MVWeights& g) {
  MVCache c;
  mv_forward(w, x, c);
  const int H = w.ssm.width();
  const Mat d_cat = linear_backward(c.cat, w.out_proj, dy, g.out_proj, nullptr);
  const Mat d_skip = w.skip_activation ? apply_grad(c.skip_conv, d_cat.rightCols(H), silu_grad)
                                       : Mat(d_cat.rightCols(H));
  const Mat d_z = conv1d_backward(c.z, w.skip_w, d_skip, kSymmetric, g.skip_w, g.skip_b);
  const Mat d_u = branch_backward(w.ssm, c.br, kSymmetric, Direction::Forward, d_cat.leftCols(H), g.ssm);
  return linear_backward(x, w.in_proj, hcat(d_u, d_z), g.in_proj, nullptr);
}

Mat forward_sample(const ViMWeights& w, const Mat& x) {
  GatedCache c;
  return vim_forward(w, x, c);
}

Mat backward_sample(const ViMWeights& w, const Mat& x, const Mat& dy, ViMWeights& g) {
  GatedCache c;
  vim_forward(w, x, c);
  Mat d_z;
  const Mat d_s = gate_backward(w.out_proj, c, dy, g.out_proj, d_z);
  const Mat d_x = branch_backward(w.fwd, c.a, kCausal, Direction::Forward, d_s, g.fwd) +
                  branch_backward(w.bwd, c.b, kAntiCausal, Direction::Reverse, d_s, g.bwd);
  return linear_backward(x, w.in_proj, hcat(d_x, d_z), g.in_proj, nullptr);
}

Mat forward_sample(const HydraWeights& w, const Mat& x) {
  GatedCache c;
  return hydra_forward(w, x, c);
}

Mat backward_sample(const HydraWeights& w, const Mat& x, const Mat& dy, HydraWeights& g) {
  GatedCache c;
  hydra_forward(w, x, c);
  Mat d_z;
  const Mat d_s = gate_backward(w.out_proj, c, dy, g.out_proj, d_z);
  const Mat d_x = branch_backward(w.ssm, c.a, kSymmetric, Direction::Both, d_s, g.ssm);
  return linear_backward(x, w.in_proj, hcat(d_x, d_z), g.in_proj, nullptr);
}

}  // namespace mvh::mix
