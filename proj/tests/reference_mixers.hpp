#pragma once
// Straight-line reference implementations used as test oracles. Everything is
// written with explicit loops and no library helpers beyond std:: math.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "mvh/mixers.hpp"

namespace ref {

using mvh::nn::Mat;
using cplx = std::complex<double>;

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double softplus(double x) { return std::log(1.0 + std::exp(x)); }

// x w^T (+ b)
inline Mat proj(const Mat& x, const Mat& w, const Mat* b = nullptr) {
  Mat y(x.rows(), w.rows());
  for (int k = 0; k < x.rows(); ++k)
    for (int o = 0; o < w.rows(); ++o) {
      double acc = b ? (*b)(0, o) : 0.0;
      for (int i = 0; i < x.cols(); ++i) acc += x(k, i) * w(o, i);
      y(k, o) = acc;
    }
  return y;
}

inline Mat conv(const Mat& x, const Mat& w, const Mat& b, int offset) {
  Mat y(x.rows(), x.cols());
  for (int k = 0; k < x.rows(); ++k)
    for (int c = 0; c < x.cols(); ++c) {
      double acc = b(0, c);
      for (int j = 0; j < w.cols(); ++j) {
        const int src = k + j - offset;
        if (src >= 0 && src < x.rows()) acc += w(c, j) * x(src, c);
      }
      y(k, c) = acc;
    }
  return y;
}

inline Mat map(const Mat& x, double (*f)(double)) {
  Mat y(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) y(i, j) = f(x(i, j));
  return y;
}

// Materialized selective scan: the output at token k is a sum over all source
// tokens j with the transition product written as exp(A * sum of steps).
inline Mat selective_dense(const Mat& delta, const Mat& B, const Mat& C, const Mat& A, const Mat& u, bool reverse) {
  const int T = static_cast<int>(u.rows()), E = static_cast<int>(u.cols()), N = static_cast<int>(A.cols());
  Mat y = Mat::Zero(T, E);
  for (int e = 0; e < E; ++e)
    for (int k = 0; k < T; ++k)
      for (int j = 0; j < T; ++j) {
        if (!reverse && j > k) continue;
        if (reverse && j < k) continue;
        double steps = 0.0;
        if (!reverse)
          for (int i = j + 1; i <= k; ++i) steps += delta(i, e);
        else
          for (int i = k; i < j; ++i) steps += delta(i, e);
        for (int n = 0; n < N; ++n) {
          const double a = A(e, n);
          const double bbar = (std::exp(delta(j, e) * a) - 1.0) / a * B(j, n);
          y(k, e) += C(k, n) * std::exp(a * steps) * bbar * u(j, e);
        }
      }
  return y;
}

// dir: 0 forward, 1 reverse, 2 bidirectional (quasiseparable)
inline Mat branch(const mvh::mix::SelectiveBranch& w, const Mat& x, int offset, int dir) {
  const int r = static_cast<int>(w.dt_proj.cols()), N = static_cast<int>(w.a_log.cols());
  const Mat act = map(conv(x, w.conv_w, w.conv_b, offset), silu);
  const Mat xp = proj(act, w.x_proj);
  const Mat raw = proj(xp.leftCols(r), w.dt_proj, &w.dt_bias);
  Mat delta(raw.rows(), raw.cols());
  for (int i = 0; i < raw.rows(); ++i)
    for (int j = 0; j < raw.cols(); ++j) delta(i, j) = softplus(raw(i, j)) + 1e-4;
  Mat A(w.a_log.rows(), w.a_log.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) A(i, j) = -std::exp(w.a_log(i, j));
  Mat y = selective_dense(delta, xp.middleCols(r, N), xp.middleCols(r + N, N), A, act, dir == 1);
  if (dir == 2) {
    const Mat Bb = xp.middleCols(r + 2 * N, N), Cb = xp.middleCols(r + 3 * N, N);
    y += selective_dense(delta, Bb, Cb, A, act, true);
    for (int k = 0; k < y.rows(); ++k)
      for (int e = 0; e < y.cols(); ++e)
        for (int n = 0; n < N; ++n)
          y(k, e) -= Cb(k, n) * (std::exp(delta(k, e) * A(e, n)) - 1.0) / A(e, n) * Bb(k, n) * act(k, e);
  }
  for (int k = 0; k < y.rows(); ++k)
    for (int e = 0; e < y.cols(); ++e) y(k, e) += w.d(0, e) * act(k, e);
  return y;
}

inline Mat mv(const mvh::mix::MVWeights& w, const Mat& x) {
  const int H = static_cast<int>(w.ssm.a_log.rows());
  const Mat p = proj(x, w.in_proj);
  const Mat ys = branch(w.ssm, p.leftCols(H), 1, 0);
  Mat skip = conv(p.rightCols(H), w.skip_w, w.skip_b, 1);
  if (w.skip_activation) skip = map(skip, silu);
  Mat cat(x.rows(), 2 * H);
  for (int k = 0; k < x.rows(); ++k)
    for (int c = 0; c < H; ++c) {
      cat(k, c) = ys(k, c);
      cat(k, H + c) = skip(k, c);
    }
  return proj(cat, w.out_proj);
}

inline Mat gated(const Mat& s, const Mat& z, const Mat& out_proj) {
  Mat g(s.rows(), s.cols());
  for (int i = 0; i < s.rows(); ++i)
    for (int j = 0; j < s.cols(); ++j) g(i, j) = s(i, j) * silu(z(i, j));
  return proj(g, out_proj);
}

inline Mat vim(const mvh::mix::ViMWeights& w, const Mat& x) {
  const int E = static_cast<int>(w.fwd.a_log.rows());
  const Mat p = proj(x, w.in_proj);
  const Mat s = branch(w.fwd, p.leftCols(E), 2, 0) + branch(w.bwd, p.leftCols(E), 0, 1);
  return gated(s, p.rightCols(E), w.out_proj);
}

inline Mat hydra(const mvh::mix::HydraWeights& w, const Mat& x) {
  const int E = static_cast<int>(w.ssm.a_log.rows());
  const Mat p = proj(x, w.in_proj);
  return gated(branch(w.ssm, p.leftCols(E), 1, 2), p.rightCols(E), w.out_proj);
}

inline Mat attention(const mvh::mix::AttentionWeights& w, const Mat& x) {
  const int T = static_cast<int>(x.rows()), C = static_cast<int>(x.cols()), dh = C / w.heads;
  const Mat qkv = proj(x, w.qkv_proj);
  Mat o = Mat::Zero(T, C);
  for (int h = 0; h < w.heads; ++h)
    for (int i = 0; i < T; ++i) {
      std::vector<double> s(T);
      double mx = -1e300, z = 0.0;
      for (int j = 0; j < T; ++j) {
        double dot = 0.0;
        for (int d = 0; d < dh; ++d) dot += qkv(i, h * dh + d) * qkv(j, C + h * dh + d);
        s[j] = dot / std::sqrt(double(dh));
        mx = std::max(mx, s[j]);
      }
      for (int j = 0; j < T; ++j) z += (s[j] = std::exp(s[j] - mx));
      for (int j = 0; j < T; ++j)
        for (int d = 0; d < dh; ++d) o(i, h * dh + d) += s[j] / z * qkv(j, 2 * C + h * dh + d);
    }
  return proj(o, w.out_proj);
}

// Naive 2-D DFT over a side x side grid for every column.
inline std::vector<std::vector<cplx>> dft2(const std::vector<std::vector<cplx>>& x, int side, bool inverse) {
  const int T = side * side;
  const double sgn = inverse ? 1.0 : -1.0;
  std::vector<std::vector<cplx>> y(T, std::vector<cplx>(x[0].size(), 0.0));
  for (int p = 0; p < side; ++p)
    for (int q = 0; q < side; ++q)
      for (int m = 0; m < side; ++m)
        for (int n = 0; n < side; ++n) {
          const double ang = sgn * 2.0 * std::numbers::pi * double(p * m + q * n) / side;
          const cplx tw(std::cos(ang), std::sin(ang));
          for (std::size_t c = 0; c < x[0].size(); ++c) y[p * side + q][c] += x[m * side + n][c] * tw;
        }
  if (inverse)
    for (auto& row : y)
      for (auto& v : row) v /= double(T);
  return y;
}

inline Mat einfft(const mvh::mix::EinFFTWeights& w, const Mat& x) {
  const int T = static_cast<int>(x.rows()), C = static_cast<int>(x.cols());
  const int side = static_cast<int>(std::lround(std::sqrt(double(T))));
  const int cb = C / w.blocks;
  std::vector<std::vector<cplx>> f(T, std::vector<cplx>(C));
  for (int k = 0; k < T; ++k)
    for (int c = 0; c < C; ++c) f[k][c] = x(k, c);
  f = dft2(f, side, false);
  auto mixing = [&](const std::vector<std::vector<cplx>>& in, const Mat& re, const Mat& im) {
    std::vector<std::vector<cplx>> out(T, std::vector<cplx>(C, 0.0));
    for (int p = 0; p < side; ++p)
      for (int q = 0; q < side; ++q) {
        const int k = p * side + q, mirror = ((side - p) % side) * side + (side - q) % side;
        for (int c = 0; c < C; ++c) {
          const int b = c / cb, j = c % cb;
          for (int i = 0; i < cb; ++i) {
            const int r = b * cb + i;
            cplx wt(re(r, j), im(r, j));
            if (mirror == k) wt = re(r, j);
            else if (mirror < k) wt = std::conj(wt);
            out[k][c] += in[k][r] * wt;
          }
        }
      }
    return out;
  };
  auto y = mixing(f, w.w1_re, w.w1_im);
  for (int k = 0; k < T; ++k)
    for (int c = 0; c < C; ++c) {
      const double r = std::abs(y[k][c]);
      y[k][c] = r == 0.0 ? 0.0 : std::max(r + w.bias(0, c), 0.0) / r * y[k][c];
    }
  y = dft2(mixing(y, w.w2_re, w.w2_im), side, true);
  Mat out(T, C);
  for (int k = 0; k < T; ++k)
    for (int c = 0; c < C; ++c) out(k, c) = y[k][c].real();
  return out;
}

inline Mat mlp(const mvh::mix::MLPWeights& w, const Mat& x) { return proj(map(proj(x, w.w1), gelu), w.w2); }

}  // namespace ref
