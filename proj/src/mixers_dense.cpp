#include <cmath>
#include <exception>
#include <string>
#include <vector>

#include "mvh/error.hpp"
#include "mvh/mixers.hpp"

namespace mvh::mix {

using fft::CMat;
using fft::cplx;

namespace {

using nn::linear;
using nn::linear_backward;

// ---- attention ----

struct AttnCache {
  Mat qkv, o;
  std::vector<Mat> probs;
};

void check_attention(const AttentionWeights& w, Eigen::Index C) {
  require(w.heads > 0 && C % w.heads == 0, ErrorKind::ShapeMismatch,
          std::to_string(w.heads) + " heads do not divide " + std::to_string(C) + " channels");
  require(w.qkv_proj.rows() == 3 * C && w.qkv_proj.cols() == C && w.out_proj.rows() == C && w.out_proj.cols() == C,
          ErrorKind::ShapeMismatch, "attention projections inconsistent with " + std::to_string(C) + " channels");
}

Mat softmax_rows(Mat s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    s.row(i).array() -= s.row(i).maxCoeff();
    s.row(i) = s.row(i).array().exp().matrix();
    s.row(i) /= s.row(i).sum();
  }
  return s;
}

Mat head_probs(const Mat& qkv, Eigen::Index C, Eigen::Index dh, int h) {
  const Mat q = qkv.middleCols(h * dh, dh);
  const Mat k = qkv.middleCols(C + h * dh, dh);
  return softmax_rows(q * k.transpose() / std::sqrt(double(dh)));
}

Mat attn_forward(const AttentionWeights& w, const Mat& x, AttnCache& c) {
  const Eigen::Index C = x.cols();
  check_attention(w, C);
  const Eigen::Index dh = C / w.heads;
  c.qkv = linear(x, w.qkv_proj, Mat());
  c.o.resize(x.rows(), C);
  c.probs.resize(static_cast<std::size_t>(w.heads));
  for (int h = 0; h < w.heads; ++h) {
    c.probs[h] = head_probs(c.qkv, C, dh, h);
    c.o.middleCols(h * dh, dh) = c.probs[h] * c.qkv.middleCols(2 * C + h * dh, dh);
  }
  return linear(c.o, w.out_proj, Mat());
}

// ---- EinFFT ----

void check_einfft(const EinFFTWeights& w, Eigen::Index C) {
  require(w.blocks > 0 && C % w.blocks == 0, ErrorKind::ShapeMismatch,
          std::to_string(w.blocks) + " blocks do not divide " + std::to_string(C) + " channels");
  const Eigen::Index cb = C / w.blocks;
  for (const Mat* m : {&w.w1_re, &w.w1_im, &w.w2_re, &w.w2_im})
    require(m->rows() == C && m->cols() == cb, ErrorKind::ShapeMismatch, "EinFFT weights must be channels x block size");
  require(w.bias.rows() == 1 && w.bias.cols() == C, ErrorKind::ShapeMismatch, "modReLU bias must be 1 x channels");
}

// +1 for the half that uses W, -1 for mirrors (conj W), 0 for self-mirrored bins (Re W).
std::vector<int> mirror_signs(int side) {
  std::vector<int> sigma(static_cast<std::size_t>(side * side));
  for (int u = 0; u < side; ++u)
    for (int v = 0; v < side; ++v) {
      const int f = u * side + v;
      const int m = ((side - u) % side) * side + (side - v) % side;
      sigma[f] = f == m ? 0 : (f < m ? 1 : -1);
    }
  return sigma;
}

cplx weight_at(const Mat& re, const Mat& im, Eigen::Index i, Eigen::Index j, int sigma) {
  if (sigma == 0) return {re(i, j), 0.0};
  return {re(i, j), sigma > 0 ? im(i, j) : -im(i, j)};
}

CMat block_mix(const CMat& in, const Mat& re, const Mat& im, const std::vector<int>& sigma, int blocks) {
  const Eigen::Index cb = re.cols();
  CMat out(in.rows(), in.cols());
  for (Eigen::Index f = 0; f < in.rows(); ++f)
    for (int b = 0; b < blocks; ++b)
      for (Eigen::Index j = 0; j < cb; ++j) {
        cplx acc = 0.0;
        for (Eigen::Index i = 0; i < cb; ++i) acc += in(f, b * cb + i) * weight_at(re, im, b * cb + i, j, sigma[f]);
        out(f, b * cb + j) = acc;
      }
  return out;
}

CMat block_mix_backward(const CMat& in, const CMat& g_out, const Mat& re, const Mat& im,
                        const std::vector<int>& sigma, int blocks, Mat& g_re, Mat& g_im) {
  const Eigen::Index cb = re.cols();
  CMat g_in = CMat::Zero(in.rows(), in.cols());
  for (Eigen::Index f = 0; f < in.rows(); ++f)
    for (int b = 0; b < blocks; ++b)
      for (Eigen::Index i = 0; i < cb; ++i)
        for (Eigen::Index j = 0; j < cb; ++j) {
          const Eigen::Index r = b * cb + i, c = b * cb + j;
          g_in(f, r) += g_out(f, c) * std::conj(weight_at(re, im, r, j, sigma[f]));
          const cplx g = std::conj(in(f, r)) * g_out(f, c);
          g_re(r, j) += g.real();
          if (sigma[f] > 0) g_im(r, j) += g.imag();
          if (sigma[f] < 0) g_im(r, j) -= g.imag();
        }
  return g_in;
}

struct FFTCache {
  int side = 0;
  std::vector<int> sigma;
  CMat f, y1, z1;
};

Mat einfft_sample(const EinFFTWeights& w, const Mat& x, FFTCache& c) {
  const Eigen::Index C = x.cols();
  check_einfft(w, C);
  c.side = nn::square_side(static_cast<int>(x.rows()));
  c.sigma = mirror_signs(c.side);
  c.f = x.cast<cplx>();
  fft::transform2d(c.f, c.side, false);
  c.y1 = block_mix(c.f, w.w1_re, w.w1_im, c.sigma, w.blocks);
  c.z1.resize(c.y1.rows(), C);
  for (Eigen::Index f = 0; f < c.y1.rows(); ++f)
    for (Eigen::Index ch = 0; ch < C; ++ch) c.z1(f, ch) = modrelu(c.y1(f, ch), w.bias(0, ch));
  CMat y2 = block_mix(c.z1, w.w2_re, w.w2_im, c.sigma, w.blocks);
  fft::transform2d(y2, c.side, true);
  const double resid = y2.imag().cwiseAbs().maxCoeff();
  require(resid < kImagResidualTol, ErrorKind::ConjugateSymmetryViolation,
          "imaginary residual " + std::to_string(resid) + " after inverse transform");
  return y2.real();
}

// ---- MLP ----

void check_mlp(const MLPWeights& w, Eigen::Index C) {
  require(w.w1.rows() == 4 * C && w.w1.cols() == C && w.w2.rows() == C && w.w2.cols() == 4 * C,
          ErrorKind::ShapeMismatch, "MLP weights must be 4C x C and C x 4C for C = " + std::to_string(C));
}

}  // namespace

cplx modrelu(cplx z, double b) {
  const double r = std::abs(z);
  if (r == 0.0) return 0.0;
  const double m = r + b;
  return m > 0.0 ? z * (m / r) : cplx(0.0);
}

AttentionWeights AttentionWeights::init(Rng& rng, int channels, int heads) {
  require(heads > 0 && channels % heads == 0, ErrorKind::ShapeMismatch, "heads must divide channels");
  AttentionWeights w;
  w.qkv_proj = nn::randn(rng, 3 * channels, channels, 1.0 / std::sqrt(double(channels)));
  w.out_proj = nn::randn(rng, channels, channels, 1.0 / std::sqrt(double(channels)));
  w.heads = heads;
  return w;
}

EinFFTWeights EinFFTWeights::init(Rng& rng, int channels, int blocks) {
  require(blocks > 0 && channels % blocks == 0, ErrorKind::ShapeMismatch, "blocks must divide channels");
  const int cb = channels / blocks;
  const double s = 1.0 / std::sqrt(2.0 * cb);
  EinFFTWeights w;
  w.w1_re = nn::randn(rng, channels, cb, s);
  w.w1_im = nn::randn(rng, channels, cb, s);
  w.w2_re = nn::randn(rng, channels, cb, s);
  w.w2_im = nn::randn(rng, channels, cb, s);
  w.bias = Mat::Zero(1, channels);
  w.blocks = blocks;
  return w;
}

EinFFTWeights EinFFTWeights::identity(int channels, int blocks) {
  require(blocks > 0 && channels % blocks == 0, ErrorKind::ShapeMismatch, "blocks must divide channels");
  const int cb = channels / blocks;
  EinFFTWeights w;
  w.w1_re = Mat::Zero(channels, cb);
  for (int r = 0; r < channels; ++r) w.w1_re(r, r % cb) = 1.0;
  w.w2_re = w.w1_re;
  w.w1_im = Mat::Zero(channels, cb);
  w.w2_im = Mat::Zero(channels, cb);
  w.bias = Mat::Zero(1, channels);
  w.blocks = blocks;
  return w;
}

MLPWeights MLPWeights::init(Rng& rng, int channels) {
  MLPWeights w;
  w.w1 = nn::randn(rng, 4 * channels, channels, 1.0 / std::sqrt(double(channels)));
  w.w2 = nn::randn(rng, channels, 4 * channels, 1.0 / std::sqrt(4.0 * channels));
  return w;
}

Mat attention_probs(const AttentionWeights& w, const Mat& x, int head) {
  check_attention(w, x.cols());
  require(head >= 0 && head < w.heads, ErrorKind::InvalidArgument, "head index out of range");
  return head_probs(linear(x, w.qkv_proj, Mat()), x.cols(), x.cols() / w.heads, head);
}

Mat forward_sample(const AttentionWeights& w, const Mat& x) {
  AttnCache c;
  return attn_forward(w, x, c);
}

Mat backward_sample(const AttentionWeights& w, const Mat& x, const Mat& dy, AttentionWeights& g) {
  AttnCache c;
  attn_forward(w, x, c);
  const Eigen::Index C = x.cols(), dh = C / w.heads;
  const double scale = 1.0 / std::sqrt(double(dh));
  const Mat d_o = linear_backward(c.o, w.out_proj, dy, g.out_proj, nullptr);
  Mat d_qkv(x.rows(), 3 * C);
  for (int h = 0; h < w.heads; ++h) {
    const Mat& p = c.probs[h];
    const Mat q = c.qkv.middleCols(h * dh, dh);
    const Mat k = c.qkv.middleCols(C + h * dh, dh);
    const Mat v = c.qkv.middleCols(2 * C + h * dh, dh);
    const Mat d_oh = d_o.middleCols(h * dh, dh);
    const Mat d_p = d_oh * v.transpose();
    const Eigen::VectorXd row_dot = (d_p.array() * p.array()).rowwise().sum();
    const Mat d_s = (p.array() * (d_p.array().colwise() - row_dot.array())).matrix();
    d_qkv.middleCols(h * dh, dh) = d_s * k * scale;
    d_qkv.middleCols(C + h * dh, dh) = d_s.transpose() * q * scale;
    d_qkv.middleCols(2 * C + h * dh, dh) = p.transpose() * d_oh;
  }
  return linear_backward(x, w.qkv_proj, d_qkv, g.qkv_proj, nullptr);
}

Mat forward_sample(const EinFFTWeights& w, const Mat& x) {
  FFTCache c;
  return einfft_sample(w, x, c);
}

Mat backward_sample(const EinFFTWeights& w, const Mat& x, const Mat& dy, EinFFTWeights& g) {
  FFTCache c;
  einfft_sample(w, x, c);
  const Eigen::Index T = x.rows(), C = x.cols();
  // Output = Re(ifft2(Y2)), so dL/dY2 = fft2(dy) / T.
  CMat g_y2 = dy.cast<cplx>();
  fft::transform2d(g_y2, c.side, false);
  g_y2 /= static_cast<double>(T);
  const CMat g_z1 = block_mix_backward(c.z1, g_y2, w.w2_re, w.w2_im, c.sigma, w.blocks, g.w2_re, g.w2_im);
  CMat g_y1 = CMat::Zero(T, C);
  for (Eigen::Index f = 0; f < T; ++f)
    for (Eigen::Index ch = 0; ch < C; ++ch) {
      const cplx z = c.y1(f, ch);
      const double r = std::abs(z), b = w.bias(0, ch);
      if (r == 0.0 || r + b <= 0.0) continue;
      const cplx gw = g_z1(f, ch);
      const double proj = (std::conj(gw) * z).real();
      g_y1(f, ch) = gw * ((r + b) / r) - z * (b * proj / (r * r * r));
      g.bias(0, ch) += proj / r;
    }
  CMat g_f = block_mix_backward(c.f, g_y1, w.w1_re, w.w1_im, c.sigma, w.blocks, g.w1_re, g.w1_im);
  // F = fft2(x) has adjoint T * ifft2.
  fft::transform2d(g_f, c.side, true);
  return g_f.real() * static_cast<double>(T);
}

Mat forward_sample(const MLPWeights& w, const Mat& x) {
  check_mlp(w, x.cols());
  return linear(nn::apply(linear(x, w.w1, Mat()), nn::gelu), w.w2, Mat());
}

Mat backward_sample(const MLPWeights& w, const Mat& x, const Mat& dy, MLPWeights& g) {
  check_mlp(w, x.cols());
  const Mat h = linear(x, w.w1, Mat());
  const Mat a = nn::apply(h, nn::gelu);
  const Mat d_a = linear_backward(a, w.w2, dy, g.w2, nullptr);
  return linear_backward(x, w.w1, nn::apply_grad(h, d_a, nn::gelu_grad), g.w1, nullptr);
}

template <class W>
Tensor3 forward(const W& w, const Tensor3& x) {
  Tensor3 y(x.batch, x.tokens, x.channels);
  std::exception_ptr err;
#pragma omp parallel for schedule(static)
  for (int b = 0; b < x.batch; ++b) {
    try {
      y.sample(b) = forward_sample(w, Mat(x.sample(b)));
    } catch (...) {
#pragma omp critical(mvh_mixer_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return y;
}

template <class W>
Tensor3 backward(const W& w, const Tensor3& x, const Tensor3& dy, W& grads) {
  require(x.same_shape(dy), ErrorKind::ShapeMismatch, "cotangent shape differs from input shape");
  Tensor3 dx(x.batch, x.tokens, x.channels);
  for (int b = 0; b < x.batch; ++b) dx.sample(b) = backward_sample(w, Mat(x.sample(b)), Mat(dy.sample(b)), grads);
  return dx;
}

#define MVH_INSTANTIATE(W)                                   \
  template Tensor3 forward<W>(const W&, const Tensor3&); \
  template Tensor3 backward<W>(const W&, const Tensor3&, const Tensor3&, W&);
MVH_INSTANTIATE(MVWeights)
MVH_INSTANTIATE(ViMWeights)
MVH_INSTANTIATE(HydraWeights)
MVH_INSTANTIATE(AttentionWeights)
MVH_INSTANTIATE(EinFFTWeights)
MVH_INSTANTIATE(MLPWeights)
#undef MVH_INSTANTIATE

Tensor3 mv_mixer_forward(const MVWeights& w, const Tensor3& x) { return forward(w, x); }
Tensor3 vim_mixer_forward(const ViMWeights& w, const Tensor3& x) { return forward(w, x); }
Tensor3 hydra_mixer_forward(const HydraWeights& w, const Tensor3& x) { return forward(w, x); }
Tensor3 attention_forward(const AttentionWeights& w, const Tensor3& x) { return forward(w, x); }
Tensor3 einfft_forward(const EinFFTWeights& w, const Tensor3& x) { return forward(w, x); }
Tensor3 mlp_forward(const MLPWeights& w, const Tensor3& x) { return forward(w, x); }

const char* kind_name(const SequenceMixer& m) {
  static constexpr const char* names[] = {"mv", "vim", "hydra", "attention"};
  return names[m.index()];
}

const char* kind_name(const ChannelMixer& m) {
  static constexpr const char* names[] = {"einfft", "mlp"};
  return names[m.index()];
}

}  // namespace mvh::mix
