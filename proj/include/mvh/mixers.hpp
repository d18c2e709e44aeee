#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "mvh/fft.hpp"
#include "mvh/nn.hpp"
#include "mvh/spectral.hpp"

namespace mvh::mix {

using nn::Mat;
using nn::Tensor3;

/// Convolution, projections and selective SSM shared by every SSM-bearing mixer.
///   conv_w: E x 3, conv_b: 1 x E
///   x_proj: (rank + pairs*2*N) x E  producing [dt_low | B | C] (forward and
///           backward pairs for the bidirectional form)
///   dt_proj: E x rank, dt_bias: 1 x E
///   a_log:  E x N,  d: 1 x E
struct SelectiveBranch {
  Mat conv_w, conv_b, x_proj, dt_proj, dt_bias, a_log, d;

  int width() const { return static_cast<int>(a_log.rows()); }
  int state_dim() const { return static_cast<int>(a_log.cols()); }
  int rank() const { return static_cast<int>(dt_proj.cols()); }

  static SelectiveBranch init(Rng& rng, int width, int state_dim, int rank, int pairs, spectral::InitScheme scheme);

  template <class F>
  void visit(F&& f) {
    f("conv_w", conv_w), f("conv_b", conv_b), f("x_proj", x_proj), f("dt_proj", dt_proj);
    f("dt_bias", dt_bias), f("a_log", a_log), f("d", d);
  }
  template <class F>
  void visit(F&& f) const {
    f("conv_w", conv_w), f("conv_b", conv_b), f("x_proj", x_proj), f("dt_proj", dt_proj);
    f("dt_bias", dt_bias), f("a_log", a_log), f("d", d);
  }
};

/// MV mixer: in_proj to 2H channels, split (SSM | skip), symmetric convolutions
/// in both halves, selective scan on the first, concatenate, out_proj back to C.
struct MVWeights {
  Mat in_proj;  // 2H x C
  SelectiveBranch ssm;
  Mat skip_w, skip_b;  // H x 3, 1 x H
  Mat out_proj;        // C x 2H
  bool skip_activation = true;  // SiLU on the skip branch; off only for wiring tests

  static MVWeights init(Rng& rng, int channels, int state_dim, int rank,
                        spectral::InitScheme scheme = spectral::InitScheme::Cascaded);

  template <class F>
  void visit(F&& f) {
    f("in_proj", in_proj);
    ssm.visit([&](std::string_view n, Mat& m) { f(std::string("ssm.").append(n), m); });
    f("skip_w", skip_w), f("skip_b", skip_b), f("out_proj", out_proj);
  }
  template <class F>
  void visit(F&& f) const {
    f("in_proj", in_proj);
    ssm.visit([&](std::string_view n, const Mat& m) { f(std::string("ssm.").append(n), m); });
    f("skip_w", skip_w), f("skip_b", skip_b), f("out_proj", out_proj);
  }
};

/// Vision-Mamba style mixer: causal forward and anti-causal backward
/// branches with separate parameters, summed and gated by SiLU(z).
struct ViMWeights {
  Mat in_proj;  // 2E x C  producing [x | z]
  SelectiveBranch fwd, bwd;
  Mat out_proj;  // C x E

  static ViMWeights init(Rng& rng, int channels, int state_dim, int rank,
                         spectral::InitScheme scheme = spectral::InitScheme::Cascaded);

  template <class F>
  void visit(F&& f) {
    f("in_proj", in_proj);
    fwd.visit([&](std::string_view n, Mat& m) { f(std::string("fwd.").append(n), m); });
    bwd.visit([&](std::string_view n, Mat& m) { f(std::string("bwd.").append(n), m); });
    f("out_proj", out_proj);
  }
  template <class F>
  void visit(F&& f) const {
    f("in_proj", in_proj);
    fwd.visit([&](std::string_view n, const Mat& m) { f(std::string("fwd.").append(n), m); });
    bwd.visit([&](std::string_view n, const Mat& m) { f(std::string("bwd.").append(n), m); });
    f("out_proj", out_proj);
  }
};

/// Hydra mixer: one symmetric convolution, shared step size and eigenvalues,
/// separate B/C for the two directions, quasiseparable combination
/// (forward + backward - backward diagonal + D), gated by SiLU(z).
struct HydraWeights {
  Mat in_proj;  // 2E x C
  SelectiveBranch ssm;  // x_proj carries two (B, C) pairs
  Mat out_proj;         // C x E

  static HydraWeights init(Rng& rng, int channels, int state_dim, int rank,
                           spectral::InitScheme scheme = spectral::InitScheme::Uniform);

  template <class F>
  void visit(F&& f) {
    f("in_proj", in_proj);
    ssm.visit([&](std::string_view n, Mat& m) { f(std::string("ssm.").append(n), m); });
    f("out_proj", out_proj);
  }
  template <class F>
  void visit(F&& f) const {
    f("in_proj", in_proj);
    ssm.visit([&](std::string_view n, const Mat& m) { f(std::string("ssm.").append(n), m); });
    f("out_proj", out_proj);
  }
};

struct AttentionWeights {
  Mat qkv_proj;  // 3C x C, rows [q | k | v]
  Mat out_proj;  // C x C
  int heads = 1;

  static AttentionWeights init(Rng& rng, int channels, int heads);

  template <class F>
  void visit(F&& f) {
    f("qkv_proj", qkv_proj), f("out_proj", out_proj);
  }
  template <class F>
  void visit(F&& f) const {
    f("qkv_proj", qkv_proj), f("out_proj", out_proj);
  }
};

/// Spatial-DFT channel mixer. Each block b holds complex cb x cb matrices
/// W1_b, W2_b stored as rows [b*cb, (b+1)*cb) of the re/im parts.
/// Frequencies in the upper half-plane use W, their mirrors conj(W) and
/// self-mirrored frequencies Re(W), which keeps the spectrum Hermitian.
struct EinFFTWeights {
  Mat w1_re, w1_im, w2_re, w2_im;  // C x cb
  Mat bias;                        // 1 x C, modReLU bias
  int blocks = 1;

  int block_size() const { return static_cast<int>(w1_re.cols()); }
  static EinFFTWeights init(Rng& rng, int channels, int blocks);
  static EinFFTWeights identity(int channels, int blocks);

  template <class F>
  void visit(F&& f) {
    f("w1_re", w1_re), f("w1_im", w1_im), f("w2_re", w2_re), f("w2_im", w2_im), f("bias", bias);
  }
  template <class F>
  void visit(F&& f) const {
    f("w1_re", w1_re), f("w1_im", w1_im), f("w2_re", w2_re), f("w2_im", w2_im), f("bias", bias);
  }
};

struct MLPWeights {
  Mat w1;  // 4C x C
  Mat w2;  // C x 4C

  static MLPWeights init(Rng& rng, int channels);

  template <class F>
  void visit(F&& f) {
    f("w1", w1), f("w2", w2);
  }
  template <class F>
  void visit(F&& f) const {
    f("w1", w1), f("w2", w2);
  }
};

/// Largest tolerated imaginary residual after the inverse transform.
inline constexpr double kImagResidualTol = 1e-6;

/// modReLU(z) = relu(|z| + b) z / |z|, and 0 at z = 0.
fft::cplx modrelu(fft::cplx z, double b);

// Single-sample transforms on tokens x channels matrices.
Mat forward_sample(const MVWeights& w, const Mat& x);
Mat forward_sample(const ViMWeights& w, const Mat& x);
Mat forward_sample(const HydraWeights& w, const Mat& x);
Mat forward_sample(const AttentionWeights& w, const Mat& x);
Mat forward_sample(const EinFFTWeights& w, const Mat& x);
Mat forward_sample(const MLPWeights& w, const Mat& x);

// Reverse-mode passes: accumulate into grads, return dL/dx.
Mat backward_sample(const MVWeights& w, const Mat& x, const Mat& dy, MVWeights& grads);
Mat backward_sample(const ViMWeights& w, const Mat& x, const Mat& dy, ViMWeights& grads);
Mat backward_sample(const HydraWeights& w, const Mat& x, const Mat& dy, HydraWeights& grads);
Mat backward_sample(const AttentionWeights& w, const Mat& x, const Mat& dy, AttentionWeights& grads);
Mat backward_sample(const EinFFTWeights& w, const Mat& x, const Mat& dy, EinFFTWeights& grads);
Mat backward_sample(const MLPWeights& w, const Mat& x, const Mat& dy, MLPWeights& grads);

/// Softmax attention probabilities of one head (tokens x tokens).
Mat attention_probs(const AttentionWeights& w, const Mat& x, int head);

/// Batch-parallel forward over every sample of x.
template <class W>
Tensor3 forward(const W& w, const Tensor3& x);
/// Serial reverse pass over the batch; grads accumulate across samples.
template <class W>
Tensor3 backward(const W& w, const Tensor3& x, const Tensor3& dy, W& grads);

Tensor3 mv_mixer_forward(const MVWeights& w, const Tensor3& x);
Tensor3 vim_mixer_forward(const ViMWeights& w, const Tensor3& x);
Tensor3 hydra_mixer_forward(const HydraWeights& w, const Tensor3& x);
Tensor3 attention_forward(const AttentionWeights& w, const Tensor3& x);
Tensor3 einfft_forward(const EinFFTWeights& w, const Tensor3& x);
Tensor3 mlp_forward(const MLPWeights& w, const Tensor3& x);

using SequenceMixer = std::variant<MVWeights, ViMWeights, HydraWeights, AttentionWeights>;
using ChannelMixer = std::variant<EinFFTWeights, MLPWeights>;

const char* kind_name(const SequenceMixer& m);
const char* kind_name(const ChannelMixer& m);

}  // namespace mvh::mix
