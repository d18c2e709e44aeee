#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mvh/rng.hpp"
#include "mvh/scan.hpp"

namespace mvh::nn {

using Mat = ssm::Mat;
using ConstMatMap = Eigen::Map<const Mat>;
using MatMap = Eigen::Map<Mat>;

/// Activation carrier: batch x tokens x channels, row-major per sample.
struct Tensor3 {
  int batch = 0;
  int tokens = 0;
  int channels = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int b, int t, int c) : batch(b), tokens(t), channels(c), data(static_cast<std::size_t>(b) * t * c, 0.0) {}

  MatMap sample(int b) { return {data.data() + static_cast<std::size_t>(b) * tokens * channels, tokens, channels}; }
  ConstMatMap sample(int b) const {
    return {data.data() + static_cast<std::size_t>(b) * tokens * channels, tokens, channels};
  }
  bool same_shape(const Tensor3& o) const { return batch == o.batch && tokens == o.tokens && channels == o.channels; }
  bool all_finite() const;
  /// Side of the square token grid; throws NonSquareGrid when tokens is not a perfect square.
  int grid_side() const;
};

int square_side(int tokens);

// Elementwise activations and their derivatives.
double silu(double x);
double silu_grad(double x);
/// Exact GELU, x * Phi(x).
double gelu(double x);
double gelu_grad(double x);

/// Y = X W^T + b. W is out x in; b is 1 x out (may be empty).
Mat linear(const Mat& x, const Mat& w, const Mat& b);
/// Accumulates dW and db, returns dX.
Mat linear_backward(const Mat& x, const Mat& w, const Mat& dy, Mat& dw, Mat* db);

/// Depthwise 1-D convolution along tokens with zero padding:
///   y[k, c] = b[c] + sum_j w[c, j] x[k + j - offset, c]
/// offset = (width-1)/2 gives the symmetric kernel, offset = width-1 the causal
/// one, offset = 0 the anti-causal one.
Mat conv1d(const Mat& x, const Mat& w, const Mat& b, int offset);
Mat conv1d_backward(const Mat& x, const Mat& w, const Mat& dy, int offset, Mat& dw, Mat& db);

Mat apply(const Mat& x, double (*f)(double));
/// dy * f'(x) elementwise.
Mat apply_grad(const Mat& x, const Mat& dy, double (*df)(double));

struct LayerNormWeights {
  Mat gamma;  // 1 x C
  Mat beta;   // 1 x C
  double eps = 1e-6;

  static LayerNormWeights identity(int channels, double eps = 1e-6);
  template <class F>
  void visit(F&& f) {
    f("gamma", gamma);
    f("beta", beta);
  }
  template <class F>
  void visit(F&& f) const {
    f("gamma", gamma);
    f("beta", beta);
  }
};

Mat layer_norm(const LayerNormWeights& w, const Mat& x);
Mat layer_norm_backward(const LayerNormWeights& w, const Mat& x, const Mat& dy, LayerNormWeights& grads);

Mat randn(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev);

/// Zeroed copy with the same parameter shapes, usable as a gradient buffer.
template <class W>
W zeros_like(const W& w) {
  W out = w;
  out.visit([](std::string_view, Mat& m) { m.setZero(); });
  return out;
}

template <class W>
std::size_t parameter_count(const W& w) {
  std::size_t n = 0;
  w.visit([&](std::string_view, const Mat& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

}  // namespace mvh::nn
