#include "mvh/nn.hpp"

#include <cmath>
#include <numbers>

#include "mvh/error.hpp"

namespace mvh::nn {

bool Tensor3::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

int square_side(int tokens) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(tokens))));
  require(side * side == tokens, ErrorKind::NonSquareGrid,
          "token count " + std::to_string(tokens) + " is not a square grid");
  return side;
}

int Tensor3::grid_side() const { return square_side(tokens); }

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

double gelu(double x) { return 0.5 * x * std::erfc(-x / std::numbers::sqrt2); }

double gelu_grad(double x) {
  const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Mat linear(const Mat& x, const Mat& w, const Mat& b) {
  require(x.cols() == w.cols(), ErrorKind::ShapeMismatch,
          "linear: input width " + std::to_string(x.cols()) + " != weight fan-in " + std::to_string(w.cols()));
  Mat y = x * w.transpose();
  if (b.size() > 0) y.rowwise() += b.row(0);
  return y;
}

Mat linear_backward(const Mat& x, const Mat& w, const Mat& dy, Mat& dw, Mat* db) {
  dw.noalias() += dy.transpose() * x;
  if (db && db->size() > 0) *db += dy.colwise().sum();
  return dy * w;
}

Mat conv1d(const Mat& x, const Mat& w, const Mat& b, int offset) {
  require(w.rows() == x.cols(), ErrorKind::ShapeMismatch, "conv1d: kernel rows must equal channel count");
  const Eigen::Index T = x.rows(), C = x.cols(), K = w.cols();
  Mat y(T, C);
  for (Eigen::Index k = 0; k < T; ++k) {
    for (Eigen::Index c = 0; c < C; ++c) {
      double acc = b.size() > 0 ? b(0, c) : 0.0;
      for (Eigen::Index j = 0; j < K; ++j) {
        const Eigen::Index src = k + j - offset;
        if (src >= 0 && src < T) acc += w(c, j) * x(src, c);
      }
      y(k, c) = acc;
    }
  }
  return y;
}

Mat conv1d_backward(const Mat& x, const Mat& w, const Mat& dy, int offset, Mat& dw, Mat& db) {
  const Eigen::Index T = x.rows(), C = x.cols(), K = w.cols();
  Mat dx = Mat::Zero(T, C);
  for (Eigen::Index k = 0; k < T; ++k) {
    for (Eigen::Index c = 0; c < C; ++c) {
      const double g = dy(k, c);
      if (db.size() > 0) db(0, c) += g;
      for (Eigen::Index j = 0; j < K; ++j) {
        const Eigen::Index src = k + j - offset;
        if (src >= 0 && src < T) {
          dw(c, j) += g * x(src, c);
          dx(src, c) += g * w(c, j);
        }
      }
    }
  }
  return dx;
}

Mat apply(const Mat& x, double (*f)(double)) { return x.unaryExpr(f); }

Mat apply_grad(const Mat& x, const Mat& dy, double (*df)(double)) {
  return (dy.array() * x.unaryExpr(df).array()).matrix();
}

LayerNormWeights LayerNormWeights::identity(int channels, double eps) {
  return {Mat::Ones(1, channels), Mat::Zero(1, channels), eps};
}

Mat layer_norm(const LayerNormWeights& w, const Mat& x) {
  const Eigen::Index C = x.cols();
  require(w.gamma.cols() == C, ErrorKind::ShapeMismatch, "layer_norm: width mismatch");
  Mat y(x.rows(), C);
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    const double mean = x.row(k).mean();
    const double var = (x.row(k).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + w.eps);
    y.row(k) = ((x.row(k).array() - mean) * inv * w.gamma.row(0).array() + w.beta.row(0).array()).matrix();
  }
  return y;
}

Mat layer_norm_backward(const LayerNormWeights& w, const Mat& x, const Mat& dy, LayerNormWeights& grads) {
  const Eigen::Index C = x.cols();
  Mat dx(x.rows(), C);
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    const double mean = x.row(k).mean();
    const double var = (x.row(k).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + w.eps);
    const Eigen::ArrayXd xhat = ((x.row(k).array() - mean) * inv).transpose();
    const Eigen::ArrayXd g = dy.row(k).array().transpose();
    grads.gamma.row(0).array() += (g * xhat).transpose();
    grads.beta.row(0).array() += g.transpose();
    const Eigen::ArrayXd gh = g * w.gamma.row(0).array().transpose();
    const double mean_gh = gh.mean();
    const double mean_ghx = (gh * xhat).mean();
    dx.row(k) = (inv * (gh - mean_gh - xhat * mean_ghx)).matrix().transpose();
  }
  return dx;
}

Mat randn(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
  return m;
}

}  // namespace mvh::nn
