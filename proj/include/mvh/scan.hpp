#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mvh::ssm {

/// Scalar zero-order-hold discretization of x' = a x + b u.
struct ZohPair {
  double a_bar;
  double b_bar;
};

/// a_bar = exp(delta a), b_bar = (a_bar - 1) / a * b. Requires a < 0, delta > 0.
ZohPair discretize_zoh(double a, double b, double delta);

/// Discrete single-state LTI channel: x_k = a_bar x_{k-1} + b_bar u_k, y_k = c x_k + d u_k.
struct DiscreteSSM {
  double a_bar = 0.0;
  double b_bar = 1.0;
  double c = 1.0;
  double d = 0.0;
  double delta = 1.0;

  DiscreteSSM() = default;
  DiscreteSSM(double a_bar_, double b_bar_, double c_, double d_, double delta_ = 1.0);

  static DiscreteSSM from_continuous(double a, double b, double c, double d, double delta);
};

/// Serial reference scan. Kept as the correctness oracle for the parallel kernel.
std::vector<double> scan_sequential(const DiscreteSSM& ssm, std::span<const double> u);

/// Chunked two-pass scan under (a1, b1) o (a2, b2) = (a1 a2, a2 b1 + b2).
/// Chunks are reduced and rescanned in parallel; the carry pass is serial in
/// chunk order, so results are deterministic for a fixed chunk size.
std::vector<double> scan_parallel(const DiscreteSSM& ssm, std::span<const double> u, std::size_t chunk);

/// x_k = a_k x_{k-1} + b_k with x_{-1} = 0, written into x.
void linear_recurrence_sequential(std::span<const double> a, std::span<const double> b, std::span<double> x);
void linear_recurrence_chunked(std::span<const double> a, std::span<const double> b, std::span<double> x,
                               std::size_t chunk);

/// Forward scan plus reversed backward scan, with each token's own
/// contribution taken once (from the forward direction, feedthrough d_fwd).
/// Realizes the quasiseparable mixing matrix
///   M[k][m] = c_f a_f^(k-m) b_f (m < k), c_b a_b^(m-k) b_b (m > k), c_f b_f + d_f (m == k).
std::vector<double> scan_bidirectional(const DiscreteSSM& fwd, const DiscreteSSM& bwd, std::span<const double> u);

struct ScanGrads {
  double a_bar = 0.0;
  double b_bar = 0.0;
  double c = 0.0;
  double d = 0.0;
  std::vector<double> u;
};

/// Reverse-mode gradients of sum_k dy_k * y_k through scan_sequential.
ScanGrads scan_backward(const DiscreteSSM& ssm, std::span<const double> u, std::span<const double> dy);

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unconstrained log-magnitudes; the realized eigenvalues are A = -exp(a_log).
struct ALogParam {
  Mat a_log;
};

Mat realize_eigenvalues(const ALogParam& p);

/// Chain rule through A = -exp(a_log): dL/da_log = dL/dA * A.
Mat realize_eigenvalues_backward(const ALogParam& p, const Mat& d_eigs);

}  // namespace mvh::ssm
