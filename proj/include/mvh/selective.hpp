#pragma once

#include <vector>

#include "mvh/scan.hpp"

namespace mvh::ssm {

/// Lower bound added after softplus so every step size stays strictly positive.
inline constexpr double kDeltaFloor = 1e-4;

double softplus(double x);
/// d softplus / dx (the logistic function).
double softplus_grad(double x);
inline double delta_from_raw(double raw) { return softplus(raw) + kDeltaFloor; }

/// Input-dependent SSM parameters for one sequence.
///   delta: tokens x channels (strictly positive)
///   b, c:  tokens x state_dim (shared across channels)
struct SelectiveParams {
  Mat delta;
  Mat b;
  Mat c;
};

/// Saved forward state for the reverse pass.
struct SelectiveCache {
  std::vector<double> h;  // visit-order states, index (p * channels + e) * state_dim + n
  bool reverse = false;
};

struct SelectiveGrads {
  Mat delta;
  Mat b;
  Mat c;
  Mat eigs;  // dL/dA for the realized eigenvalue matrix (channels x state_dim)
  Mat u;
};

/// Per channel e and token k (visited back-to-front when reverse is set):
///   h_k = exp(delta_k A_e) h_prev + ((exp(delta_k A_e) - 1) / A_e) B_k u_k
///   y_k = <C_k, h_k>
/// eigs is channels x state_dim with strictly negative entries; u is tokens x channels.
/// The feedthrough term is left to the caller.
Mat selective_scan_forward(const SelectiveParams& p, const Mat& eigs, const Mat& u, bool reverse,
                           SelectiveCache* cache = nullptr);

SelectiveGrads selective_scan_backward(const SelectiveParams& p, const Mat& eigs, const Mat& u, const Mat& dy,
                                       const SelectiveCache& cache);

/// Full selective scan with feedthrough: y = scan(u) + u * diag(d), A = -exp(a_log).
Mat scan_selective(const SelectiveParams& p, const ALogParam& a, std::span<const double> d, const Mat& u);

}  // namespace mvh::ssm
