#pragma once

#include <complex>
#include <cstddef>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace mvh::spectral {

using cplx = std::complex<double>;

/// Partial-fraction form of a diagonal continuous-time SSM:
///   G(is) = sum_j c_j / (i s - a_j) + D
/// Every pole must satisfy Re(a_j) < 0.
class TransferFunction {
 public:
  TransferFunction() = default;
  TransferFunction(std::vector<cplx> eigenvalues, std::vector<cplx> residues, double feedthrough = 0.0);

  /// Real poles -lambda_j with real residues.
  static TransferFunction from_real(std::span<const double> lambdas, std::span<const double> residues,
                                    double feedthrough = 0.0);

  const std::vector<cplx>& eigenvalues() const { return eigenvalues_; }
  const std::vector<cplx>& residues() const { return residues_; }
  double feedthrough() const { return feedthrough_; }
  std::size_t order() const { return eigenvalues_.size(); }

  bool real_spectrum() const;
  /// max_j |Im a_j|
  double max_imag() const;
  /// max_j |a_j|
  double max_modulus() const;

 private:
  std::vector<cplx> eigenvalues_;
  std::vector<cplx> residues_;
  double feedthrough_ = 0.0;
};

struct FrequencyInterval {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();

  FrequencyInterval() = default;
  FrequencyInterval(double lo_, double hi_);
  static FrequencyInterval from(double lo_) { return {lo_, std::numeric_limits<double>::infinity()}; }
  bool unbounded() const { return hi == std::numeric_limits<double>::infinity(); }
};

enum class InitScheme { Cascaded, Uniform };

/// Eigenvalue initialization: Cascaded gives lambda_j = j, Uniform gives lambda_j = 1.
struct EigenInit {
  InitScheme scheme = InitScheme::Cascaded;
  int order = 1;

  /// Positive magnitudes lambda_1..lambda_N.
  std::vector<double> magnitudes() const;
};

const char* to_string(InitScheme s);
InitScheme parse_init_scheme(std::string_view name);

cplx transfer_eval(const TransferFunction& g, double s);

/// |dG(is)/ds| = |sum_j -i c_j / (i s - a_j)^2|
double derivative_magnitude(const TransferFunction& g, double s);

/// Integral of |dG(is)/ds| over the interval, adaptive G10/K21 with a
/// 10,000 panel budget. Throws NonConvergence when the budget is exhausted.
double total_variation_quadrature(const TransferFunction& g, const FrequencyInterval& iv,
                                  double rel_tol = 1e-10);

/// Integral of sum_j |c_j| / |i s - a_j|^2, i.e. the sum of the per-pole
/// total variations. Equals total_variation_quadrature for a single pole and
/// bounds it from above otherwise (triangle inequality).
double total_variation_termwise(const TransferFunction& g, const FrequencyInterval& iv, double rel_tol = 1e-10);

/// Upper bound sum_j |c_j| / |w_j - omega0|; requires omega0 > max |w_j|.
double tv_highfreq_bound_complex(const TransferFunction& g, double omega0);

/// Closed form sum_j (|c_j|/lambda_j) (pi/2 - atan(omega0/lambda_j)) for real poles.
/// This is total_variation_termwise over [omega0, inf) in closed form; against the
/// true total variation it is exact for one pole (or coincident poles with
/// nonnegative residues) and an upper bound otherwise.
double tv_highfreq_exact_real(const TransferFunction& g, double omega0);

/// sum_j |c_j| / sqrt(lambda_j^2 + omega0^2) for real poles.
double tv_highfreq_approx_real(const TransferFunction& g, double omega0);

std::vector<double> magnitude_response(const TransferFunction& g, std::span<const double> omegas);

/// Least-squares slope of log10|G| against log10(omega) over the given frequencies.
double loglog_slope(const TransferFunction& g, std::span<const double> omegas);

TransferFunction build_init(const EigenInit& init, std::span<const cplx> residues, double feedthrough = 0.0);

/// n points log-spaced over [lo, hi], both ends included.
std::vector<double> logspace(double lo, double hi, std::size_t n);

}  // namespace mvh::spectral
