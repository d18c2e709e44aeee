#include "mvh/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mvh/error.hpp"
#include "mvh/quadrature.hpp"

namespace mvh::spectral {

namespace {
constexpr cplx kI{0.0, 1.0};
}

TransferFunction::TransferFunction(std::vector<cplx> eigenvalues, std::vector<cplx> residues,
                                   double feedthrough)
    : eigenvalues_(std::move(eigenvalues)), residues_(std::move(residues)), feedthrough_(feedthrough) {
  require(eigenvalues_.size() == residues_.size(), ErrorKind::LengthMismatch,
          "eigenvalue count " + std::to_string(eigenvalues_.size()) + " != residue count " +
              std::to_string(residues_.size()));
  for (const auto& a : eigenvalues_) {
    require(a.real() < 0.0, ErrorKind::DomainError, "eigenvalue real part must be strictly negative");
  }
}

TransferFunction TransferFunction::from_real(std::span<const double> lambdas, std::span<const double> residues,
                                             double feedthrough) {
  std::vector<cplx> a, c;
  a.reserve(lambdas.size());
  for (double l : lambdas) a.emplace_back(-l, 0.0);
  for (double r : residues) c.emplace_back(r, 0.0);
  return {std::move(a), std::move(c), feedthrough};
}

bool TransferFunction::real_spectrum() const {
  return std::all_of(eigenvalues_.begin(), eigenvalues_.end(), [](cplx a) { return a.imag() == 0.0; });
}

double TransferFunction::max_imag() const {
  double m = 0.0;
  for (const auto& a : eigenvalues_) m = std::max(m, std::abs(a.imag()));
  return m;
}

double TransferFunction::max_modulus() const {
  double m = 0.0;
  for (const auto& a : eigenvalues_) m = std::max(m, std::abs(a));
  return m;
}

FrequencyInterval::FrequencyInterval(double lo_, double hi_) : lo(lo_), hi(hi_) {
  require(lo >= 0.0 && std::isfinite(lo), ErrorKind::InvalidArgument, "interval lower bound must be finite and >= 0");
  require(hi > lo, ErrorKind::InvalidArgument, "interval upper bound must exceed lower bound");
}

std::vector<double> EigenInit::magnitudes() const {
  require(order >= 1, ErrorKind::InvalidArgument, "init order must be positive");
  std::vector<double> out(static_cast<std::size_t>(order));
  for (int j = 0; j < order; ++j) out[j] = scheme == InitScheme::Cascaded ? j + 1.0 : 1.0;
  return out;
}

const char* to_string(InitScheme s) { return s == InitScheme::Cascaded ? "cascaded" : "uniform"; }

InitScheme parse_init_scheme(std::string_view name) {
  if (name == "cascaded" || name == "Cascaded") return InitScheme::Cascaded;
  if (name == "uniform" || name == "Uniform") return InitScheme::Uniform;
  throw Error(ErrorKind::InvalidArgument, "unknown init scheme '" + std::string(name) + "'");
}

cplx transfer_eval(const TransferFunction& g, double s) {
  cplx sum{g.feedthrough(), 0.0};
  const auto& a = g.eigenvalues();
  const auto& c = g.residues();
  for (std::size_t j = 0; j < g.order(); ++j) sum += c[j] / (kI * s - a[j]);
  return sum;
}

double derivative_magnitude(const TransferFunction& g, double s) {
  cplx sum{0.0, 0.0};
  const auto& a = g.eigenvalues();
  const auto& c = g.residues();
  for (std::size_t j = 0; j < g.order(); ++j) {
    const cplx den = kI * s - a[j];
    sum += -kI * c[j] / (den * den);
  }
  return std::abs(sum);
}

double total_variation_quadrature(const TransferFunction& g, const FrequencyInterval& iv, double rel_tol) {
  require(rel_tol > 0.0 && rel_tol < 1.0, ErrorKind::InvalidArgument, "rel_tol must lie in (0, 1)");
  if (g.order() == 0) return 0.0;
  auto f = [&g](double s) { return derivative_magnitude(g, s); };
  quad::Options opt;
  opt.rel_tol = rel_tol;
  opt.max_panels = 10000;
  if (iv.unbounded()) return quad::integrate_to_infinity(f, iv.lo, opt).value;
  return quad::integrate(f, iv.lo, iv.hi, opt).value;
}

double total_variation_termwise(const TransferFunction& g, const FrequencyInterval& iv, double rel_tol) {
  require(rel_tol > 0.0 && rel_tol < 1.0, ErrorKind::InvalidArgument, "rel_tol must lie in (0, 1)");
  if (g.order() == 0) return 0.0;
  auto f = [&g](double s) {
    double sum = 0.0;
    for (std::size_t j = 0; j < g.order(); ++j) sum += std::abs(g.residues()[j]) / std::norm(kI * s - g.eigenvalues()[j]);
    return sum;
  };
  quad::Options opt;
  opt.rel_tol = rel_tol;
  opt.max_panels = 10000;
  if (iv.unbounded()) return quad::integrate_to_infinity(f, iv.lo, opt).value;
  return quad::integrate(f, iv.lo, iv.hi, opt).value;
}

double tv_highfreq_bound_complex(const TransferFunction& g, double omega0) {
  require(omega0 > g.max_imag(), ErrorKind::InvalidThreshold,
          "omega0 = " + std::to_string(omega0) + " must exceed max |w_j| = " + std::to_string(g.max_imag()));
  const auto& a = g.eigenvalues();
  const auto& c = g.residues();
  double sum = 0.0;
  for (std::size_t j = 0; j < g.order(); ++j) sum += std::abs(c[j]) / std::abs(a[j].imag() - omega0);
  return sum;
}

namespace {
void require_real(const TransferFunction& g) {
  require(g.real_spectrum(), ErrorKind::NotRealSpectrum, "formula requires purely real eigenvalues");
}
}  // namespace

double tv_highfreq_exact_real(const TransferFunction& g, double omega0) {
  require_real(g);
  require(omega0 >= 0.0, ErrorKind::InvalidThreshold, "omega0 must be >= 0");
  const auto& a = g.eigenvalues();
  const auto& c = g.residues();
  double sum = 0.0;
  for (std::size_t j = 0; j < g.order(); ++j) {
    const double lambda = std::abs(a[j].real());
    // pi/2 - atan(x) == atan(1/x) for x > 0; the latter keeps precision at large x.
    const double tail = omega0 > 0.0 ? std::atan(lambda / omega0) : std::numbers::pi / 2.0;
    sum += std::abs(c[j]) / lambda * tail;
  }
  return sum;
}

double tv_highfreq_approx_real(const TransferFunction& g, double omega0) {
  require_real(g);
  const auto& a = g.eigenvalues();
  const auto& c = g.residues();
  double sum = 0.0;
  for (std::size_t j = 0; j < g.order(); ++j) sum += std::abs(c[j]) / std::hypot(a[j].real(), omega0);
  return sum;
}

std::vector<double> magnitude_response(const TransferFunction& g, std::span<const double> omegas) {
  require(!omegas.empty(), ErrorKind::InvalidArgument, "frequency list is empty");
  std::vector<double> out;
  out.reserve(omegas.size());
  for (double w : omegas) {
    require(w >= 0.0, ErrorKind::InvalidArgument, "frequencies must be >= 0");
    out.push_back(std::abs(transfer_eval(g, w)));
  }
  return out;
}

double loglog_slope(const TransferFunction& g, std::span<const double> omegas) {
  require(omegas.size() >= 2, ErrorKind::InvalidArgument, "slope needs at least two frequencies");
  const auto mags = magnitude_response(g, omegas);
  double mx = 0, my = 0;
  const double n = static_cast<double>(omegas.size());
  std::vector<double> xs(omegas.size()), ys(omegas.size());
  for (std::size_t i = 0; i < omegas.size(); ++i) {
    xs[i] = std::log10(omegas[i]);
    ys[i] = std::log10(mags[i]);
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

TransferFunction build_init(const EigenInit& init, std::span<const cplx> residues, double feedthrough) {
  require(residues.size() == static_cast<std::size_t>(init.order), ErrorKind::LengthMismatch,
          "residue count must equal init order");
  std::vector<cplx> a;
  for (double l : init.magnitudes()) a.emplace_back(-l, 0.0);
  return {std::move(a), std::vector<cplx>(residues.begin(), residues.end()), feedthrough};
}

std::vector<double> logspace(double lo, double hi, std::size_t n) {
  require(lo > 0.0 && hi >= lo, ErrorKind::InvalidArgument, "logspace needs 0 < lo <= hi");
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  const double l0 = std::log10(lo), l1 = std::log10(hi);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::pow(10.0, l0 + (l1 - l0) * static_cast<double>(i) / (n - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

}  // namespace mvh::spectral
