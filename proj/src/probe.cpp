#include "mvh/probe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/QR>

#include "mvh/error.hpp"

namespace mvh::probe {

const char* to_string(BandKind k) {
  switch (k) {
    case BandKind::LowBand: return "low";
    case BandKind::HighBand: return "high";
    case BandKind::Custom: return "custom";
  }
  return "?";
}

FrequencyTarget make_target(const Band& band, const ProbeSettings& s, Rng& rng) {
  require(band.lo >= 0.0 && band.hi > band.lo, ErrorKind::InvalidArgument,
          "band must satisfy hi > lo >= 0, got [" + std::to_string(band.lo) + ", " + std::to_string(band.hi) + "]");
  require(s.dt > 0.0 && band.hi * s.dt < std::numbers::pi, ErrorKind::InvalidArgument,
          "band upper edge " + std::to_string(band.hi) + " exceeds the Nyquist limit for dt " + std::to_string(s.dt));
  require(s.seq_len >= 1 && s.components >= 1, ErrorKind::InvalidArgument, "seq_len and components must be >= 1");
  std::vector<double> omega(s.components), phase(s.components);
  for (int m = 0; m < s.components; ++m) {
    omega[m] = rng.uniform(band.lo, band.hi);
    phase[m] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  FrequencyTarget t{band, s.seq_len, s.dt, std::vector<double>(s.seq_len, 0.0)};
  double power = 0.0;
  for (int k = 0; k < s.seq_len; ++k) {
    for (int m = 0; m < s.components; ++m) t.values[k] += std::cos(omega[m] * k * s.dt + phase[m]);
    power += t.values[k] * t.values[k];
  }
  const double rms = std::sqrt(power / s.seq_len);
  require(rms > 0.0, ErrorKind::NumericalFailure, "generated target has zero power");
  for (double& v : t.values) v /= rms;
  return t;
}

FrequencyTarget make_target(const Band& band, const ProbeSettings& s, std::uint64_t seed) {
  const std::uint64_t key = Rng::splitmix64(std::bit_cast<std::uint64_t>(band.lo)) ^ std::bit_cast<std::uint64_t>(band.hi);
  Rng rng = Rng::derive(seed, key);
  return make_target(band, s, rng);
}

Mat feature_matrix(std::span<const double> eigs, int seq_len, double dt) {
  Mat f(seq_len, static_cast<Eigen::Index>(eigs.size()));
  for (std::size_t j = 0; j < eigs.size(); ++j) {
    const double a = eigs[j];
    require(a < 0.0 && std::isfinite(a), ErrorKind::DomainError, "probe eigenvalues must be negative reals");
    const double a_bar = std::exp(a * dt);
    const double b_bar = std::expm1(a * dt) / a;
    double x = 0.0;
    for (int k = 0; k < seq_len; ++k) {
      x = a_bar * x + b_bar;
      f(k, static_cast<Eigen::Index>(j)) = x;
    }
  }
  return f;
}

Fit fit_residues(std::span<const double> eigs, const FrequencyTarget& target, double ridge) {
  require(ridge >= 0.0, ErrorKind::InvalidArgument, "ridge must be >= 0");
  require(!eigs.empty(), ErrorKind::InvalidArgument, "at least one eigenvalue is required");
  require(target.band.hi * target.dt < std::numbers::pi, ErrorKind::InvalidArgument,
          "target violates the Nyquist limit");
  const Mat f = feature_matrix(eigs, target.seq_len, target.dt);
  const Eigen::Index T = f.rows(), N = f.cols();
  const Eigen::Map<const Eigen::VectorXd> y(target.values.data(), T);

  // Ridge as extra rows sqrt(ridge) I keeps the solve in QR form.
  Eigen::MatrixXd a(T + (ridge > 0.0 ? N : 0), N);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(a.rows());
  a.topRows(T) = f;
  rhs.head(T) = y;
  if (ridge > 0.0) a.bottomRows(N) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(N, N);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (ridge == 0.0) {
    qr.setThreshold(1e-12);
    require(qr.rank() == N, ErrorKind::SingularSystem,
            "feature matrix has rank " + std::to_string(qr.rank()) + " < " + std::to_string(N) + " with ridge = 0");
  }
  const Eigen::VectorXd c = qr.solve(rhs);
  const double rmse = std::sqrt((f * c - y).squaredNorm() / double(T));
  return {std::vector<double>(c.data(), c.data() + N), rmse};
}

std::vector<double> init_eigs(const spectral::EigenInit& init) {
  auto m = init.magnitudes();
  for (double& v : m) v = -v;
  return m;
}

Band low_band(const spectral::EigenInit& init) {
  const auto m = init.magnitudes();
  return {0.0, 0.5 * *std::min_element(m.begin(), m.end()), BandKind::LowBand};
}

Band high_band(const spectral::EigenInit& init) {
  const auto m = init.magnitudes();
  const double top = *std::max_element(m.begin(), m.end());
  return {4.0 * top, 8.0 * top, BandKind::HighBand};
}

std::vector<ProbeResult> bias_sweep(const std::vector<spectral::EigenInit>& inits, const std::vector<Band>& bands,
                                    int seeds, const ProbeSettings& s, std::uint64_t base_seed) {
  require(seeds >= 1, ErrorKind::InvalidArgument, "seeds must be >= 1");
  const std::size_t cells = inits.size() * bands.size() * static_cast<std::size_t>(seeds);
  std::vector<ProbeResult> out(cells);
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (long long idx = 0; idx < static_cast<long long>(cells); ++idx) {
    const std::size_t i = static_cast<std::size_t>(idx);
    const std::size_t seed_i = i % seeds, band_i = (i / seeds) % bands.size(), init_i = i / (seeds * bands.size());
    try {
      const std::uint64_t seed = base_seed + seed_i;
      const auto target = make_target(bands[band_i], s, seed);
      const auto eigs = init_eigs(inits[init_i]);
      out[i] = {inits[init_i], bands[band_i], seed, fit_residues(eigs, target, s.ridge).rmse};
    } catch (...) {
#pragma omp critical(mvh_probe_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

std::vector<CellSummary> summarize(const std::vector<ProbeResult>& results) {
  std::vector<CellSummary> cells;
  std::vector<std::vector<double>> values;
  for (const auto& r : results) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const CellSummary& c) {
      return c.init.scheme == r.init.scheme && c.init.order == r.init.order && c.band.lo == r.band.lo &&
             c.band.hi == r.band.hi;
    });
    if (it == cells.end()) {
      cells.push_back({r.init, r.band});
      values.emplace_back();
      it = cells.end() - 1;
    }
    values[static_cast<std::size_t>(it - cells.begin())].push_back(r.rmse);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto& v = values[i];
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    cells[i].count = static_cast<int>(v.size());
    cells[i].mean = mean;
    cells[i].std = std::sqrt(var / n);
    cells[i].median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  }
  return cells;
}

Contrast low_high_contrast(const spectral::EigenInit& init, std::uint64_t seed, const ProbeSettings& s) {
  const auto eigs = init_eigs(init);
  Contrast c{init};
  c.low_err = fit_residues(eigs, make_target(low_band(init), s, seed), s.ridge).rmse;
  c.high_err = fit_residues(eigs, make_target(high_band(init), s, seed), s.ridge).rmse;
  c.ratio = c.low_err > 0.0 ? c.high_err / c.low_err : std::numeric_limits<double>::quiet_NaN();
  return c;
}

std::string to_csv(const std::vector<ProbeResult>& results) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "init,N,band_lo,band_hi,seed,rmse\n";
  for (const auto& r : results)
    ss << spectral::to_string(r.init.scheme) << ',' << r.init.order << ',' << r.band.lo << ',' << r.band.hi << ','
       << r.seed << ',' << r.rmse << '\n';
  return ss.str();
}

}  // namespace mvh::probe
