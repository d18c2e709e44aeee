#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvh/nn.hpp"
#include "mvh/spectral.hpp"

namespace mvh::probe {

using nn::Mat;

enum class BandKind { LowBand, HighBand, Custom };

struct Band {
  double lo = 0.0;
  double hi = 1.0;
  BandKind kind = BandKind::Custom;
};

struct ProbeSettings {
  int seq_len = 512;
  double dt = 0.01;
  int components = 4;   // sinusoids per target
  double ridge = 1e-8;
};

/// Unit-RMS sum of cosines with frequencies uniform in the band and uniform phases.
struct FrequencyTarget {
  Band band;
  int seq_len = 0;
  double dt = 0.0;
  std::vector<double> values;
};

/// Throws InvalidArgument unless hi > lo >= 0, hi * dt < pi, seq_len >= 1.
FrequencyTarget make_target(const Band& band, const ProbeSettings& s, Rng& rng);
/// Target stream shared by every init for a given (band, seed).
FrequencyTarget make_target(const Band& band, const ProbeSettings& s, std::uint64_t seed);

/// seq_len x N responses of each pole to a unit input at every step:
///   x_j[k] = exp(a_j dt) x_j[k-1] + ((1 - exp(a_j dt)) / -a_j)
Mat feature_matrix(std::span<const double> eigs, int seq_len, double dt);

struct Fit {
  std::vector<double> residues;
  double rmse = 0.0;
};

/// Exact regularized least squares for the readout residues. eigs must be
/// strictly negative. Throws SingularSystem when ridge = 0 and the features are
/// rank-deficient.
Fit fit_residues(std::span<const double> eigs, const FrequencyTarget& target, double ridge = 1e-8);

/// Negative eigenvalues -lambda_j of an init.
std::vector<double> init_eigs(const spectral::EigenInit& init);

/// [0, 0.5 min lambda] and [4 max lambda, 8 max lambda].
Band low_band(const spectral::EigenInit& init);
Band high_band(const spectral::EigenInit& init);

/// One sweep cell.
struct ProbeResult {
  spectral::EigenInit init;
  Band band;
  std::uint64_t seed = 0;
  double rmse = 0.0;
};

/// Full factorial over inits x bands x seeds 0..seeds-1 (seed offset by base_seed).
std::vector<ProbeResult> bias_sweep(const std::vector<spectral::EigenInit>& inits, const std::vector<Band>& bands,
                                    int seeds, const ProbeSettings& s = {}, std::uint64_t base_seed = 0);

struct CellSummary {
  spectral::EigenInit init;
  Band band;
  int count = 0;
  double mean = 0.0;
  double std = 0.0;  // population
  double median = 0.0;
};

/// Per (init, band) aggregates in first-appearance order.
std::vector<CellSummary> summarize(const std::vector<ProbeResult>& results);

/// Low/high error asymmetry of one init for one seed.
struct Contrast {
  spectral::EigenInit init;
  double low_err = 0.0;
  double high_err = 0.0;
  double ratio = 0.0;  // high_err / low_err, NaN when low_err == 0
};

Contrast low_high_contrast(const spectral::EigenInit& init, std::uint64_t seed, const ProbeSettings& s = {});

std::string to_csv(const std::vector<ProbeResult>& results);
const char* to_string(BandKind k);

}  // namespace mvh::probe
