// mvh: command-line front end. Every subcommand writes into --out and is
// deterministic given its flags and --seed; wall-clock numbers live only under
// the "timing" key of JSON outputs.
//
// Exit codes
//   0  success
//   1  usage error (bad flag, unknown name, unwritable output)
//   2  invalid spectrum or threshold (spectra)
//   3  quadrature did not converge (spectra)
//   4  parallel scan disagrees with the sequential reference (scan-bench)
//   5  probe failure (probe)
//   6  non-finite activations (embed)
//   7  invalid input files or dataset (embed, eval)

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>

#include "mvh/backbone.hpp"
#include "mvh/error.hpp"
#include "mvh/eval.hpp"
#include "mvh/io.hpp"
#include "mvh/probe.hpp"
#include "mvh/rng.hpp"
#include "mvh/scan.hpp"
#include "mvh/spectral.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mvh;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kInvalidSpectrum = 2,
  kNonConvergence = 3,
  kBenchFailure = 4,
  kProbeFailure = 5,
  kNonFinite = 6,
  kInvalidInput = 7,
};

struct Failure {
  int code;
  std::string message;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Common {
  std::uint64_t seed = 42;
  std::string out = ".";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  sub->add_option("--out", c.out, "Output directory (created if missing)")->capture_default_str();
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path probe = fs::path(dir) / ".mvh_write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw Failure{kUsage, "output directory " + dir + " is not writable"};
  }
  fs::remove(probe, ec);
  return dir;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw Failure{kInvalidInput, std::string(what) + " file not found: " + path};
}

void write_json(const fs::path& path, const json& j) { io::write_atomic(path, j.dump(2) + "\n"); }

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------- spectra

spectral::cplx parse_complex(const std::string& s) {
  static const std::regex re(R"(^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?(?:([+-](?:\d+\.?\d*|\.\d+)?(?:[eE][+-]?\d+)?)i)?\s*$)");
  std::smatch m;
  if (s.empty() || !std::regex_match(s, m, re) || (!m[1].matched && !m[2].matched))
    throw Failure{kInvalidSpectrum, "cannot parse complex number '" + s + "'"};
  const double re_part = m[1].matched ? std::stod(m[1].str()) : 0.0;
  double im_part = 0.0;
  if (m[2].matched) {
    const std::string t = m[2].str();
    im_part = t == "+" ? 1.0 : t == "-" ? -1.0 : std::stod(t);
  }
  return {re_part, im_part};
}

struct SpectraArgs {
  Common common;
  std::string init = "cascaded";
  int order = 0;
  std::vector<std::string> eigs, residues;
  std::string omega0 = "1..1000";
  int points = 13;
  int sweep_points = 200;
  double rel_tol = 1e-10;
};

int run_spectra(const SpectraArgs& a) {
  const fs::path out = prepare_out(a.common.out);
  const Stopwatch clock;
  spectral::TransferFunction g;
  try {
    std::vector<spectral::cplx> res;
    for (const auto& s : a.residues) res.push_back(parse_complex(s));
    if (!a.eigs.empty()) {
      std::vector<spectral::cplx> eig;
      for (const auto& s : a.eigs) eig.push_back(parse_complex(s));
      if (res.empty()) res.assign(eig.size(), 1.0);
      g = spectral::TransferFunction(eig, res);
    } else {
      if (a.order < 1) throw Failure{kInvalidSpectrum, "--order must be >= 1 (or pass --eigs)"};
      const spectral::EigenInit init{spectral::parse_init_scheme(a.init), a.order};
      if (res.empty()) res.assign(static_cast<std::size_t>(a.order), 1.0);
      g = spectral::build_init(init, res);
    }
  } catch (const Error& e) {
    throw Failure{kInvalidSpectrum, e.what()};
  }

  std::vector<double> omegas;
  const auto dots = a.omega0.find("..");
  try {
    if (dots == std::string::npos) {
      omegas.push_back(std::stod(a.omega0));
    } else {
      const double lo = std::stod(a.omega0.substr(0, dots)), hi = std::stod(a.omega0.substr(dots + 2));
      if (!(lo > 0 && hi > lo) || a.points < 2) throw Failure{kInvalidSpectrum, "omega0 range must be 0 < lo < hi"};
      omegas = spectral::logspace(lo, hi, static_cast<std::size_t>(a.points));
    }
  } catch (const std::invalid_argument&) {
    throw Failure{kInvalidSpectrum, "cannot parse --omega0 '" + a.omega0 + "'"};
  }
  for (double w : omegas)
    if (!(w > 0.0)) throw Failure{kInvalidSpectrum, "omega0 must be positive"};
  if (!(a.rel_tol > 0.0)) throw Failure{kInvalidSpectrum, "--rel-tol must be positive"};

  json records = json::array();
  const bool real = g.real_spectrum();
  for (double w0 : omegas) {
    json r;
    r["omega0"] = w0;
    r["quadrature"] = spectral::total_variation_quadrature(g, spectral::FrequencyInterval::from(w0), a.rel_tol);
    if (real) {
      const double exact = spectral::tv_highfreq_exact_real(g, w0), approx = spectral::tv_highfreq_approx_real(g, w0);
      r["exact_real"] = exact;
      r["approx_real"] = approx;
      r["approx_over_exact"] = approx / exact;
    } else {
      r["exact_real"] = nullptr;
      r["approx_real"] = nullptr;
      r["approx_over_exact"] = nullptr;
    }
    r["complex_bound"] = spectral::tv_highfreq_bound_complex(g, w0);
    records.push_back(r);
  }

  double lo = INFINITY, hi = 0.0;
  for (const auto& e : g.eigenvalues()) {
    lo = std::min(lo, std::abs(e));
    hi = std::max(hi, std::abs(e));
  }
  std::ostringstream csv;
  csv << "omega,magnitude,derivative_magnitude\n";
  for (double w : spectral::logspace(1e-2 * lo, 1e3 * hi, static_cast<std::size_t>(std::max(2, a.sweep_points))))
    csv << fmt(w) << ',' << fmt(std::abs(spectral::transfer_eval(g, w))) << ','
        << fmt(spectral::derivative_magnitude(g, w)) << '\n';
  io::write_atomic(out / "spectra.csv", csv.str());

  json j;
  json eig = json::array(), res = json::array();
  for (std::size_t k = 0; k < g.order(); ++k) {
    eig.push_back({g.eigenvalues()[k].real(), g.eigenvalues()[k].imag()});
    res.push_back({g.residues()[k].real(), g.residues()[k].imag()});
  }
  j["eigenvalues"] = eig;
  j["residues"] = res;
  j["real_spectrum"] = real;
  j["rel_tol"] = a.rel_tol;
  j["records"] = records;
  j["timing"] = {{"seconds", clock.seconds()}};
  write_json(out / "tv.json", j);
  return kOk;
}

// ---------------------------------------------------------------- scan-bench

struct ScanBenchArgs {
  Common common;
  std::size_t len = 1 << 16;
  int state_dim = 16;
  std::vector<std::string> chunks{"1", "7", "64", "len"};
  int reps = 3;
  double delta = 0.01;
  double tol = 1e-6;
};

int run_scan_bench(const ScanBenchArgs& a) {
  const fs::path out = prepare_out(a.common.out);
  if (a.len < 1 || a.state_dim < 1 || a.reps < 1) throw Failure{kUsage, "--len, --state-dim and --reps must be >= 1"};
  std::vector<std::size_t> chunks;
  for (const auto& c : a.chunks) {
    if (c == "len") {
      chunks.push_back(a.len);
      continue;
    }
    std::size_t v = 0;
    try {
      v = std::stoul(c);
    } catch (const std::exception&) {
      throw Failure{kUsage, "bad chunk size '" + c + "'"};
    }
    if (v < 1) throw Failure{kUsage, "chunk sizes must be >= 1"};
    chunks.push_back(v);
  }

  Rng rng(a.common.seed);
  std::vector<double> u(a.len);
  for (double& v : u) v = rng.normal();
  std::vector<ssm::DiscreteSSM> channels;
  for (int j = 0; j < a.state_dim; ++j)
    channels.push_back(ssm::DiscreteSSM::from_continuous(-(j + 1.0), 1.0, 1.0, 0.0, a.delta));

  std::vector<std::vector<double>> ref;
  for (const auto& ch : channels) ref.push_back(ssm::scan_sequential(ch, u));

  json checks = json::array();
  bool ok = true;
  for (std::size_t chunk : chunks) {
    double worst = 0.0;
    for (std::size_t j = 0; j < channels.size(); ++j) {
      const auto par = ssm::scan_parallel(channels[j], u, chunk);
      double diff = 0.0, scale = 0.0;
      for (std::size_t k = 0; k < a.len; ++k) {
        diff = std::max(diff, std::abs(par[k] - ref[j][k]));
        scale = std::max(scale, std::abs(ref[j][k]));
      }
      worst = std::max(worst, scale > 0.0 ? diff / scale : diff);
    }
    const bool pass = worst <= a.tol;
    ok &= pass;
    checks.push_back({{"chunk", chunk}, {"max_rel_err", worst}, {"pass", pass}});
  }
  if (!ok) {
    std::cerr << "scan-bench: parallel scan disagrees with the sequential reference; refusing to time it\n"
              << checks.dump(2) << '\n';
    return kBenchFailure;
  }

  const double tokens = double(a.len) * a.state_dim * a.reps;
  auto time_it = [&](auto&& fn) {
    const Stopwatch sw;
    for (int r = 0; r < a.reps; ++r)
      for (const auto& ch : channels) fn(ch);
    const double s = sw.seconds();
    return json{{"seconds", s}, {"tokens_per_second", s > 0 ? tokens / s : 0.0}};
  };
  json timing;
  timing["threads"] = omp_get_max_threads();
  timing["sequential"] = time_it([&](const ssm::DiscreteSSM& ch) { return ssm::scan_sequential(ch, u); });
  json par = json::array();
  for (std::size_t chunk : chunks) {
    json t = time_it([&](const ssm::DiscreteSSM& ch) { return ssm::scan_parallel(ch, u, chunk); });
    t["chunk"] = chunk;
    par.push_back(t);
  }
  timing["parallel"] = par;

  json j;
  j["seq_len"] = a.len;
  j["state_dim"] = a.state_dim;
  j["delta"] = a.delta;
  j["tolerance"] = a.tol;
  j["checks"] = checks;
  j["timing"] = timing;
  write_json(out / "scan_bench.json", j);
  return kOk;
}

// ---------------------------------------------------------------- probe

struct ProbeArgs {
  Common common;
  std::vector<std::string> inits{"cascaded:8"};
  std::vector<std::string> bands{"low", "high"};
  int seeds = 100;
  probe::ProbeSettings settings;
};

spectral::EigenInit parse_init(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw Failure{kUsage, "init must look like scheme:N, got '" + s + "'"};
  try {
    const int n = std::stoi(s.substr(colon + 1));
    if (n < 1) throw Failure{kUsage, "init order must be >= 1"};
    return {spectral::parse_init_scheme(s.substr(0, colon)), n};
  } catch (const std::logic_error&) {
    throw Failure{kUsage, "bad init order in '" + s + "'"};
  }
}

int run_probe(const ProbeArgs& a) {
  const fs::path out = prepare_out(a.common.out);
  const Stopwatch clock;
  std::vector<spectral::EigenInit> inits;
  for (const auto& s : a.inits) inits.push_back(parse_init(s));

  std::vector<probe::ProbeResult> results;
  json contrasts = json::array();
  for (const auto& init : inits) {
    std::vector<probe::Band> bands;
    for (const auto& b : a.bands) {
      if (b == "low") {
        bands.push_back(probe::low_band(init));
      } else if (b == "high") {
        bands.push_back(probe::high_band(init));
      } else {
        const auto colon = b.find(':');
        try {
          if (colon == std::string::npos) throw std::invalid_argument(b);
          bands.push_back({std::stod(b.substr(0, colon)), std::stod(b.substr(colon + 1))});
        } catch (const std::logic_error&) {
          throw Failure{kUsage, "band must be low, high or lo:hi, got '" + b + "'"};
        }
      }
    }
    const auto r = probe::bias_sweep({init}, bands, a.seeds, a.settings, a.common.seed);
    results.insert(results.end(), r.begin(), r.end());

    const auto low = std::find(a.bands.begin(), a.bands.end(), "low") - a.bands.begin();
    const auto high = std::find(a.bands.begin(), a.bands.end(), "high") - a.bands.begin();
    if (low == static_cast<long>(a.bands.size()) || high == static_cast<long>(a.bands.size())) continue;
    std::vector<double> ratios;
    double low_sum = 0.0, high_sum = 0.0;
    int wins = 0;
    for (int s = 0; s < a.seeds; ++s) {
      const double lo = r[static_cast<std::size_t>(low * a.seeds + s)].rmse;
      const double hi = r[static_cast<std::size_t>(high * a.seeds + s)].rmse;
      low_sum += lo;
      high_sum += hi;
      ratios.push_back(hi / lo);
      wins += hi > lo;
    }
    std::sort(ratios.begin(), ratios.end());
    const std::size_t m = ratios.size() / 2;
    contrasts.push_back({{"init", spectral::to_string(init.scheme)},
                         {"N", init.order},
                         {"low_band", {bands[low].lo, bands[low].hi}},
                         {"high_band", {bands[high].lo, bands[high].hi}},
                         {"low_mean_rmse", low_sum / a.seeds},
                         {"high_mean_rmse", high_sum / a.seeds},
                         {"mean_ratio", high_sum / low_sum},
                         {"median_ratio", ratios.size() % 2 ? ratios[m] : 0.5 * (ratios[m - 1] + ratios[m])},
                         {"seeds_high_worse", wins},
                         {"seeds", a.seeds}});
  }
  io::write_atomic(out / "probe.csv", probe::to_csv(results));

  json cells = json::array();
  for (const auto& c : probe::summarize(results))
    cells.push_back({{"init", spectral::to_string(c.init.scheme)},
                     {"N", c.init.order},
                     {"band_lo", c.band.lo},
                     {"band_hi", c.band.hi},
                     {"count", c.count},
                     {"mean", c.mean},
                     {"std", c.std},
                     {"median", c.median}});
  json j;
  j["settings"] = {{"seq_len", a.settings.seq_len},
                   {"dt", a.settings.dt},
                   {"components", a.settings.components},
                   {"ridge", a.settings.ridge},
                   {"seeds", a.seeds},
                   {"base_seed", a.common.seed}};
  j["cells"] = cells;
  j["contrasts"] = contrasts;
  j["timing"] = {{"seconds", clock.seconds()}};
  write_json(out / "probe_summary.json", j);
  return kOk;
}

// ---------------------------------------------------------------- embed

struct EmbedArgs {
  Common common;
  std::string variant;
  std::string scale = "toy";
  int synthetic = 0;
  std::string images;
  std::string weights;
  std::string save_weights;
  int bins = 10;
};

backbone::ImageBatch synthetic_images(const backbone::BackboneConfig& cfg, int n, std::uint64_t seed) {
  backbone::ImageBatch b(n, cfg.in_channels, cfg.image_size, cfg.image_size);
  Rng rng = Rng::derive(seed, 0x1a6e);
  for (double& v : b.data) v = rng.uniform();
  return b;
}

backbone::ImageBatch load_images(const backbone::BackboneConfig& cfg, const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Failure{kInvalidInput, "no image files in " + dir};
  const int s = cfg.image_size;
  const std::size_t expect = static_cast<std::size_t>(s) * s * 3;
  backbone::ImageBatch b(static_cast<int>(files.size()), 3, s, s);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string bytes = io::read_file(files[i]);
    if (bytes.size() != expect)
      throw Failure{kInvalidInput, files[i].string() + ": expected " + std::to_string(expect) + " bytes of " +
                                       std::to_string(s) + "x" + std::to_string(s) + " RGB, got " +
                                       std::to_string(bytes.size())};
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x)
        for (int c = 0; c < 3; ++c)
          b.at(static_cast<int>(i), c, y, x) =
              static_cast<unsigned char>(bytes[(static_cast<std::size_t>(y) * s + x) * 3 + c]) / 255.0;
  }
  return b;
}

int run_embed(const EmbedArgs& a) {
  if ((a.synthetic > 0) == !a.images.empty()) throw Failure{kUsage, "pass exactly one of --synthetic N or --images DIR"};
  if (!a.images.empty() && !fs::is_directory(a.images)) throw Failure{kInvalidInput, "image directory not found: " + a.images};
  if (!a.weights.empty()) require_file(a.weights, "weights");
  backbone::BackboneConfig cfg;
  try {
    cfg = backbone::make_variant(backbone::parse_variant(a.variant), backbone::parse_scale(a.scale));
  } catch (const Error& e) {
    throw Failure{kUsage, e.what()};
  }
  const fs::path out = prepare_out(a.common.out);
  const Stopwatch clock;

  backbone::Weights w = backbone::init_weights(cfg, a.common.seed);
  if (!a.weights.empty()) io::from_tensors(io::read_mvw1(a.weights), w);
  if (!a.save_weights.empty()) io::write_mvw1(a.save_weights, io::to_tensors(w));
  const auto images = a.synthetic > 0 ? synthetic_images(cfg, a.synthetic, a.common.seed) : load_images(cfg, a.images);
  const auto result = backbone::forward(cfg, w, images);
  io::write_emb1(out / "embeddings.emb1", result.embedding);

  json j;
  j["variant"] = backbone::to_string(backbone::parse_variant(a.variant));
  j["scale"] = backbone::to_string(backbone::parse_scale(a.scale));
  j["seed"] = a.common.seed;
  j["weights"] = a.weights.empty() ? "random" : a.weights;
  j["images"] = images.batch;
  j["image_source"] = a.synthetic > 0 ? "synthetic" : "directory";
  j["embedding_dim"] = result.embedding.cols();
  j["parameters"] = backbone::parameter_count(cfg);
  if (backbone::has_ssm(cfg)) {
    const auto rep = backbone::eigen_report(w, a.bins);
    j["eigen_report"] = {{"count", rep.values.size()},
                         {"min", rep.min},
                         {"max", rep.max},
                         {"all_negative", rep.max < 0.0},
                         {"edges", rep.edges},
                         {"counts", rep.counts}};
  } else {
    j["eigen_report"] = nullptr;
    j["note"] = "NoSSMBlocks: variant has no state-space blocks";
  }
  j["timing"] = {{"seconds", clock.seconds()}};
  write_json(out / "embeddings.json", j);
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  Common common;
  std::optional<double> synthetic_beta;
  int studies = 8, patches = 60, latent = 8;
  std::string embeddings, expression, labels;
  int hvg = 0, hmhvg = 0, pool = 0;
  double alpha = 1.0;
  int folds = 10;
  std::string split = "random";
  bool compare = false;
};

json stat_json(const eval::Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }

int run_eval(const EvalArgs& a) {
  const bool files = !a.embeddings.empty() || !a.expression.empty() || !a.labels.empty();
  if (files == a.synthetic_beta.has_value())
    throw Failure{kUsage, "pass either --synthetic-beta or all of --embeddings/--expression/--labels"};
  if (a.hvg > 0 && a.hmhvg > 0) throw Failure{kUsage, "--hvg and --hmhvg are exclusive"};
  if (files) {
    require_file(a.embeddings, "embeddings");
    require_file(a.expression, "expression");
    require_file(a.labels, "labels");
  }
  const std::map<std::string, eval::SplitKind> kinds{
      {"random", eval::SplitKind::RandomKFold}, {"loso", eval::SplitKind::LOSO}, {"patient", eval::SplitKind::PatientKFold}};
  if (!kinds.count(a.split)) throw Failure{kUsage, "--split must be random, loso or patient"};
  const fs::path out = prepare_out(a.common.out);
  const Stopwatch clock;

  eval::ExpressionDataset ds;
  json dataset;
  if (files) {
    ds = eval::load_dataset(a.embeddings, a.expression, a.labels);
    dataset = {{"source", "files"}, {"embeddings", a.embeddings}, {"expression", a.expression}, {"labels", a.labels}};
  } else {
    eval::SynthOptions o;
    o.n_studies = a.studies;
    o.patches_per_study = a.patches;
    o.latent_dim = a.latent;
    o.beta = *a.synthetic_beta;
    o.seed = a.common.seed;
    ds = eval::synth_batch_dataset(o);
    dataset = {{"source", "synthetic"}, {"beta", o.beta}, {"studies", o.n_studies}, {"patches_per_study", o.patches_per_study}, {"latent_dim", o.latent_dim}};
  }
  dataset["patches"] = ds.patches();
  dataset["genes"] = ds.genes();

  std::vector<int> genes;
  json panel;
  if (a.hvg > 0) {
    genes = eval::select_hvg(ds, a.hvg);
    panel = {{"kind", "hvg"}, {"k", a.hvg}};
  } else if (a.hmhvg > 0) {
    genes = eval::select_hmhvg(ds, a.hmhvg, a.pool);
    panel = {{"kind", "hmhvg"}, {"k", a.hmhvg}, {"pool", a.pool > 0 ? a.pool : 2 * a.hmhvg}};
  } else {
    for (int g = 0; g < ds.genes(); ++g) genes.push_back(g);
    panel = {{"kind", "all"}, {"k", ds.genes()}};
  }
  json names = json::array();
  for (int g : genes) names.push_back(ds.gene_names[g]);
  panel["genes"] = names;

  const eval::EvalOptions opt{a.alpha, true};
  json j;
  j["dataset"] = dataset;
  j["panel"] = panel;
  j["alpha"] = a.alpha;
  if (a.compare) {
    const auto random = eval::evaluate(ds, genes, eval::make_split(ds, eval::SplitKind::RandomKFold, a.folds, a.common.seed), opt);
    const auto loso = eval::evaluate(ds, genes, eval::make_split(ds, eval::SplitKind::LOSO, 0, a.common.seed), opt);
    const std::map<std::string, const eval::Stat eval::EvalReport::*> field{
        {"pcc", &eval::EvalReport::pcc}, {"pcc10", &eval::EvalReport::pcc10}, {"mae", &eval::EvalReport::mae}, {"mse", &eval::EvalReport::mse}};
    j["folds"] = {{"random", random.folds.size()}, {"loso", loso.folds.size()}};
    for (const auto& d : eval::robustness_compare(random, loso))
      j[d.metric] = {{"random", stat_json(random.*field.at(d.metric))},
                     {"loso", stat_json(loso.*field.at(d.metric))},
                     {"percent_change", d.percent_change}};
  } else {
    const auto kind = kinds.at(a.split);
    const auto r = eval::evaluate(ds, genes, eval::make_split(ds, kind, a.folds, a.common.seed), opt);
    j["split"] = a.split;
    j["folds"] = r.folds.size();
    j["pcc"] = stat_json(r.pcc);
    j["pcc10"] = stat_json(r.pcc10);
    j["mae"] = stat_json(r.mae);
    j["mse"] = stat_json(r.mse);
    j["per_gene_pcc"] = r.per_gene_pcc;
  }
  j["timing"] = {{"seconds", clock.seconds()}};
  write_json(out / "eval.json", j);
  return kOk;
}

int exit_for(const std::string& cmd, ErrorKind k) {
  if (k == ErrorKind::InvalidInput || k == ErrorKind::ShapeMismatch) return kInvalidInput;
  if (cmd == "spectra") return k == ErrorKind::NonConvergence ? kNonConvergence : kInvalidSpectrum;
  if (cmd == "probe") return kProbeFailure;
  if (cmd == "embed") return k == ErrorKind::NonFinite ? kNonFinite : kUsage;
  if (cmd == "eval") return kInvalidInput;
  return kUsage;
}

void apply_thread_cap() {
  const char* env = std::getenv("MVH_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 0) throw Failure{kUsage, std::string("MVH_THREADS must be a nonnegative integer, got '") + env + "'"};
  if (n > 0) omp_set_num_threads(static_cast<int>(n));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-bias and robustness toolkit for state-space vision backbones"};
  app.require_subcommand(1);

  SpectraArgs sp;
  auto* spectra = app.add_subcommand("spectra", "Frequency sweep and high-frequency total variation of an SSM transfer function");
  add_common(spectra, sp.common);
  spectra->add_option("--init", sp.init, "Init scheme when --eigs is absent: cascaded | uniform")->capture_default_str();
  spectra->add_option("--order", sp.order, "Number of poles for --init");
  spectra->add_option("--eigs", sp.eigs, "Explicit poles, e.g. -1 -2+3i")->delimiter(',');
  spectra->add_option("--residues", sp.residues, "Residues (default all 1)")->delimiter(',');
  spectra->add_option("--omega0", sp.omega0, "Cutoff frequency or log-spaced range lo..hi")->capture_default_str();
  spectra->add_option("--points", sp.points, "Grid points for an omega0 range")->capture_default_str();
  spectra->add_option("--sweep-points", sp.sweep_points, "Rows of the frequency sweep CSV")->capture_default_str();
  spectra->add_option("--rel-tol", sp.rel_tol, "Quadrature relative tolerance")->capture_default_str();

  ScanBenchArgs sb;
  auto* scan = app.add_subcommand("scan-bench", "Check the chunked scan against the sequential one, then time both");
  add_common(scan, sb.common);
  scan->add_option("--len", sb.len, "Sequence length")->capture_default_str();
  scan->add_option("--state-dim", sb.state_dim, "Independent state channels")->capture_default_str();
  scan->add_option("--chunks", sb.chunks, "Chunk sizes; 'len' means one chunk")->delimiter(',')->capture_default_str();
  scan->add_option("--reps", sb.reps, "Timed repetitions")->capture_default_str();
  scan->add_option("--delta", sb.delta, "Step size")->capture_default_str();
  scan->add_option("--tol", sb.tol, "Relative tolerance of the correctness check")->capture_default_str();

  ProbeArgs pr;
  auto* probe_cmd = app.add_subcommand("probe", "Least-squares frequency probe over eigenvalue inits");
  add_common(probe_cmd, pr.common);
  probe_cmd->add_option("--init", pr.inits, "scheme:N, repeatable")->delimiter(',')->capture_default_str();
  probe_cmd->add_option("--band", pr.bands, "low | high | lo:hi, repeatable")->delimiter(',')->capture_default_str();
  probe_cmd->add_option("--seeds", pr.seeds, "Targets per (init, band)")->capture_default_str();
  probe_cmd->add_option("--seq-len", pr.settings.seq_len, "Target length")->capture_default_str();
  probe_cmd->add_option("--dt", pr.settings.dt, "Sampling step")->capture_default_str();
  probe_cmd->add_option("--components", pr.settings.components, "Sinusoids per target")->capture_default_str();
  probe_cmd->add_option("--ridge", pr.settings.ridge, "Ridge penalty")->capture_default_str();

  EmbedArgs em;
  auto* embed = app.add_subcommand("embed", "Patch embeddings from a seeded or loaded backbone");
  add_common(embed, em.common);
  embed->add_option("--variant", em.variant, "Backbone variant, e.g. mv_hybrid")->required();
  embed->add_option("--scale", em.scale, "toy | small")->capture_default_str();
  embed->add_option("--synthetic", em.synthetic, "Number of seeded synthetic images");
  embed->add_option("--images", em.images, "Directory of raw HxWx3 uint8 RGB files");
  embed->add_option("--weights", em.weights, "MVW1 weights to load");
  embed->add_option("--save-weights", em.save_weights, "Write the weights used as MVW1");
  embed->add_option("--bins", em.bins, "Eigenvalue histogram bins")->capture_default_str();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Ridge biomarker prediction under random and leave-one-study-out splits");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("--synthetic-beta", ev.synthetic_beta, "Use a synthetic dataset with this batch strength");
  eval_cmd->add_option("--studies", ev.studies, "Synthetic studies")->capture_default_str();
  eval_cmd->add_option("--patches", ev.patches, "Synthetic patches per study")->capture_default_str();
  eval_cmd->add_option("--latent", ev.latent, "Synthetic latent dimension")->capture_default_str();
  eval_cmd->add_option("--embeddings", ev.embeddings, "EMB1 or CSV embeddings");
  eval_cmd->add_option("--expression", ev.expression, "Expression CSV with gene header");
  eval_cmd->add_option("--labels", ev.labels, "Labels CSV patch_id,sample_id,patient_id,study_id");
  eval_cmd->add_option("--hvg", ev.hvg, "Top-k highly variable genes");
  eval_cmd->add_option("--hmhvg", ev.hmhvg, "Top-k high-mean highly variable genes");
  eval_cmd->add_option("--pool", ev.pool, "HMHVG pool size (default 2k)");
  eval_cmd->add_option("--alpha", ev.alpha, "Ridge penalty")->capture_default_str();
  eval_cmd->add_option("--folds", ev.folds, "k for random and patient splits")->capture_default_str();
  eval_cmd->add_option("--split", ev.split, "random | loso | patient")->capture_default_str();
  eval_cmd->add_flag("--compare", ev.compare, "Run random and LOSO and report the change");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    apply_thread_cap();
    if (cmd == "spectra") return run_spectra(sp);
    if (cmd == "scan-bench") return run_scan_bench(sb);
    if (cmd == "probe") return run_probe(pr);
    if (cmd == "embed") return run_embed(em);
    if (cmd == "eval") return run_eval(ev);
  } catch (const Failure& f) {
    std::cerr << "mvh " << cmd << ": " << f.message << '\n';
    return f.code;
  } catch (const Error& e) {
    std::cerr << "mvh " << cmd << ": " << e.what() << '\n';
    return exit_for(cmd, e.kind());
  } catch (const std::exception& e) {
    std::cerr << "mvh " << cmd << ": " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
