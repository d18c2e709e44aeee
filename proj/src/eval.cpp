#include "mvh/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Cholesky>

#include "mvh/error.hpp"
#include "mvh/io.hpp"

namespace mvh::eval {

namespace {

// Descending by key, ties by gene name.
std::vector<int> rank_genes(const ExpressionDataset& ds, const Eigen::VectorXd& key, std::vector<int> idx) {
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (key(a) != key(b)) return key(a) > key(b);
    return ds.gene_names[a] < ds.gene_names[b];
  });
  return idx;
}

struct GeneStats {
  Eigen::VectorXd mean, var;
};

GeneStats gene_stats(const ExpressionDataset& ds) {
  ds.validate();
  const Mat x = log1p_normalize(ds.expression);
  GeneStats s;
  s.mean = x.colwise().mean().transpose();
  s.var = (x.rowwise() - s.mean.transpose()).colwise().squaredNorm().transpose() / double(x.rows());
  return s;
}

std::vector<int> iota(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

Mat gather_rows(const Mat& m, const std::vector<int>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

Stat stat_of(const std::vector<FoldMetrics>& folds, double FoldMetrics::*field) {
  Stat s;
  const double n = static_cast<double>(folds.size());
  for (const auto& f : folds) s.mean += f.*field;
  s.mean /= n;
  double var = 0.0;
  for (const auto& f : folds) var += (f.*field - s.mean) * (f.*field - s.mean);
  s.std = std::sqrt(var / n);
  return s;
}

// Minimal CSV reader: comma separated, no quoting, CR tolerated.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  while (!rows.empty() && rows.back().size() == 1 && rows.back()[0].empty()) rows.pop_back();
  return rows;
}

[[noreturn]] void bad_line(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw Error(ErrorKind::InvalidInput, path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) bad_line(path, line, "not a number: '" + s + "'");
  if (!std::isfinite(v)) bad_line(path, line, "non-finite value");
  return v;
}

Mat numeric_block(const std::vector<std::vector<std::string>>& rows, std::size_t first,
                  const std::filesystem::path& path) {
  require(rows.size() > first, ErrorKind::InvalidInput, path.string() + ": no data rows");
  const std::size_t cols = rows[first].size();
  Mat m(static_cast<Eigen::Index>(rows.size() - first), static_cast<Eigen::Index>(cols));
  for (std::size_t r = first; r < rows.size(); ++r) {
    if (rows[r].size() != cols)
      bad_line(path, r + 1, "expected " + std::to_string(cols) + " fields, got " + std::to_string(rows[r].size()));
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r - first), static_cast<Eigen::Index>(c)) = parse_number(rows[r][c], path, r + 1);
  }
  return m;
}

}  // namespace

const char* to_string(SplitKind k) {
  switch (k) {
    case SplitKind::RandomKFold: return "random";
    case SplitKind::LOSO: return "loso";
    case SplitKind::PatientKFold: return "patient";
  }
  return "?";
}

void ExpressionDataset::validate() const {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  require(expression.rows() == embeddings.rows(), ErrorKind::InvalidInput,
          "embeddings have " + std::to_string(n) + " rows, expression " + std::to_string(expression.rows()));
  require(sample_id.size() == n && patient_id.size() == n && study_id.size() == n, ErrorKind::InvalidInput,
          "label columns must have one entry per patch");
  require(gene_names.size() == static_cast<std::size_t>(expression.cols()), ErrorKind::InvalidInput,
          "gene_names must match expression columns");
  require(embeddings.allFinite(), ErrorKind::InvalidInput, "embeddings contain non-finite values");
  require(expression.allFinite() && (expression.array() >= 0.0).all(), ErrorKind::InvalidInput,
          "expression must be finite and nonnegative");
}

Mat log1p_normalize(const Mat& counts, double total) {
  Mat out(counts.rows(), counts.cols());
  for (Eigen::Index i = 0; i < counts.rows(); ++i) {
    const double sum = counts.row(i).sum();
    const double scale = sum > 0.0 ? total / sum : 0.0;
    out.row(i) = (counts.row(i).array() * scale).log1p().matrix();
  }
  return out;
}

std::vector<int> select_hvg(const ExpressionDataset& ds, int k) {
  require(k >= 1 && k <= ds.genes(), ErrorKind::InsufficientGenes,
          "requested " + std::to_string(k) + " genes from a panel of " + std::to_string(ds.genes()));
  const GeneStats s = gene_stats(ds);
  auto ranked = rank_genes(ds, s.var, iota(static_cast<int>(ds.genes())));
  ranked.resize(static_cast<std::size_t>(k));
  return ranked;
}

std::vector<int> select_hmhvg(const ExpressionDataset& ds, int k, int pool) {
  if (pool <= 0) pool = 2 * k;
  require(k >= 1 && pool >= k, ErrorKind::InvalidArgument, "hmhvg needs pool >= k >= 1");
  require(k <= ds.genes(), ErrorKind::InsufficientGenes,
          "requested " + std::to_string(k) + " genes from a panel of " + std::to_string(ds.genes()));
  const GeneStats s = gene_stats(ds);
  const auto all = iota(static_cast<int>(ds.genes()));
  const std::size_t p = std::min<std::size_t>(static_cast<std::size_t>(pool), all.size());
  auto by_mean = rank_genes(ds, s.mean, all), by_var = rank_genes(ds, s.var, all);
  const std::set<int> high_mean(by_mean.begin(), by_mean.begin() + static_cast<std::ptrdiff_t>(p));
  std::vector<int> both;
  for (std::size_t i = 0; i < p; ++i)
    if (high_mean.count(by_var[i])) both.push_back(by_var[i]);
  require(both.size() >= static_cast<std::size_t>(k), ErrorKind::InsufficientOverlap,
          "only " + std::to_string(both.size()) + " genes are both high-mean and high-variance at pool " +
              std::to_string(pool) + "; need " + std::to_string(k));
  both.resize(static_cast<std::size_t>(k));
  return both;
}

SplitPlan make_split(const ExpressionDataset& ds, SplitKind kind, int k, std::uint64_t seed) {
  ds.validate();
  const int n = static_cast<int>(ds.patches());
  SplitPlan plan{kind, k, {}};
  std::vector<int> fold_of(static_cast<std::size_t>(n), -1);
  std::vector<std::string> labels;
  Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(kind) + 1);

  switch (kind) {
    case SplitKind::RandomKFold: {
      require(k >= 2 && n >= k, ErrorKind::InsufficientGroups,
              "random k-fold needs 2 <= k <= patches, got k = " + std::to_string(k) + " with " + std::to_string(n));
      auto perm = iota(n);
      rng.shuffle(perm.begin(), perm.end());
      for (int f = 0; f < k; ++f)
        for (long i = long(f) * n / k; i < long(f + 1) * n / k; ++i) fold_of[perm[i]] = f;
      labels.assign(static_cast<std::size_t>(k), "");
      break;
    }
    case SplitKind::LOSO: {
      const std::set<std::string> studies(ds.study_id.begin(), ds.study_id.end());
      require(studies.size() >= 2, ErrorKind::InsufficientGroups,
              "LOSO needs at least 2 studies, found " + std::to_string(studies.size()));
      labels.assign(studies.begin(), studies.end());
      for (int i = 0; i < n; ++i)
        fold_of[i] = static_cast<int>(std::lower_bound(labels.begin(), labels.end(), ds.study_id[i]) - labels.begin());
      plan.k = static_cast<int>(labels.size());
      break;
    }
    case SplitKind::PatientKFold: {
      const std::set<std::string> uniq(ds.patient_id.begin(), ds.patient_id.end());
      require(k >= 2 && uniq.size() >= static_cast<std::size_t>(k), ErrorKind::InsufficientGroups,
              "patient k-fold needs 2 <= k <= patients, got k = " + std::to_string(k) + " with " +
                  std::to_string(uniq.size()) + " patients");
      std::vector<std::string> patients(uniq.begin(), uniq.end());
      rng.shuffle(patients.begin(), patients.end());
      std::map<std::string, int> assign;
      for (std::size_t i = 0; i < patients.size(); ++i) assign[patients[i]] = static_cast<int>(i % k);
      for (int i = 0; i < n; ++i) fold_of[i] = assign.at(ds.patient_id[i]);
      labels.assign(static_cast<std::size_t>(k), "");
      break;
    }
  }

  plan.folds.resize(labels.size());
  for (std::size_t f = 0; f < labels.size(); ++f) plan.folds[f].label = labels[f];
  for (int i = 0; i < n; ++i)
    for (std::size_t f = 0; f < plan.folds.size(); ++f)
      (fold_of[i] == static_cast<int>(f) ? plan.folds[f].test : plan.folds[f].train).push_back(i);
  return plan;
}

void validate_plan(const SplitPlan& plan, const ExpressionDataset& ds) {
  const auto n = static_cast<std::size_t>(ds.patches());
  std::vector<int> tested(n, 0);
  require(!plan.folds.empty(), ErrorKind::InvalidInput, "plan has no folds");
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const Fold& fold = plan.folds[f];
    const std::string where = "fold " + std::to_string(f);
    std::vector<char> role(n, 0);
    for (int i : fold.train) {
      require(i >= 0 && static_cast<std::size_t>(i) < n && !role[i], ErrorKind::InvalidInput, where + ": bad train index");
      role[i] = 1;
    }
    for (int i : fold.test) {
      require(i >= 0 && static_cast<std::size_t>(i) < n && !role[i], ErrorKind::InvalidInput,
              where + ": test index out of range or also in train");
      role[i] = 2;
      ++tested[i];
    }
    require(!fold.test.empty(), ErrorKind::InvalidInput, where + ": empty test set");
    const auto* group = plan.kind == SplitKind::LOSO           ? &ds.study_id
                        : plan.kind == SplitKind::PatientKFold ? &ds.patient_id
                                                               : nullptr;
    if (group) {
      std::set<std::string> test_groups;
      for (int i : fold.test) test_groups.insert((*group)[i]);
      for (int i : fold.train)
        require(!test_groups.count((*group)[i]), ErrorKind::InvalidInput, where + ": group " + (*group)[i] + " split");
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    require(tested[i] == 1, ErrorKind::InvalidInput,
            "patch " + std::to_string(i) + " is tested " + std::to_string(tested[i]) + " times");
}

Mat RidgeModel::predict(const Mat& x) const {
  Mat y = (x.rowwise() - x_mean) * w;
  y.rowwise() += y_mean;
  return y;
}

RidgeModel ridge_fit(const Mat& x, const Mat& y, double alpha, bool center) {
  require(alpha > 0.0, ErrorKind::InvalidArgument, "ridge alpha must be > 0");
  require(x.rows() == y.rows() && x.rows() >= 1, ErrorKind::ShapeMismatch, "ridge needs matching, nonempty rows");
  RidgeModel m;
  m.x_mean = center ? Eigen::RowVectorXd(x.colwise().mean()) : Eigen::RowVectorXd::Zero(x.cols());
  m.y_mean = center ? Eigen::RowVectorXd(y.colwise().mean()) : Eigen::RowVectorXd::Zero(y.cols());
  const Eigen::MatrixXd xc = x.rowwise() - m.x_mean;
  const Eigen::MatrixXd yc = y.rowwise() - m.y_mean;
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += alpha;
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  require(llt.info() == Eigen::Success, ErrorKind::NumericalFailure, "ridge normal equations are not positive definite");
  m.w = llt.solve(xc.transpose() * yc);
  require(m.w.allFinite(), ErrorKind::NumericalFailure, "ridge solve produced non-finite weights");
  return m;
}

Predictor ridge_predictor(double alpha) {
  return [alpha](const Mat& tx, const Mat& ty, const Mat& x, const Fold&) { return ridge_fit(tx, ty, alpha).predict(x); };
}

double pearson(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  const Eigen::ArrayXd da = a.array() - a.mean(), db = b.array() - b.mean();
  const double va = da.square().sum(), vb = db.square().sum();
  if (va == 0.0 || vb == 0.0) return 0.0;
  return (da * db).sum() / std::sqrt(va * vb);
}

FoldMetrics fold_metrics(const Mat& truth, const Mat& pred) {
  require(truth.rows() == pred.rows() && truth.cols() == pred.cols() && truth.size() > 0, ErrorKind::ShapeMismatch,
          "prediction shape differs from truth");
  FoldMetrics m;
  const Eigen::Index g = truth.cols();
  for (Eigen::Index j = 0; j < g; ++j) m.per_gene_pcc.push_back(pearson(truth.col(j), pred.col(j)));
  // Both means come from one descending order so pcc10 >= pcc survives rounding.
  auto sorted = m.per_gene_pcc;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t top = std::min<std::size_t>(10, sorted.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    sum += sorted[j];
    if (j + 1 == top) m.pcc10 = sum / double(top);
  }
  m.pcc = sum / double(g);
  const Eigen::ArrayXXd err = (truth - pred).array();
  m.mae = err.abs().mean();
  m.mse = err.square().mean();
  return m;
}

EvalReport evaluate(const ExpressionDataset& ds, const std::vector<int>& genes, const SplitPlan& plan,
                    const EvalOptions& opt) {
  return evaluate(ds, genes, plan, ridge_predictor(opt.alpha), opt.normalize);
}

EvalReport evaluate(const ExpressionDataset& ds, const std::vector<int>& genes, const SplitPlan& plan,
                    const Predictor& predictor, bool normalize) {
  ds.validate();
  validate_plan(plan, ds);
  require(!genes.empty(), ErrorKind::InvalidArgument, "gene panel is empty");
  for (int g : genes)
    require(g >= 0 && g < ds.genes(), ErrorKind::InvalidArgument, "gene index " + std::to_string(g) + " out of range");

  const Mat expr = normalize ? log1p_normalize(ds.expression) : ds.expression;
  Mat y(expr.rows(), static_cast<Eigen::Index>(genes.size()));
  for (std::size_t j = 0; j < genes.size(); ++j) y.col(static_cast<Eigen::Index>(j)) = expr.col(genes[j]);

  EvalReport r;
  r.folds.resize(plan.folds.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (long f = 0; f < static_cast<long>(plan.folds.size()); ++f) {
    try {
      const Fold& fold = plan.folds[f];
      const Mat pred = predictor(gather_rows(ds.embeddings, fold.train), gather_rows(y, fold.train),
                                 gather_rows(ds.embeddings, fold.test), fold);
      r.folds[f] = fold_metrics(gather_rows(y, fold.test), pred);
    } catch (...) {
#pragma omp critical(mvh_eval_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  r.per_gene_pcc.assign(genes.size(), 0.0);
  for (const auto& f : r.folds)
    for (std::size_t j = 0; j < genes.size(); ++j) r.per_gene_pcc[j] += f.per_gene_pcc[j] / double(r.folds.size());
  r.pcc = stat_of(r.folds, &FoldMetrics::pcc);
  r.pcc10 = stat_of(r.folds, &FoldMetrics::pcc10);
  r.mae = stat_of(r.folds, &FoldMetrics::mae);
  r.mse = stat_of(r.folds, &FoldMetrics::mse);
  return r;
}

double percent_change(const std::string& metric, double random_value, double loso_value) {
  require(random_value != 0.0, ErrorKind::DivisionByZero, "random-split " + metric + " is 0");
  const bool higher_is_better = metric == "pcc" || metric == "pcc10";
  require(higher_is_better || metric == "mae" || metric == "mse", ErrorKind::InvalidArgument,
          "unknown metric " + metric);
  const double diff = higher_is_better ? random_value - loso_value : loso_value - random_value;
  return 100.0 * diff / random_value;
}

std::vector<RobustnessDelta> robustness_compare(const EvalReport& random, const EvalReport& loso) {
  std::vector<RobustnessDelta> out;
  const std::pair<const char*, Stat EvalReport::*> metrics[] = {
      {"pcc", &EvalReport::pcc}, {"pcc10", &EvalReport::pcc10}, {"mae", &EvalReport::mae}, {"mse", &EvalReport::mse}};
  for (const auto& [name, field] : metrics) {
    const double a = (random.*field).mean, b = (loso.*field).mean;
    out.push_back({name, a, b, percent_change(name, a, b)});
  }
  return out;
}

ExpressionDataset synth_batch_dataset(const SynthOptions& o) {
  require(o.beta >= 0.0, ErrorKind::InvalidArgument, "beta must be >= 0");
  require(o.n_studies >= 1 && o.patches_per_study >= 1 && o.latent_dim >= 1 && o.patients_per_study >= 1 &&
              o.emb_dim >= 1 && o.n_genes >= 1 && o.site_dim >= 1,
          ErrorKind::InvalidArgument, "synthetic dataset sizes must be positive");
  Rng rng(o.seed);
  auto gauss = [&](int r, int c, double std) { return nn::randn(rng, r, c, std); };
  const Mat m_bio = gauss(o.emb_dim, o.latent_dim, 1.0 / std::sqrt(double(o.latent_dim)));
  const Mat m_site = gauss(o.emb_dim, o.site_dim, 1.0 / std::sqrt(double(o.site_dim)));
  const Mat v = gauss(o.n_genes, o.latent_dim, 1.0 / std::sqrt(double(o.latent_dim)));
  const Mat u = gauss(o.n_genes, o.site_dim, 1.0 / std::sqrt(double(o.site_dim)));
  Eigen::VectorXd mu(o.n_genes);
  for (int g = 0; g < o.n_genes; ++g) mu(g) = rng.uniform(1.0, 4.0);

  const int n = o.n_studies * o.patches_per_study;
  ExpressionDataset ds;
  ds.embeddings.resize(n, o.emb_dim);
  ds.expression.resize(n, o.n_genes);
  for (int g = 0; g < o.n_genes; ++g) ds.gene_names.push_back("gene" + std::to_string(1000 + g).substr(1));
  for (int st = 0; st < o.n_studies; ++st) {
    const Mat s = gauss(o.site_dim, 1, 1.0);
    const Eigen::VectorXd site = o.beta * (m_site * s).col(0);
    const Eigen::VectorXd shift = o.beta * o.study_effect * (u * s).col(0);
    for (int p = 0; p < o.patches_per_study; ++p) {
      const int i = st * o.patches_per_study + p;
      const Mat z = gauss(o.latent_dim, 1, 1.0);
      const Mat e_emb = gauss(o.emb_dim, 1, o.emb_noise), e_expr = gauss(o.n_genes, 1, o.expr_noise);
      ds.embeddings.row(i) = (m_bio * z + e_emb).col(0).transpose() + site.transpose();
      ds.expression.row(i) = (mu + (v * z).col(0) + shift + e_expr.col(0)).array().exp().transpose();
      const std::string study = "study" + std::to_string(100 + st).substr(1);
      const std::string patient = study + "_p" + std::to_string(p * o.patients_per_study / o.patches_per_study);
      ds.study_id.push_back(study);
      ds.patient_id.push_back(patient);
      ds.sample_id.push_back(patient + "_s0");
    }
  }
  return ds;
}

ExpressionDataset synth_batch_dataset(int n_studies, int patches_per_study, int latent_dim, double beta,
                                      std::uint64_t seed) {
  SynthOptions o;
  o.n_studies = n_studies;
  o.patches_per_study = patches_per_study;
  o.latent_dim = latent_dim;
  o.beta = beta;
  o.seed = seed;
  return synth_batch_dataset(o);
}

ExpressionDataset load_dataset(const std::filesystem::path& embeddings, const std::filesystem::path& expression,
                               const std::filesystem::path& labels) {
  ExpressionDataset ds;
  if (io::read_file(embeddings).rfind("EMB1", 0) == 0) {
    ds.embeddings = io::read_emb1(embeddings);
  } else {
    ds.embeddings = numeric_block(read_csv(embeddings), 0, embeddings);
  }

  const auto expr_rows = read_csv(expression);
  require(!expr_rows.empty(), ErrorKind::InvalidInput, expression.string() + ": empty file");
  ds.gene_names = expr_rows[0];
  ds.expression = numeric_block(expr_rows, 1, expression);
  require(static_cast<std::size_t>(ds.expression.cols()) == ds.gene_names.size(), ErrorKind::InvalidInput,
          expression.string() + ":2: column count differs from header");
  for (Eigen::Index i = 0; i < ds.expression.rows(); ++i)
    if ((ds.expression.row(i).array() < 0.0).any())
      bad_line(expression, static_cast<std::size_t>(i) + 2, "negative expression value");

  const auto label_rows = read_csv(labels);
  const std::vector<std::string> header{"patch_id", "sample_id", "patient_id", "study_id"};
  if (label_rows.empty() || label_rows[0] != header) bad_line(labels, 1, "header must be patch_id,sample_id,patient_id,study_id");
  for (std::size_t r = 1; r < label_rows.size(); ++r) {
    const auto& row = label_rows[r];
    if (row.size() != 4) bad_line(labels, r + 1, "expected 4 fields, got " + std::to_string(row.size()));
    for (const auto& cell : row)
      if (cell.empty()) bad_line(labels, r + 1, "empty label");
    ds.sample_id.push_back(row[1]);
    ds.patient_id.push_back(row[2]);
    ds.study_id.push_back(row[3]);
  }
  const auto n = static_cast<std::size_t>(ds.embeddings.rows());
  if (label_rows.size() - 1 != n)
    bad_line(labels, label_rows.size() + (label_rows.size() - 1 < n ? 1 : 0),
             "labels have " + std::to_string(label_rows.size() - 1) + " rows, embeddings " + std::to_string(n));
  if (static_cast<std::size_t>(ds.expression.rows()) != n)
    bad_line(expression, expr_rows.size(),
             "expression has " + std::to_string(ds.expression.rows()) + " rows, embeddings " + std::to_string(n));
  ds.validate();
  return ds;
}

}  // namespace mvh::eval
