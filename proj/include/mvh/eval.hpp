#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mvh/nn.hpp"

namespace mvh::eval {

using nn::Mat;

struct ExpressionDataset {
  Mat embeddings;  // patches x dim
  Mat expression;  // patches x genes, nonnegative
  std::vector<std::string> gene_names;
  std::vector<std::string> sample_id, patient_id, study_id;

  Eigen::Index patches() const { return embeddings.rows(); }
  Eigen::Index genes() const { return expression.cols(); }
  /// Throws InvalidInput on row-count disagreement, negative or non-finite expression.
  void validate() const;
};

/// Each row scaled to sum to `total`, then log1p. All-zero rows stay zero.
Mat log1p_normalize(const Mat& counts, double total = 1e4);

/// Top-k genes by variance of log1p-normalized expression, descending; ties by gene name.
std::vector<int> select_hvg(const ExpressionDataset& ds, int k);

/// Intersection of the top-`pool` genes by mean and by variance, ranked by variance.
/// pool <= 0 means 2k. Throws InsufficientOverlap when fewer than k genes survive.
std::vector<int> select_hmhvg(const ExpressionDataset& ds, int k, int pool = 0);

enum class SplitKind { RandomKFold, LOSO, PatientKFold };

struct Fold {
  std::vector<int> train, test;  // sorted
  std::string label;             // held-out study for LOSO
};

struct SplitPlan {
  SplitKind kind = SplitKind::RandomKFold;
  int k = 0;
  std::vector<Fold> folds;
};

/// k is ignored for LOSO. Deterministic in seed.
SplitPlan make_split(const ExpressionDataset& ds, SplitKind kind, int k, std::uint64_t seed);
/// Throws InvalidInput unless every fold is disjoint and in range, test sets partition
/// the patches, and grouped plans never split a patient (PatientKFold) or study (LOSO).
void validate_plan(const SplitPlan& plan, const ExpressionDataset& ds);

struct RidgeModel {
  Mat w;  // dim x targets
  Eigen::RowVectorXd x_mean, y_mean;
  Mat predict(const Mat& x) const;
};

RidgeModel ridge_fit(const Mat& x, const Mat& y, double alpha, bool center = true);

/// Receives (train_x, train_y, test_x, fold) and returns test predictions.
using Predictor = std::function<Mat(const Mat&, const Mat&, const Mat&, const Fold&)>;
Predictor ridge_predictor(double alpha);

/// Zero when either side has zero variance.
double pearson(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

struct FoldMetrics {
  std::vector<double> per_gene_pcc;
  double pcc = 0.0, pcc10 = 0.0, mae = 0.0, mse = 0.0;
};

FoldMetrics fold_metrics(const Mat& truth, const Mat& pred);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // population, across folds
};

struct EvalReport {
  std::vector<FoldMetrics> folds;
  std::vector<double> per_gene_pcc;  // fold average
  Stat pcc, pcc10, mae, mse;
};

struct EvalOptions {
  double alpha = 1.0;
  bool normalize = true;  // log1p_normalize expression before selecting genes
};

/// Genes index ds columns. Folds run in parallel.
EvalReport evaluate(const ExpressionDataset& ds, const std::vector<int>& genes, const SplitPlan& plan,
                    const EvalOptions& opt = {});
EvalReport evaluate(const ExpressionDataset& ds, const std::vector<int>& genes, const SplitPlan& plan,
                    const Predictor& predictor, bool normalize = true);

struct RobustnessDelta {
  std::string metric;
  double random_value = 0.0;
  double loso_value = 0.0;
  double percent_change = 0.0;  // decrease for pcc/pcc10, increase for mae/mse
};

/// Positive means LOSO is worse. Throws DivisionByZero when random_value == 0.
double percent_change(const std::string& metric, double random_value, double loso_value);
/// pcc, pcc10, mae, mse in that order, from the fold means.
std::vector<RobustnessDelta> robustness_compare(const EvalReport& random, const EvalReport& loso);

struct SynthOptions {
  int n_studies = 8;
  int patches_per_study = 60;
  int latent_dim = 8;
  double beta = 0.0;
  std::uint64_t seed = 42;
  int patients_per_study = 2;
  int emb_dim = 32;
  int n_genes = 40;
  int site_dim = 4;
  double emb_noise = 1.0;
  double expr_noise = 0.8;
  double study_effect = 0.4;  // expression shift per unit beta
};

/// Latent biology z ~ N(0, I) per patch and a study offset s ~ N(0, I):
///   embeddings = M_bio z + beta M_site s + noise
///   expression = exp(mu + V z + beta study_effect U s + noise)
/// With beta = 0 the study label carries no information anywhere.
ExpressionDataset synth_batch_dataset(const SynthOptions& opt);
ExpressionDataset synth_batch_dataset(int n_studies, int patches_per_study, int latent_dim, double beta,
                                      std::uint64_t seed);

/// Embeddings from EMB1 (by magic) or headerless CSV; expression CSV with a gene-name
/// header; labels CSV `patch_id,sample_id,patient_id,study_id`. Errors are InvalidInput
/// and carry file and line.
ExpressionDataset load_dataset(const std::filesystem::path& embeddings, const std::filesystem::path& expression,
                               const std::filesystem::path& labels);

const char* to_string(SplitKind k);

}  // namespace mvh::eval
