#ifndef PVCAL_MODELS_HPP
#define PVCAL_MODELS_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pvcal {

enum class ModelKind { logistic, weibull, gamma_known_shape };

const char* to_string(ModelKind kind) noexcept;

struct ModelSpec {
  ModelKind kind = ModelKind::logistic;
  double known_shape = 1.0;  // gamma_known_shape only
};

struct ColumnMeta {
  std::string name;
  bool genetic = false;
  std::optional<double> maf;
};

/// Responses and design. The design carries the intercept as an ordinary
/// column; gamma_known_shape ignores X.
struct DataSet {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<ColumnMeta> columns;

  Eigen::Index rows() const noexcept { return y.size(); }
  Eigen::Index cols() const noexcept { return X.cols(); }
};

/// Parameter layout:
///   logistic            beta (one per design column)
///   weibull             beta (one per design column), then log-shape
///   gamma_known_shape   rate
struct ModelFit {
  Eigen::VectorXd estimates;
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd observed_info;  // negative Hessian at estimates
  std::optional<double> nuisance_info_logdet;  // constrained fits only
  std::optional<Eigen::Index> pinned_index;
  double pinned_value = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> loglik_trace;

  double nuisance_info_det() const;
};

enum class TestMethod { wald, score, rstar, saddlepoint, normal };

const char* to_string(TestMethod method) noexcept;

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  TestMethod method = TestMethod::wald;
};

Eigen::Index num_params(const ModelSpec& model, const DataSet& data);

double loglik(const ModelSpec& model, const DataSet& data, const Eigen::VectorXd& theta);
Eigen::VectorXd score(const ModelSpec& model, const DataSet& data, const Eigen::VectorXd& theta);
Eigen::MatrixXd observed_info(const ModelSpec& model, const DataSet& data,
                              const Eigen::VectorXd& theta);

/// Newton-Raphson with step halving (IRLS for the logistic model) to a
/// score of max-norm <= 1e-8.
ModelFit fit_mle(const ModelSpec& model, const DataSet& data);

/// Same as fit_mle with parameter j held at psi0. The returned fit carries
/// the log-determinant of the information block of the remaining parameters.
ModelFit fit_constrained(const ModelSpec& model, const DataSet& data, Eigen::Index j, double psi0);

/// Closed-form gamma fit from the sufficient statistic (n, sum y). The
/// log-likelihood omits the data-only term (shape - 1) sum log y, which
/// cancels in every likelihood ratio. With `fixed_rate` the fit is the
/// constrained one (no nuisance parameters).
ModelFit fit_gamma_sufficient(double shape, long n, double sum_y, std::optional<double> fixed_rate = std::nullopt);

/// Expected score products used by Skovgaard's r* adjustment, taken under
/// theta_hat:  S = E[l'(hat) l'(tilde)^T],  q = E[l'(hat) (l(hat) - l(tilde))],
/// expected_info = S at tilde = hat. Available for the Weibull model, whose
/// regression coefficients are not canonical parameters; nullopt for the
/// exponential-family models.
struct ScoreCovariances {
  Eigen::MatrixXd S;
  Eigen::VectorXd q;
  Eigen::MatrixXd expected_info;
};
std::optional<ScoreCovariances> score_covariances(const ModelSpec& model, const DataSet& data,
                                                  const Eigen::VectorXd& theta_hat,
                                                  const Eigen::VectorXd& theta_tilde);

/// log det of observed_info with row/column j removed.
double nuisance_logdet(const ModelFit& fit, Eigen::Index j);

/// Single-coefficient score statistic for logistic regression evaluated at
/// the constrained fit: sqrt([(X'DX)^{-1}]_jj) * sum_i x_ij (y_i - pi_i).
TestResult score_test_glm(const ModelSpec& model, const DataSet& data, Eigen::Index j, double psi0);

/// (theta_j - psi0) / se_j with se_j from the inverse observed information.
TestResult wald_test(const ModelFit& full, Eigen::Index j, double psi0);
TestResult wald_test(const ModelSpec& model, const DataSet& data, Eigen::Index j, double psi0);

struct LinkageTests {
  TestResult score;
  TestResult wald;
};

/// Non-parametric linkage tests from allele-sharing counts (#0, #1, #2).
/// The score form uses the null variance 0.5; the Wald form uses the
/// plug-in variance of the multinomial MLE.
LinkageTests linkage_tests(long n0, long n1, long n2);

/// Reads a header-first CSV with a required `y` column; every other column
/// is a covariate. An intercept column is prepended unless one named
/// `intercept` is present. Columns whose name starts with `snp` are
/// flagged genetic and get MAF = mean / 2.
DataSet read_dataset_csv(std::istream& in);
DataSet read_dataset_csv_file(const std::string& path);

}  // namespace pvcal

#endif  // PVCAL_MODELS_HPP
