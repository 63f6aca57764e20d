#ifndef PVCAL_HARNESS_HPP
#define PVCAL_HARNESS_HPP

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pvcal/edgeworth.hpp"
#include "pvcal/models.hpp"
#include "pvcal/saddlepoint.hpp"

namespace pvcal {

enum class Scenario { gamma_clt, linkage, logistic_gwas, weibull_many_nuisance };

const char* to_string(Scenario s) noexcept;

/// Gamma sample mean with known shape, testing the rate.
struct GammaScenario {
  double shape = 0.01;
  double null_rate = 0.01;
  double true_rate = 0.01;
};

/// Allele sharing (#0, #1, #2) probabilities of sibling pairs.
struct LinkageScenario {
  std::array<double, 3> truth{0.25, 0.5, 0.25};
};

/// Rare-variant logistic regression: y ~ intercept + snp + x1 + x2.
struct GwasScenario {
  double maf = 0.025;
  double x1_prob = 0.5;
  double x2_mean = 20.0;
  double x2_sd = 1.0;
  std::array<double, 4> beta{-3.5, 0.0, 0.02, 0.02};
  bool fixed_labels = false;  // draw labels once, redraw the genotype
};

/// Weibull regression on k IID N(0,1) covariates, testing the first slope.
struct WeibullScenario {
  int k = 50;
  double shape = 1.0;
  double scale = 2.0;
};

/// Reference curve the empirical p-value CDF is compared against.
enum class TheoryKind { automatic, edgeworth, correct_variance, uniform };

struct ExperimentConfig {
  Scenario scenario = Scenario::gamma_clt;
  long n = 750;
  long reps = 1000;
  std::uint64_t seed = 1;
  std::vector<TestMethod> methods{TestMethod::normal};
  Sidedness sided = Sidedness::two_sided;
  int workers = 1;
  TailForm tail_form = TailForm::lugannani_rice;
  TheoryKind theory = TheoryKind::automatic;
  std::vector<double> alphas{1e-4, 1e-3, 0.01, 0.05};

  GammaScenario gamma;
  LinkageScenario linkage;
  GwasScenario gwas;
  WeibullScenario weibull;

  /// Throws Error(config) on invalid combinations.
  void validate() const;
};

struct ShapeLabel {
  enum class Shape { shape1 = 1, shape2, shape3, shape4 };
  Shape shape = Shape::shape1;
  double low_density = 1.0;   // histogram density on [0, 0.05)
  double high_density = 1.0;  // histogram density on [0.95, 1]
  double mode_density = 1.0;  // largest interior bin
  int mode_bin = 0;

  /// Density near 0 significantly below 1.
  bool low_end_deficient = false;
};

const char* to_string(ShapeLabel::Shape s) noexcept;

struct TypeIError {
  double alpha = 0.05;
  double rate = 0.0;
  double se = 0.0;
};

struct MethodSummary {
  TestMethod method = TestMethod::normal;
  std::vector<double> pvalues;  // NaN for excluded replications
  long excluded = 0;
  std::map<std::string, long> error_counts;
  std::vector<long> histogram;  // kHistogramBins counts over [0, 1]
  std::vector<double> ecdf;     // on ExperimentResult::grid
  std::vector<TypeIError> type1;
  double ks_theory = 0.0;
  double ks_uniform = 0.0;
  std::optional<ShapeLabel> shape;  // needs >= 1000 p-values
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<MethodSummary> methods;
  std::vector<double> histogram_edges;
  std::vector<double> grid;
  std::vector<double> theory_cdf;
  std::string theory_name;
  double wall_seconds = 0.0;

  const MethodSummary& method(TestMethod m) const;
};

inline constexpr int kHistogramBins = 50;
inline constexpr int kShapeBins = 20;

/// t = 0.005, 0.010, ..., 0.995.
std::vector<double> standard_grid();

/// Independent stream for replication `index`, a pure function of (seed, index).
std::mt19937_64 replication_engine(std::uint64_t seed, std::uint64_t index);

ExperimentResult run_experiment(const ExperimentConfig& config);

/// Null-hypothesis calibration of the scenario's statistic under the truth
/// (gamma: normal-approximation statistic; linkage: score statistic).
TestStatCalibration scenario_calibration(const ExperimentConfig& config, TheoryKind kind);

/// Theory CDF of the p-values on the grid for the chosen kind.
std::vector<double> theory_curve(const ExperimentConfig& config, TheoryKind kind, std::span<const double> grid);

/// Fraction of p-values <= t at each grid point; NaN entries are ignored.
std::vector<double> empirical_cdf(std::span<const double> pvalues, std::span<const double> grid);

double ks_distance(std::span<const double> empirical, std::span<const double> theoretical);

ShapeLabel classify_shape(std::span<const double> pvalues);

/// Same decision from kShapeBins equal-width bin counts over [0, 1].
ShapeLabel classify_shape_counts(std::span<const long> counts);

TypeIError type1_error(std::span<const double> pvalues, double alpha);

}  // namespace pvcal

#endif  // PVCAL_HARNESS_HPP
