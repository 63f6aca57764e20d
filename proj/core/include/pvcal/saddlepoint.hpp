#ifndef PVCAL_SADDLEPOINT_HPP
#define PVCAL_SADDLEPOINT_HPP

#include <optional>

#include "pvcal/cumulants.hpp"
#include "pvcal/edgeworth.hpp"

namespace pvcal {

struct SaddleSolution {
  double s_hat = 0.0;
  double K_at = 0.0;
  double K2_at = 0.0;
  double residual = 0.0;  // |K'(s_hat) - target|
  int iterations = 0;
};

enum class TailForm { lugannani_rice, rstar_form };

/// How two-sided p-values are formed from the two tails.
///  equal_distance: P(Xbar <= mu0 - d) + P(Xbar >= mu0 + d), d = |xbar - mu0|,
///                  i.e. the probability of a statistic at least as far from
///                  the null mean as the observed one.
///  doubled_min:    2 min(P(Xbar <= xbar), P(Xbar >= xbar)).
enum class TwoSidedRule { equal_distance, doubled_min };

const char* to_string(TailForm form) noexcept;

/// Solves K'(s) = target_mean by safeguarded Newton inside the CGF strip.
SaddleSolution solve_saddlepoint(const FamilySpec& family, double target_mean);

/// Signed likelihood root r and standardized saddlepoint u for the mean of n
/// observations at observed_mean.
struct SaddleRoots {
  double r = 0.0;
  double u = 0.0;
  double correction = 0.0;  // 1/r - 1/u, or its limit inside the patch
  bool patched = false;
};
SaddleRoots saddle_roots(const FamilySpec& family, long n, double observed_mean);

/// Lower tail P(Xbar < observed_mean).
double tail_prob(const FamilySpec& family, long n, double observed_mean,
                 TailForm form = TailForm::lugannani_rice);

/// Upper tail P(Xbar > observed_mean), computed without 1 - lower cancellation.
double upper_tail_prob(const FamilySpec& family, long n, double observed_mean,
                       TailForm form = TailForm::lugannani_rice);

/// Saddlepoint p-value for a sample mean under the null family. One-sided
/// p-values are lower tails (small means are evidence against H0).
double corrected_pvalue(const FamilySpec& family, long n, double observed_mean, Sidedness sided,
                        TailForm form = TailForm::lugannani_rice,
                        TwoSidedRule rule = TwoSidedRule::equal_distance);

/// First-order p-value from S = sqrt(n) (xbar - mu0) / sigma0.
double normal_pvalue(const FamilySpec& family, long n, double observed_mean, Sidedness sided);

/// Exact p-value when the distribution of the mean is available in closed
/// form (gamma: Xbar ~ Gamma(n shape, n rate); normal). nullopt otherwise.
std::optional<double> exact_pvalue(const FamilySpec& family, long n, double observed_mean,
                                   Sidedness sided,
                                   TwoSidedRule rule = TwoSidedRule::equal_distance);

}  // namespace pvcal

#endif  // PVCAL_SADDLEPOINT_HPP
