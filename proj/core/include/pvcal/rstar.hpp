#ifndef PVCAL_RSTAR_HPP
#define PVCAL_RSTAR_HPP

#include <functional>
#include <optional>

#include "pvcal/edgeworth.hpp"
#include "pvcal/models.hpp"

namespace pvcal {

struct RStarResult {
  double r = 0.0;
  double q = 0.0;
  double r_star = 0.0;
  double p_value = 1.0;
  bool patched = false;        // small-r bridge in use
  bool sign_mismatch = false;  // Q and r disagree in sign; r_star fell back to r
};

/// Adjustments log(Q/r)/r measured at two likelihood roots either side of
/// zero. Inside (r_lo, r_hi) the adjustment is interpolated linearly in r.
struct RStarBridge {
  double r_lo = 0.0;
  double adj_lo = 0.0;
  double r_hi = 0.0;
  double adj_hi = 0.0;
};

/// |r| below this uses the bridge.
inline constexpr double kRStarPatch = 0.05;

/// sign(psi_hat - psi0) sqrt(2 [l(full) - l(constrained)]).
double likelihood_root(const ModelFit& full, const ModelFit& constrained, double psi0, Eigen::Index j);

/// (psi_hat - psi0) sqrt(j_prof) sqrt(det I_nuis(full) / det I_nuis(constrained)),
/// j_prof = 1 / [I^{-1}]_jj at the full fit.
double q_factor(const ModelFit& full, const ModelFit& constrained, double psi0, Eigen::Index j);

/// Q of a model that is not a canonical exponential family, from Skovgaard's
/// approximation to the sample-space derivatives:
///   |j_hat|^{1/2} |i_hat|^{-1} |S| [S^{-1} q]_j / |j_tilde_nuis|^{1/2}.
/// Reduces to q_factor for full exponential families.
double skovgaard_q(const ScoreCovariances& cov, const ModelFit& full, const ModelFit& constrained, Eigen::Index j);

/// Q for `model`: skovgaard_q where score_covariances exists, else q_factor.
double model_q_factor(const ModelSpec& model, const DataSet& data, const ModelFit& full,
                      const ModelFit& constrained, double psi0, Eigen::Index j);

/// r* = r + log(Q/r)/r. One-sided p = Phi(r*), two-sided 2 Phi(-|r*|).
RStarResult rstar_pvalue(const ModelFit& full, const ModelFit& constrained, double psi0, Eigen::Index j,
                         Sidedness sided, const std::optional<RStarBridge>& bridge = std::nullopt);

/// Same with Q supplied by the caller.
RStarResult rstar_pvalue(double r, double q, Sidedness sided,
                         const std::optional<RStarBridge>& bridge = std::nullopt);

/// Refit callback: nullopt gives the full fit, a value the fit with the
/// interest parameter held there.
using RefitFn = std::function<ModelFit(std::optional<double>)>;
/// Q from (full, constrained, psi0); empty means q_factor.
using QFn = std::function<double(const ModelFit&, const ModelFit&, double)>;

/// Uses `refit` for the two fits, plus two more for the bridge when r falls
/// inside the patch.
RStarResult rstar_test(const RefitFn& refit, Eigen::Index j, double psi0, Sidedness sided, const QFn& qfn = {});

/// Fits both models and builds the bridge when r falls inside the patch.
RStarResult rstar_test(const ModelSpec& model, const DataSet& data, Eigen::Index j, double psi0,
                       Sidedness sided);

}  // namespace pvcal

#endif  // PVCAL_RSTAR_HPP
