#include "pvcal/rstar.hpp"

#include <cmath>
#include <string>
#include <tuple>
#include <utility>

#include "pvcal/error.hpp"
#include "pvcal/specialfn.hpp"

namespace pvcal {

namespace {

double profile_info(const ModelFit& full, Eigen::Index j) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(full.observed_info);
  if (!lu.isInvertible()) throw Error(ErrorKind::rank_deficient, "r*: singular information at the full fit");
  const double inv_jj = lu.inverse()(j, j);
  if (!(inv_jj > 0.0)) {
    throw Error(ErrorKind::inconsistent, "r*: full-fit information is not positive definite");
  }
  return 1.0 / inv_jj;
}

void check_index(const ModelFit& full, Eigen::Index j) {
  if (j < 0 || j >= full.estimates.size()) throw Error(ErrorKind::domain, "r*: parameter index out of range");
}

double pvalue_from(double r_star, Sidedness sided) {
  if (sided == Sidedness::one_sided) return normal_cdf(r_star);
  return std::min(1.0, 2.0 * normal_cdf(-std::fabs(r_star)));
}

}  // namespace

double likelihood_root(const ModelFit& full, const ModelFit& constrained, double psi0, Eigen::Index j) {
  check_index(full, j);
  if (!full.converged || !constrained.converged) {
    throw Error(ErrorKind::convergence, "likelihood_root: both fits must have converged");
  }
  double dev = full.loglik - constrained.loglik;
  if (dev < -1e-10 * std::max(1.0, std::fabs(full.loglik))) {
    throw Error(ErrorKind::inconsistent, "likelihood_root: constrained log-likelihood exceeds the full one by " +
                                             std::to_string(-dev));
  }
  dev = std::max(dev, 0.0);
  const double diff = full.estimates[j] - psi0;
  if (dev == 0.0 || diff == 0.0) return 0.0;
  return std::copysign(std::sqrt(2.0 * dev), diff);
}

double q_factor(const ModelFit& full, const ModelFit& constrained, double psi0, Eigen::Index j) {
  check_index(full, j);
  const double jp = profile_info(full, j);
  const double ld_full = nuisance_logdet(full, j);
  double ld_con = 0.0;
  if (constrained.nuisance_info_logdet) {
    ld_con = *constrained.nuisance_info_logdet;
  } else {
    try {
      ld_con = nuisance_logdet(constrained, j);
    } catch (const Error&) {
      throw Error(ErrorKind::inconsistent, "q_factor: constrained-fit nuisance information is not positive definite");
    }
  }
  return (full.estimates[j] - psi0) * std::sqrt(jp) * std::exp(0.5 * (ld_full - ld_con));
}

double skovgaard_q(const ScoreCovariances& cov, const ModelFit& full, const ModelFit& constrained, Eigen::Index j) {
  check_index(full, j);
  const auto p = full.estimates.size();
  if (cov.S.rows() != p || cov.q.size() != p || cov.expected_info.rows() != p) {
    throw Error(ErrorKind::domain, "skovgaard_q: dimensions do not match the fit");
  }
  auto logdet = [](const Eigen::MatrixXd& m, const char* block) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorKind::inconsistent, std::string("skovgaard_q: ") + block + " is not positive definite");
    }
    double s = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) s += std::log(llt.matrixL()(i, i));
    return 2.0 * s;
  };
  const double ld_j = logdet(full.observed_info, "observed information at the full fit");
  const double ld_i = logdet(cov.expected_info, "expected information at the full fit");
  double ld_nuis = 0.0;
  if (constrained.nuisance_info_logdet) {
    ld_nuis = *constrained.nuisance_info_logdet;
  } else {
    ld_nuis = nuisance_logdet(constrained, j);
  }
  // |S| [S^{-1} q]_j is the determinant of S with column j replaced by q.
  Eigen::MatrixXd m = cov.S;
  m.col(j) = cov.q;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  double log_abs = 0.0;
  double sign = lu.permutationP().determinant();
  for (Eigen::Index i = 0; i < p; ++i) {
    const double u = lu.matrixLU()(i, i);
    if (u == 0.0) return 0.0;
    if (u < 0.0) sign = -sign;
    log_abs += std::log(std::fabs(u));
  }
  return sign * std::exp(log_abs + 0.5 * ld_j - ld_i - 0.5 * ld_nuis);
}

double model_q_factor(const ModelSpec& model, const DataSet& data, const ModelFit& full,
                      const ModelFit& constrained, double psi0, Eigen::Index j) {
  const auto cov = score_covariances(model, data, full.estimates, constrained.estimates);
  if (cov) return skovgaard_q(*cov, full, constrained, j);
  return q_factor(full, constrained, psi0, j);
}

RStarResult rstar_pvalue(double r, double q, Sidedness sided, const std::optional<RStarBridge>& bridge) {
  RStarResult out;
  out.r = r;
  out.q = q;

  if (std::fabs(r) < kRStarPatch) {
    if (bridge && r >= bridge->r_lo && r <= bridge->r_hi && bridge->r_hi > bridge->r_lo) {
      const double w = (r - bridge->r_lo) / (bridge->r_hi - bridge->r_lo);
      out.r_star = r + (1.0 - w) * bridge->adj_lo + w * bridge->adj_hi;
      out.patched = true;
      out.p_value = pvalue_from(out.r_star, sided);
      return out;
    }
    if (std::fabs(r) < 1e-6) {
      out.r_star = r;
      out.patched = true;
      out.p_value = pvalue_from(out.r_star, sided);
      return out;
    }
  }

  if (q == 0.0 || (q > 0.0) != (r > 0.0)) {
    out.sign_mismatch = true;
    out.r_star = r;
  } else {
    out.r_star = r + std::log(q / r) / r;
  }
  out.p_value = pvalue_from(out.r_star, sided);
  return out;
}

RStarResult rstar_pvalue(const ModelFit& full, const ModelFit& constrained, double psi0, Eigen::Index j,
                         Sidedness sided, const std::optional<RStarBridge>& bridge) {
  return rstar_pvalue(likelihood_root(full, constrained, psi0, j), q_factor(full, constrained, psi0, j), sided,
                      bridge);
}

RStarResult rstar_test(const RefitFn& refit, Eigen::Index j, double psi0, Sidedness sided, const QFn& qfn) {
  const ModelFit full = refit(std::nullopt);
  check_index(full, j);
  auto q_of = [&](const ModelFit& con, double psi) {
    return qfn ? qfn(full, con, psi) : q_factor(full, con, psi, j);
  };
  const ModelFit con = refit(psi0);
  const double r = likelihood_root(full, con, psi0, j);
  if (std::fabs(r) >= kRStarPatch) return rstar_pvalue(r, q_of(con, psi0), sided);

  // Anchor the bridge where log(Q/r)/r is numerically stable: |r| near 0.1.
  const double se = 1.0 / std::sqrt(profile_info(full, j));
  const double psi_hat = full.estimates[j];
  auto adjustment_at = [&](double psi) {
    const ModelFit c = refit(psi);
    const double rr = likelihood_root(full, c, psi, j);
    const double qq = q_of(c, psi);
    if (rr == 0.0 || qq == 0.0 || (qq > 0.0) != (rr > 0.0)) {
      throw Error(ErrorKind::inconsistent, "rstar_test: bridge anchor has a sign mismatch");
    }
    return std::pair{rr, std::log(qq / rr) / rr};
  };
  RStarBridge bridge;
  std::tie(bridge.r_lo, bridge.adj_lo) = adjustment_at(psi_hat + 0.1 * se);
  std::tie(bridge.r_hi, bridge.adj_hi) = adjustment_at(psi_hat - 0.1 * se);
  const double q = r == 0.0 ? 0.0 : q_of(con, psi0);
  return rstar_pvalue(r, q, sided, bridge);
}

RStarResult rstar_test(const ModelSpec& model, const DataSet& data, Eigen::Index j, double psi0, Sidedness sided) {
  return rstar_test(
      [&](std::optional<double> psi) {
        return psi ? fit_constrained(model, data, j, *psi) : fit_mle(model, data);
      },
      j, psi0, sided,
      [&](const ModelFit& full, const ModelFit& con, double psi) {
        return model_q_factor(model, data, full, con, psi, j);
      });
}

}  // namespace pvcal
