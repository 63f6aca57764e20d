#include "pvcal/saddlepoint.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "pvcal/error.hpp"
#include "pvcal/specialfn.hpp"

namespace pvcal {

const char* to_string(TailForm form) noexcept {
  return form == TailForm::lugannani_rice ? "lugannani_rice" : "rstar_form";
}

namespace {

constexpr int kMaxNewton = 200;
constexpr int kMaxBisect = 400;
constexpr double kPatchRadius = 1e-5;

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

void require_inside_hull(const FamilySpec& family, double target) {
  const auto [lo, hi] = family.support_hull();
  if (!std::isfinite(target) || !(target > lo && target < hi)) {
    throw Error(ErrorKind::no_saddlepoint,
                "saddlepoint: target mean " + fmt(target) + " is not inside the support hull (" +
                    fmt(lo) + ", " + fmt(hi) + ") of " + family.describe());
  }
}

}  // namespace

SaddleSolution solve_saddlepoint(const FamilySpec& family, double target_mean) {
  require_inside_hull(family, target_mean);
  const double tol = 1e-13 * std::max(1.0, std::fabs(target_mean));
  const auto [strip_lo, strip_hi] = family.cgf_strip();
  auto f = [&](double s) { return cgf(family, s, 1) - target_mean; };

  SaddleSolution sol;
  double s = 0.0;
  double fs = f(s);
  if (fs == 0.0) {
    sol.K_at = 0.0;
    sol.K2_at = cgf(family, 0.0, 2);
    return sol;
  }

  // Bracket the root: K' is increasing, so the sign of f(0) fixes the side.
  const double step0 = 1.0 / std::sqrt(cgf(family, 0.0, 2));
  double lo, hi;
  if (fs < 0.0) {
    lo = 0.0;
    if (std::isfinite(strip_hi)) {
      hi = strip_hi - 1e-12 * std::max(1.0, std::fabs(strip_hi));
    } else {
      hi = step0;
      int doublings = 0;
      while (f(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (++doublings > 2000 || !std::isfinite(hi)) {
          throw Error(ErrorKind::convergence, "saddlepoint: could not bracket the root above s = 0");
        }
      }
    }
  } else {
    hi = 0.0;
    if (std::isfinite(strip_lo)) {
      lo = strip_lo + 1e-12 * std::max(1.0, std::fabs(strip_lo));
    } else {
      lo = -step0;
      int doublings = 0;
      while (f(lo) > 0.0) {
        hi = lo;
        lo *= 2.0;
        if (++doublings > 2000 || !std::isfinite(lo)) {
          throw Error(ErrorKind::convergence, "saddlepoint: could not bracket the root below s = 0");
        }
      }
    }
  }

  std::vector<double> trace;
  int it = 0;
  for (; it < kMaxNewton + kMaxBisect; ++it) {
    if (std::fabs(fs) <= tol) break;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(s))) break;
    double next = (lo + hi) / 2.0;
    if (it < kMaxNewton) {
      const double newton = s - fs / cgf(family, s, 2);
      if (newton > lo && newton < hi && std::isfinite(newton)) next = newton;
    }
    s = next;
    fs = f(s);
    if (fs < 0.0) {
      lo = s;
    } else {
      hi = s;
    }
    trace.push_back(s);
  }
  sol.s_hat = s;
  sol.iterations = it;
  sol.K_at = cgf(family, s, 0);
  sol.K2_at = cgf(family, s, 2);
  sol.residual = std::fabs(fs);
  if (!(sol.residual <= 1e-10 * std::max(1.0, std::fabs(target_mean))) || !(sol.K2_at > 0.0)) {
    std::ostringstream os;
    os << "saddlepoint: no convergence for target " << fmt(target_mean) << " after " << it
       << " iterations; last iterates:";
    for (std::size_t i = trace.size() > 5 ? trace.size() - 5 : 0; i < trace.size(); ++i) {
      os << ' ' << fmt(trace[i]);
    }
    throw Error(ErrorKind::convergence, os.str());
  }
  return sol;
}

SaddleRoots saddle_roots(const FamilySpec& family, long n, double observed_mean) {
  if (n < 1) throw Error(ErrorKind::domain, "saddlepoint: n must be >= 1");
  const SaddleSolution sol = solve_saddlepoint(family, observed_mean);
  const double nn = static_cast<double>(n);
  const double gap = std::max(0.0, legendre_gap(family, sol.s_hat));
  SaddleRoots out;
  out.r = std::copysign(std::sqrt(2.0 * nn * gap), sol.s_hat);
  out.u = sol.s_hat * std::sqrt(nn * sol.K2_at);
  if (std::fabs(out.r) < kPatchRadius) {
    // Removable singularity: 1/r - 1/u = n^{-1/2} [c0 + c1 s + O(s^2)].
    const Kappas k = cumulants_of(family);
    const double c0 = k.k3 / (6.0 * std::pow(k.k2, 1.5));
    const double c1 = (3.0 * k.k2 * k.k4 - 5.0 * k.k3 * k.k3) / (24.0 * std::pow(k.k2, 2.5));
    out.correction = (c0 + c1 * sol.s_hat) / std::sqrt(nn);
    out.patched = true;
  } else {
    out.correction = 1.0 / out.r - 1.0 / out.u;
  }
  return out;
}

namespace {

// r* = r + log(u/r)/r, with u/r = 1/(1 - r q) where q = 1/r - 1/u.
double rstar_from_roots(const SaddleRoots& roots) {
  if (roots.patched) {
    const double q = roots.correction;
    return roots.r + q + 0.5 * roots.r * q * q;
  }
  return roots.r + std::log(roots.u / roots.r) / roots.r;
}

}  // namespace

double tail_prob(const FamilySpec& family, long n, double observed_mean, TailForm form) {
  const SaddleRoots roots = saddle_roots(family, n, observed_mean);
  if (form == TailForm::rstar_form) return normal_cdf(rstar_from_roots(roots));
  const double p = normal_cdf(roots.r) + normal_pdf(roots.r) * roots.correction;
  return std::clamp(p, 0.0, 1.0);
}

double upper_tail_prob(const FamilySpec& family, long n, double observed_mean, TailForm form) {
  const SaddleRoots roots = saddle_roots(family, n, observed_mean);
  if (form == TailForm::rstar_form) return normal_sf(rstar_from_roots(roots));
  const double p = normal_sf(roots.r) - normal_pdf(roots.r) * roots.correction;
  return std::clamp(p, 0.0, 1.0);
}

namespace {

// Tail probabilities that are zero (not an error) beyond the support hull.
double lower_or_zero(const FamilySpec& family, long n, double x, TailForm form) {
  const auto [lo, hi] = family.support_hull();
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  return tail_prob(family, n, x, form);
}

double upper_or_zero(const FamilySpec& family, long n, double x, TailForm form) {
  const auto [lo, hi] = family.support_hull();
  if (x >= hi) return 0.0;
  if (x <= lo) return 1.0;
  return upper_tail_prob(family, n, x, form);
}

}  // namespace

double corrected_pvalue(const FamilySpec& family, long n, double observed_mean, Sidedness sided,
                        TailForm form, TwoSidedRule rule) {
  if (!std::isfinite(observed_mean)) {
    throw Error(ErrorKind::domain, "corrected_pvalue: non-finite observed mean");
  }
  if (sided == Sidedness::one_sided) {
    require_inside_hull(family, observed_mean);
    return tail_prob(family, n, observed_mean, form);
  }
  const double mu0 = family.mean();
  double p;
  if (rule == TwoSidedRule::equal_distance) {
    const double d = std::fabs(observed_mean - mu0);
    p = lower_or_zero(family, n, mu0 - d, form) + upper_or_zero(family, n, mu0 + d, form);
  } else {
    require_inside_hull(family, observed_mean);
    p = 2.0 * std::min(tail_prob(family, n, observed_mean, form),
                       upper_tail_prob(family, n, observed_mean, form));
  }
  return std::min(p, 1.0);
}

double normal_pvalue(const FamilySpec& family, long n, double observed_mean, Sidedness sided) {
  if (n < 1) throw Error(ErrorKind::domain, "normal_pvalue: n must be >= 1");
  const double s = std::sqrt(static_cast<double>(n)) * (observed_mean - family.mean()) /
                   std::sqrt(family.variance());
  if (sided == Sidedness::one_sided) return normal_cdf(s);
  return std::min(1.0, 2.0 * normal_cdf(-std::fabs(s)));
}

std::optional<double> exact_pvalue(const FamilySpec& family, long n, double observed_mean,
                                   Sidedness sided, TwoSidedRule rule) {
  const double nn = static_cast<double>(n);
  std::function<double(double)> lower;
  std::function<double(double)> upper;
  if (const auto* g = family.as_gamma()) {
    const double shape = nn * g->shape;
    const double rate = nn * g->rate;
    lower = [=](double x) { return x <= 0.0 ? 0.0 : boost::math::gamma_p(shape, rate * x); };
    upper = [=](double x) { return x <= 0.0 ? 1.0 : boost::math::gamma_q(shape, rate * x); };
  } else if (const auto* nm = family.as_normal()) {
    const double mean = nm->mean;
    const double se = nm->sd / std::sqrt(nn);
    lower = [=](double x) { return normal_cdf((x - mean) / se); };
    upper = [=](double x) { return normal_sf((x - mean) / se); };
  } else {
    return std::nullopt;
  }
  if (sided == Sidedness::one_sided) return lower(observed_mean);
  const double mu0 = family.mean();
  double p;
  if (rule == TwoSidedRule::equal_distance) {
    const double d = std::fabs(observed_mean - mu0);
    p = lower(mu0 - d) + upper(mu0 + d);
  } else {
    p = 2.0 * std::min(lower(observed_mean), upper(observed_mean));
  }
  return std::min(p, 1.0);
}

}  // namespace pvcal
