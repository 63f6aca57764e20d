#include "pvcal/specialfn.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "pvcal/error.hpp"

namespace pvcal {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::domain: return "domain";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::no_saddlepoint: return "no_saddlepoint";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::separation: return "separation";
    case ErrorKind::rank_deficient: return "rank_deficient";
    case ErrorKind::inconsistent: return "inconsistent";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

namespace {

constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;  // 1/sqrt(2 pi)

void require_finite(double t, const char* fn) {
  if (!std::isfinite(t)) {
    throw Error(ErrorKind::domain, std::string(fn) + ": non-finite argument");
  }
}

// AS241 (PPND16) for the lower half, p <= 0.5.
double ppnd16_lower(double p) {
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                 67265.770927008700853) * r + 45921.953931549871457) * r +
               13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r +
                 39307.89580009271061) * r + 21213.794301586595867) * r +
               5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = std::sqrt(-std::log(p));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
                0.24178072517745061177) * r + 1.27045825245236838258) * r +
              3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
                0.0151986665636164571966) * r + 0.14810397642748007459) * r +
              0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                0.0012426609473880784386) * r + 0.026532189526576123093) * r +
              0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
                1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
              0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return -val;
}

}  // namespace

double normal_pdf(double t) {
  require_finite(t, "normal_pdf");
  return kInvSqrt2Pi * std::exp(-0.5 * t * t);
}

double normal_cdf(double t) {
  require_finite(t, "normal_cdf");
  return 0.5 * std::erfc(-t / std::numbers::sqrt2);
}

double normal_sf(double t) {
  require_finite(t, "normal_sf");
  return 0.5 * std::erfc(t / std::numbers::sqrt2);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorKind::domain, "normal_quantile: p must lie in (0, 1), got " +
                                       std::to_string(p));
  }
  if (p == 0.5) return 0.0;
  // 1 - p is exact for p in [0.5, 1), so working in the lower half loses
  // nothing and the polish step sees a tail probability with full precision.
  const bool upper = p > 0.5;
  const double lower_p = upper ? 1.0 - p : p;
  double x = ppnd16_lower(lower_p);

  const double err = normal_cdf(x) - lower_p;
  const double u = err / normal_pdf(x);
  x -= u / (1.0 + 0.5 * x * u);
  return upper ? -x : x;
}

double hermite(int j, double t) {
  if (j < 0 || j > 6) {
    throw Error(ErrorKind::domain, "hermite: order must be in 0..6, got " + std::to_string(j));
  }
  require_finite(t, "hermite");
  if (j == 0) return 1.0;
  double prev = 1.0;
  double cur = t;
  for (int k = 1; k < j; ++k) {
    const double next = t * cur - k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

double periodic_q(int j, double t) {
  if (j != 1 && j != 2) {
    throw Error(ErrorKind::domain, "periodic_q: order must be 1 or 2, got " + std::to_string(j));
  }
  require_finite(t, "periodic_q");
  double u = t - std::floor(t);
  if (u >= 1.0) u = 0.0;  // t slightly below an integer can round up
  if (j == 1) return u - 0.5;
  return u * u - u + 1.0 / 6.0;
}

}  // namespace pvcal
