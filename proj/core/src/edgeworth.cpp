#include "pvcal/edgeworth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pvcal/error.hpp"
#include "pvcal/specialfn.hpp"

namespace pvcal {

const char* to_string(Sidedness sided) noexcept {
  return sided == Sidedness::one_sided ? "one_sided" : "two_sided";
}

double e2(double t, double rho3, double rho4) {
  return -normal_pdf(t) * (rho3 * hermite(2, t) / 6.0 + rho4 * hermite(3, t) / 24.0 +
                           rho3 * rho3 * hermite(5, t) / 72.0);
}

double e2_derivative(double t, double rho3, double rho4) {
  // d/dt [phi He_j] = -phi He_{j+1}
  return normal_pdf(t) * (rho3 * hermite(3, t) / 6.0 + rho4 * hermite(4, t) / 24.0 +
                          rho3 * rho3 * hermite(6, t) / 72.0);
}

double c2(double w, double rho3, const LatticeSpec& lattice, long n, double v_n) {
  if (!(lattice.span > 0.0) || !(lattice.scale_b > 0.0)) {
    throw Error(ErrorKind::domain, "c2: lattice span and scale must be positive");
  }
  if (n < 1 || !(v_n > 0.0)) throw Error(ErrorKind::domain, "c2: need n >= 1 and v_n > 0");
  const double rn = std::sqrt(static_cast<double>(n));
  const double h = lattice.span / (rn * lattice.scale_b * v_n);
  const double phase = rn * lattice.offset / (lattice.scale_b * v_n);
  const double a = (w - phase) / h;
  const double dens = normal_pdf(w);
  return -h * periodic_q(1, a) * dens * (1.0 + rho3 * hermite(3, w) / 6.0) -
         0.5 * h * h * periodic_q(2, a) * w * dens;
}

double standardized_cdf(const TestStatCalibration& cal, double w) {
  const auto& k = cal.cumulants;
  double f = normal_cdf(w) + e2(w, k.rho3, k.rho4);
  if (cal.lattice) f += c2(w, k.rho3, *cal.lattice, k.n, k.v_n);
  return f;
}

namespace {

void check_t(double t, const char* fn) {
  if (!(t > 0.0 && t < 1.0)) {
    throw Error(ErrorKind::domain, std::string(fn) + ": t must lie in (0, 1), got " + std::to_string(t));
  }
}

double standardized_pdf(const TestStatCalibration& cal, double w) {
  const auto& k = cal.cumulants;
  return normal_pdf(w) + e2_derivative(w, k.rho3, k.rho4);
}

}  // namespace

double pvalue_cdf(const TestStatCalibration& cal, double t, Sidedness sided) {
  check_t(t, "pvalue_cdf");
  const auto& k = cal.cumulants;
  if (sided == Sidedness::one_sided) {
    return standardized_cdf(cal, (normal_quantile(t) - k.mu_n) / k.v_n);
  }
  const double z = normal_quantile(0.5 * t);  // negative
  return 1.0 + standardized_cdf(cal, (z - k.mu_n) / k.v_n) -
         standardized_cdf(cal, (-z - k.mu_n) / k.v_n);
}

double pvalue_pdf(const TestStatCalibration& cal, double t, Sidedness sided) {
  check_t(t, "pvalue_pdf");
  if (cal.lattice) {
    throw Error(ErrorKind::unsupported, "pvalue_pdf: a lattice statistic has no p-value density");
  }
  const auto& k = cal.cumulants;
  if (sided == Sidedness::one_sided) {
    const double z = normal_quantile(t);
    return standardized_pdf(cal, (z - k.mu_n) / k.v_n) / (k.v_n * normal_pdf(z));
  }
  const double z = normal_quantile(0.5 * t);
  const double f_lo = standardized_pdf(cal, (z - k.mu_n) / k.v_n);
  const double f_hi = standardized_pdf(cal, (-z - k.mu_n) / k.v_n);
  return (f_lo + f_hi) / (2.0 * k.v_n * normal_pdf(z));
}

bool PValueCurve::any_out_of_range() const noexcept {
  return std::find(out_of_range.begin(), out_of_range.end(), true) != out_of_range.end();
}

PValueCurve pvalue_curve(const TestStatCalibration& cal, std::span<const double> grid,
                         Sidedness sided) {
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw Error(ErrorKind::domain,
                  "pvalue_curve: grid must be strictly increasing (index " + std::to_string(i) + ")");
    }
  }
  PValueCurve curve;
  curve.grid.assign(grid.begin(), grid.end());
  curve.calibration = cal;
  curve.sided = sided;
  curve.lattice = cal.lattice.has_value();
  curve.cdf.reserve(grid.size());
  curve.out_of_range.reserve(grid.size());
  if (!curve.lattice) curve.pdf.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    try {
      const double f = pvalue_cdf(cal, grid[i], sided);
      curve.cdf.push_back(f);
      curve.out_of_range.push_back(f < 0.0 || f > 1.0);
      if (!curve.lattice) curve.pdf.push_back(pvalue_pdf(cal, grid[i], sided));
    } catch (const Error& e) {
      throw Error(e.kind(), "pvalue_curve: grid index " + std::to_string(i) + ": " + e.what());
    }
  }
  return curve;
}

}  // namespace pvcal
