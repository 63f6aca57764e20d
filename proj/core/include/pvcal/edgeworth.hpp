#ifndef PVCAL_EDGEWORTH_HPP
#define PVCAL_EDGEWORTH_HPP

#include <span>
#include <vector>

#include "pvcal/cumulants.hpp"

namespace pvcal {

/// p = Phi(s) for a one-sided test of H0: psi >= psi0, and
/// p = 2 (1 - Phi(|s|)) for a two-sided test.
enum class Sidedness { one_sided, two_sided };

const char* to_string(Sidedness sided) noexcept;

/// Second-order Edgeworth term of the standardized CDF,
/// -phi(t) [rho3 He2(t)/6 + rho4 He3(t)/24 + rho3^2 He5(t)/72].
double e2(double t, double rho3, double rho4);

/// d/dt e2(t, rho3, rho4).
double e2_derivative(double t, double rho3, double rho4);

/// Lattice (continuity) term of the standardized CDF at w for a statistic
/// whose summands live on lattice.offset + j * lattice.span. The lattice of
/// (S_n - mu_n)/v_n has span h = d / (sqrt(n) b_n v_n); the term is
///   phi(w) [-h Q1(a) (1 + rho3 He3(w)/6)] - (h^2/2) Q2(a) w phi(w)
/// with a = (w - sqrt(n) c / (b_n v_n)) / h.
double c2(double w, double rho3, const LatticeSpec& lattice, long n, double v_n);

/// Approximate CDF of (S_n - mu_n)/v_n at w: Phi + E2 (+ C2 on a lattice).
double standardized_cdf(const TestStatCalibration& cal, double w);

/// P(p(S_n) < t).
double pvalue_cdf(const TestStatCalibration& cal, double t, Sidedness sided);

/// d/dt pvalue_cdf; undefined (throws unsupported) on a lattice.
double pvalue_pdf(const TestStatCalibration& cal, double t, Sidedness sided);

struct PValueCurve {
  std::vector<double> grid;
  std::vector<double> cdf;
  std::vector<double> pdf;  // empty for lattice calibrations
  std::vector<bool> out_of_range;
  TestStatCalibration calibration;
  Sidedness sided = Sidedness::two_sided;
  bool lattice = false;

  bool has_pdf() const noexcept { return !pdf.empty(); }
  bool any_out_of_range() const noexcept;
};

PValueCurve pvalue_curve(const TestStatCalibration& cal, std::span<const double> grid,
                         Sidedness sided);

}  // namespace pvcal

#endif  // PVCAL_EDGEWORTH_HPP
