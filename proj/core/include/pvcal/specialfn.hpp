#ifndef PVCAL_SPECIALFN_HPP
#define PVCAL_SPECIALFN_HPP

namespace pvcal {

/// Standard normal density.
double normal_pdf(double t);

/// Standard normal CDF, computed from erfc so the lower tail keeps full
/// relative accuracy down to the subnormal range.
double normal_cdf(double t);

/// Upper tail 1 - Phi(t), evaluated directly (never as 1 - normal_cdf).
double normal_sf(double t);

/// Standard normal quantile. AS241 rational approximation followed by one
/// Halley step against normal_cdf; accurate for p down to ~1e-300.
double normal_quantile(double p);

/// Probabilists' Hermite polynomial He_j(t), 0 <= j <= 6, defined by
/// d^j/dt^j phi(t) = (-1)^j He_j(t) phi(t).
double hermite(int j, double t);

/// Periodic polynomials of period 1 used by the lattice correction:
/// Q1(u) = u - 1/2 and Q2(u) = u^2 - u + 1/6 on u = t - floor(t) in [0, 1).
double periodic_q(int j, double t);

}  // namespace pvcal

#endif  // PVCAL_SPECIALFN_HPP
