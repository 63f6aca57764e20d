#ifndef PVCAL_CUMULANTS_HPP
#define PVCAL_CUMULANTS_HPP

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace pvcal {

enum class FamilyTag {
  gamma_known_shape,
  normal,
  multinomial_share,
  bernoulli,
  binomial,
  custom_tabulated,
};

const char* to_string(FamilyTag tag) noexcept;

/// Distribution of a single observation X_i. Continuous families carry
/// closed-form CGFs; discrete families are finite tabulations.
class FamilySpec {
 public:
  struct Gamma {
    double shape;
    double rate;
  };
  struct Normal {
    double mean;
    double sd;
  };
  struct Tabulated {
    std::vector<double> support;  // strictly increasing
    std::vector<double> probs;
  };

  static FamilySpec gamma(double shape, double rate);
  static FamilySpec normal(double mean, double sd);
  /// Allele-sharing counts on {0, 1, 2}.
  static FamilySpec multinomial_share(double p0, double p1, double p2);
  static FamilySpec bernoulli(double p);
  static FamilySpec binomial(int trials, double p);
  static FamilySpec tabulated(std::vector<double> support, std::vector<double> probs);

  /// Distribution of (X - shift) / scale. Gamma families only allow shift = 0.
  FamilySpec affine(double shift, double scale) const;

  FamilyTag tag() const noexcept { return tag_; }
  bool is_discrete() const noexcept { return std::holds_alternative<Tabulated>(params_); }
  const Gamma* as_gamma() const noexcept { return std::get_if<Gamma>(&params_); }
  const Normal* as_normal() const noexcept { return std::get_if<Normal>(&params_); }
  const Tabulated* as_tabulated() const noexcept { return std::get_if<Tabulated>(&params_); }

  double mean() const;
  double variance() const;

  /// Open interval of s where the CGF is finite.
  std::pair<double, double> cgf_strip() const;
  /// Closed convex hull of the support (infinite bounds allowed).
  std::pair<double, double> support_hull() const;

  std::string describe() const;

 private:
  FamilySpec(FamilyTag tag, std::variant<Gamma, Normal, Tabulated> params)
      : tag_(tag), params_(std::move(params)) {}

  FamilyTag tag_;
  std::variant<Gamma, Normal, Tabulated> params_;
};

/// order-th derivative (0..4) of the per-observation CGF K(s) = log E[exp(sX)].
double cgf(const FamilySpec& family, double s, int order);

/// s K'(s) - K(s), evaluated without the cancellation of the naive
/// difference near s = 0.
double legendre_gap(const FamilySpec& family, double s);

/// Per-observation cumulants kappa_1..kappa_4.
struct Kappas {
  double k1, k2, k3, k4;
};
Kappas cumulants_of(const FamilySpec& family);

/// Moments of S_n = sqrt(n) (Xbar_n - a_n) / b_n: mean mu_n, standard
/// deviation v_n, and standardized cumulants of (S_n - mu_n) / v_n.
struct CumulantSet {
  double mu_n = 0.0;
  double v_n = 1.0;
  double rho3 = 0.0;
  double rho4 = 0.0;
  long n = 1;
};

/// X_i - m_i lives on {offset + j * span}; scale_b is the b_n used to
/// standardize S_n.
struct LatticeSpec {
  double offset = 0.0;
  double span = 1.0;
  double scale_b = 1.0;
};

struct TestStatCalibration {
  CumulantSet cumulants;
  std::optional<LatticeSpec> lattice;
  double a_n = 0.0;
  double b_n = 1.0;
};

TestStatCalibration calibrate(const FamilySpec& family, long n, double a_n, double b_n);

/// Largest d such that all support points are congruent modulo d
/// (tolerance 1e-9). Throws if no common span exists.
double lattice_span(std::span<const double> support);

/// k-statistics of the sample mapped to the standardized mean of n
/// observations (a_n = k1, b_n = sqrt(k2), so mu_n = 0 and v_n = 1).
CumulantSet empirical_cumulants(std::span<const double> samples, long n = 1);

}  // namespace pvcal

#endif  // PVCAL_CUMULANTS_HPP
