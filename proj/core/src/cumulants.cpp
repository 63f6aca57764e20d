#include "pvcal/cumulants.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>

#include "pvcal/error.hpp"

namespace pvcal {

const char* to_string(FamilyTag tag) noexcept {
  switch (tag) {
    case FamilyTag::gamma_known_shape: return "gamma";
    case FamilyTag::normal: return "normal";
    case FamilyTag::multinomial_share: return "multinomial_share";
    case FamilyTag::bernoulli: return "bernoulli";
    case FamilyTag::binomial: return "binomial";
    case FamilyTag::custom_tabulated: return "tabulated";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_probabilities(const std::vector<double>& probs) {
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorKind::domain, "family: probabilities must be finite and non-negative");
    }
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "family: probabilities must sum to 1 (got " << total << ")";
    throw Error(ErrorKind::domain, os.str());
  }
}

// Tilted moments of a finite distribution at s: returns K(s) and the first
// four cumulants of the exponentially tilted law.
struct Tilted {
  double log_mgf, k1, k2, k3, k4;
};

Tilted tilt(const FamilySpec::Tabulated& tab, double s) {
  double shift = -kInf;
  for (std::size_t i = 0; i < tab.support.size(); ++i) {
    if (tab.probs[i] > 0.0) shift = std::max(shift, s * tab.support[i]);
  }
  std::vector<double> w(tab.support.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (tab.probs[i] > 0.0) {
      w[i] = tab.probs[i] * std::exp(s * tab.support[i] - shift);
      total += w[i];
    }
  }
  double m1 = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] /= total;
    m1 += w[i] * tab.support[i];
  }
  double c2 = 0.0, c3 = 0.0, c4 = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = tab.support[i] - m1;
    const double d2 = d * d;
    c2 += w[i] * d2;
    c3 += w[i] * d2 * d;
    c4 += w[i] * d2 * d2;
  }
  return {shift + std::log(total), m1, c2, c3, c4 - 3.0 * c2 * c2};
}

double real_gcd(double a, double b, double tol) {
  if (a < b) std::swap(a, b);
  while (b > tol) {
    double r = std::fmod(a, b);
    if (b - r < tol) r = 0.0;
    a = b;
    b = r;
  }
  return a;
}

}  // namespace

FamilySpec FamilySpec::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    throw Error(ErrorKind::domain, "gamma family: shape and rate must be positive and finite");
  }
  return FamilySpec(FamilyTag::gamma_known_shape, Gamma{shape, rate});
}

FamilySpec FamilySpec::normal(double mean, double sd) {
  if (!std::isfinite(mean) || !(sd > 0.0) || !std::isfinite(sd)) {
    throw Error(ErrorKind::domain, "normal family: mean must be finite and sd positive");
  }
  return FamilySpec(FamilyTag::normal, Normal{mean, sd});
}

FamilySpec FamilySpec::multinomial_share(double p0, double p1, double p2) {
  auto f = tabulated({0.0, 1.0, 2.0}, {p0, p1, p2});
  f.tag_ = FamilyTag::multinomial_share;
  return f;
}

FamilySpec FamilySpec::bernoulli(double p) {
  auto f = tabulated({0.0, 1.0}, {1.0 - p, p});
  f.tag_ = FamilyTag::bernoulli;
  return f;
}

FamilySpec FamilySpec::binomial(int trials, double p) {
  if (trials < 1 || !(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorKind::domain, "binomial family: need trials >= 1 and p in [0, 1]");
  }
  std::vector<double> support(trials + 1);
  std::vector<double> probs(trials + 1);
  for (int k = 0; k <= trials; ++k) {
    support[k] = k;
    const double log_choose =
        std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0);
    const double lp = (k > 0 ? k * std::log(p) : 0.0) +
                      (trials - k > 0 ? (trials - k) * std::log1p(-p) : 0.0);
    probs[k] = std::exp(log_choose + lp);
  }
  // Renormalize away the last-ulp drift of the lgamma route.
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (double& q : probs) q /= total;
  auto f = tabulated(std::move(support), std::move(probs));
  f.tag_ = FamilyTag::binomial;
  return f;
}

FamilySpec FamilySpec::tabulated(std::vector<double> support, std::vector<double> probs) {
  if (support.empty() || support.size() != probs.size()) {
    throw Error(ErrorKind::domain, "tabulated family: support and probabilities must be non-empty and equal length");
  }
  for (double x : support) {
    if (!std::isfinite(x)) throw Error(ErrorKind::domain, "tabulated family: non-finite support point");
  }
  for (std::size_t i = 1; i < support.size(); ++i) {
    if (!(support[i] > support[i - 1])) {
      throw Error(ErrorKind::domain, "tabulated family: support must be strictly increasing");
    }
  }
  check_probabilities(probs);
  return FamilySpec(FamilyTag::custom_tabulated, Tabulated{std::move(support), std::move(probs)});
}

FamilySpec FamilySpec::affine(double shift, double scale) const {
  if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(shift)) {
    throw Error(ErrorKind::domain, "affine: scale must be positive and finite");
  }
  if (const auto* g = as_gamma()) {
    if (shift != 0.0) {
      throw Error(ErrorKind::unsupported, "affine: a shifted gamma is not a gamma family");
    }
    return FamilySpec(tag_, Gamma{g->shape, g->rate * scale});
  }
  if (const auto* nm = as_normal()) {
    return FamilySpec(tag_, Normal{(nm->mean - shift) / scale, nm->sd / scale});
  }
  const auto& tab = std::get<Tabulated>(params_);
  Tabulated out = tab;
  for (double& x : out.support) x = (x - shift) / scale;
  return FamilySpec(tag_, std::move(out));
}

double FamilySpec::mean() const { return cgf(*this, 0.0, 1); }
double FamilySpec::variance() const { return cgf(*this, 0.0, 2); }

std::pair<double, double> FamilySpec::cgf_strip() const {
  if (const auto* g = as_gamma()) return {-kInf, g->rate};
  return {-kInf, kInf};
}

std::pair<double, double> FamilySpec::support_hull() const {
  if (as_gamma() != nullptr) return {0.0, kInf};
  if (as_normal() != nullptr) return {-kInf, kInf};
  const auto& tab = std::get<Tabulated>(params_);
  double lo = kInf, hi = -kInf;
  for (std::size_t i = 0; i < tab.support.size(); ++i) {
    if (tab.probs[i] > 0.0) {
      lo = std::min(lo, tab.support[i]);
      hi = std::max(hi, tab.support[i]);
    }
  }
  return {lo, hi};
}

std::string FamilySpec::describe() const {
  std::ostringstream os;
  os.precision(10);
  os << to_string(tag_) << "(";
  if (const auto* g = as_gamma()) {
    os << "shape=" << g->shape << ", rate=" << g->rate;
  } else if (const auto* nm = as_normal()) {
    os << "mean=" << nm->mean << ", sd=" << nm->sd;
  } else {
    const auto& tab = std::get<Tabulated>(params_);
    for (std::size_t i = 0; i < tab.support.size(); ++i) {
      if (i) os << ", ";
      os << tab.support[i] << ":" << tab.probs[i];
    }
  }
  os << ")";
  return os.str();
}

double cgf(const FamilySpec& family, double s, int order) {
  if (order < 0 || order > 4) {
    throw Error(ErrorKind::domain, "cgf: order must be in 0..4");
  }
  if (!std::isfinite(s)) throw Error(ErrorKind::domain, "cgf: non-finite s");
  if (const auto* g = family.as_gamma()) {
    if (!(s < g->rate)) {
      std::ostringstream os;
      os.precision(17);
      os << "cgf: s = " << s << " outside the convergence strip (-inf, " << g->rate << ")";
      throw Error(ErrorKind::domain, os.str());
    }
    const double gap = g->rate - s;
    switch (order) {
      case 0: return -g->shape * std::log1p(-s / g->rate);
      case 1: return g->shape / gap;
      case 2: return g->shape / (gap * gap);
      case 3: return 2.0 * g->shape / (gap * gap * gap);
      default: return 6.0 * g->shape / (gap * gap * gap * gap);
    }
  }
  if (const auto* nm = family.as_normal()) {
    const double var = nm->sd * nm->sd;
    switch (order) {
      case 0: return nm->mean * s + 0.5 * var * s * s;
      case 1: return nm->mean + var * s;
      case 2: return var;
      default: return 0.0;
    }
  }
  const Tilted t = tilt(*family.as_tabulated(), s);
  switch (order) {
    case 0: return t.log_mgf;
    case 1: return t.k1;
    case 2: return t.k2;
    case 3: return t.k3;
    default: return t.k4;
  }
}

double legendre_gap(const FamilySpec& family, double s) {
  if (s == 0.0) return 0.0;
  if (const auto* g = family.as_gamma()) {
    if (!(s < g->rate)) throw Error(ErrorKind::domain, "legendre_gap: s outside the convergence strip");
    // alpha * [x/(1-x) + log(1-x)] = alpha * sum_{k>=2} (1 - 1/k) x^k, x = s/rate
    const double x = s / g->rate;
    if (std::fabs(x) < 0.25) {
      double term = x * x;
      double sum = 0.0;
      for (int k = 2; k < 200; ++k) {
        const double add = (1.0 - 1.0 / k) * term;
        sum += add;
        if (std::fabs(add) < 1e-18 * std::fabs(sum)) break;
        term *= x;
      }
      return g->shape * sum;
    }
    return g->shape * (x / (1.0 - x) + std::log1p(-x));
  }
  if (const auto* nm = family.as_normal()) {
    return 0.5 * nm->sd * nm->sd * s * s;
  }
  const double scale = std::sqrt(cgf(family, 0.0, 2));
  if (std::fabs(s) * scale < 1.0) {
    // s K'(s) - K(s) = int_0^s t K''(t) dt; the integrand has the sign of t.
    auto integrand = [&](double t) { return t * cgf(family, t, 2); };
    return boost::math::quadrature::gauss<double, 20>::integrate(integrand, 0.0, s);
  }
  return s * cgf(family, s, 1) - cgf(family, s, 0);
}

Kappas cumulants_of(const FamilySpec& family) {
  return {cgf(family, 0.0, 1), cgf(family, 0.0, 2), cgf(family, 0.0, 3), cgf(family, 0.0, 4)};
}

double lattice_span(std::span<const double> support) {
  if (support.size() < 2) {
    throw Error(ErrorKind::degenerate, "lattice_span: need at least two support points");
  }
  const auto [lo_it, hi_it] = std::minmax_element(support.begin(), support.end());
  const double range = *hi_it - *lo_it;
  if (!(range > 0.0)) throw Error(ErrorKind::degenerate, "lattice_span: support is a single point");
  const double tol = 1e-9 * std::max(1.0, range);
  double d = 0.0;
  for (double x : support) {
    const double diff = std::fabs(x - support[0]);
    if (diff <= tol) continue;
    d = d == 0.0 ? diff : real_gcd(d, diff, tol);
  }
  if (!(d > tol) || range / d > 1e6) {
    throw Error(ErrorKind::unsupported, "lattice_span: support points share no common lattice span");
  }
  for (double x : support) {
    const double steps = (x - support[0]) / d;
    if (std::fabs(steps - std::round(steps)) * d > tol * 10.0) {
      throw Error(ErrorKind::unsupported, "lattice_span: support points share no common lattice span");
    }
  }
  return d;
}

TestStatCalibration calibrate(const FamilySpec& family, long n, double a_n, double b_n) {
  if (n < 1) throw Error(ErrorKind::domain, "calibrate: n must be >= 1");
  if (!(b_n > 0.0) || !std::isfinite(b_n) || !std::isfinite(a_n)) {
    throw Error(ErrorKind::domain, "calibrate: b_n must be positive and a_n finite");
  }
  const Kappas k = cumulants_of(family);
  if (!(k.k2 > 1e-300)) {
    throw Error(ErrorKind::degenerate, "calibrate: per-observation variance is zero");
  }
  const double rn = std::sqrt(static_cast<double>(n));
  TestStatCalibration cal;
  cal.a_n = a_n;
  cal.b_n = b_n;
  cal.cumulants.n = n;
  cal.cumulants.mu_n = rn * (k.k1 - a_n) / b_n;
  cal.cumulants.v_n = std::sqrt(k.k2) / b_n;
  cal.cumulants.rho3 = k.k3 / (std::pow(k.k2, 1.5) * rn);
  cal.cumulants.rho4 = k.k4 / (k.k2 * k.k2 * static_cast<double>(n));
  if (const auto* tab = family.as_tabulated()) {
    std::vector<double> pts;
    for (std::size_t i = 0; i < tab->support.size(); ++i) {
      if (tab->probs[i] > 0.0) pts.push_back(tab->support[i]);
    }
    LatticeSpec lat;
    lat.span = lattice_span(pts);
    // Residue of the first support point relative to the mean.
    double c = std::fmod(pts.front() - k.k1, lat.span);
    if (c < 0.0) c += lat.span;
    if (lat.span - c < 1e-12 * lat.span) c = 0.0;
    lat.offset = c;
    lat.scale_b = b_n;
    cal.lattice = lat;
  }
  return cal;
}

CumulantSet empirical_cumulants(std::span<const double> samples, long n) {
  if (samples.size() < 8) {
    throw Error(ErrorKind::domain, "empirical_cumulants: need at least 8 samples");
  }
  if (n < 1) throw Error(ErrorKind::domain, "empirical_cumulants: n must be >= 1");
  const double count = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / count;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : samples) {
    const double d = x - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= count;
  m3 /= count;
  m4 /= count;
  if (!(m2 > 0.0)) throw Error(ErrorKind::degenerate, "empirical_cumulants: zero sample variance");

  const double N = count;
  const double k2 = N / (N - 1.0) * m2;
  const double k3 = N * N / ((N - 1.0) * (N - 2.0)) * m3;
  const double k4 = N * N * ((N + 1.0) * m4 - 3.0 * (N - 1.0) * m2 * m2) /
                    ((N - 1.0) * (N - 2.0) * (N - 3.0));

  CumulantSet out;
  out.n = n;
  out.mu_n = 0.0;
  out.v_n = 1.0;
  out.rho3 = k3 / (std::pow(k2, 1.5) * std::sqrt(static_cast<double>(n)));
  out.rho4 = k4 / (k2 * k2 * static_cast<double>(n));
  return out;
}

}  // namespace pvcal
