#include "pvcal/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "pvcal/error.hpp"
#include "pvcal/rstar.hpp"
#include "pvcal/specialfn.hpp"

namespace pvcal {

const char* to_string(Scenario s) noexcept {
  switch (s) {
    case Scenario::gamma_clt: return "gamma_clt";
    case Scenario::linkage: return "linkage";
    case Scenario::logistic_gwas: return "logistic_gwas";
    case Scenario::weibull_many_nuisance: return "weibull_many_nuisance";
  }
  return "unknown";
}

const char* to_string(ShapeLabel::Shape s) noexcept {
  switch (s) {
    case ShapeLabel::Shape::shape1: return "Shape1";
    case ShapeLabel::Shape::shape2: return "Shape2";
    case ShapeLabel::Shape::shape3: return "Shape3";
    case ShapeLabel::Shape::shape4: return "Shape4";
  }
  return "unknown";
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool allowed(Scenario s, TestMethod m) {
  switch (s) {
    case Scenario::gamma_clt:
      return m == TestMethod::normal || m == TestMethod::saddlepoint || m == TestMethod::rstar;
    case Scenario::linkage:
      return m == TestMethod::score || m == TestMethod::wald || m == TestMethod::normal;
    case Scenario::logistic_gwas:
      return m == TestMethod::score || m == TestMethod::wald || m == TestMethod::rstar;
    case Scenario::weibull_many_nuisance:
      return m == TestMethod::wald || m == TestMethod::rstar;
  }
  return false;
}

void config_error(const std::string& what) { throw Error(ErrorKind::config, what); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (reps < 1) config_error("reps must be >= 1");
  if (n < 1) config_error("n must be >= 1");
  if (workers < 1) config_error("workers must be >= 1");
  if (methods.empty()) config_error("at least one method is required");
  for (const auto m : methods) {
    if (!allowed(scenario, m)) {
      config_error(std::string("method '") + to_string(m) + "' is not available for scenario '" + to_string(scenario) +
                   "'");
    }
  }
  for (const double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) config_error("alphas must lie in (0, 1)");
  }
  switch (scenario) {
    case Scenario::gamma_clt:
      if (!(gamma.shape > 0.0) || !(gamma.null_rate > 0.0) || !(gamma.true_rate > 0.0)) {
        config_error("gamma: shape and rates must be positive");
      }
      break;
    case Scenario::linkage: {
      double total = 0.0;
      for (const double p : linkage.truth) {
        if (!(p >= 0.0)) config_error("linkage: probabilities must be non-negative");
        total += p;
      }
      if (std::fabs(total - 1.0) > 1e-9) config_error("linkage: probabilities must sum to 1");
      if (sided != Sidedness::two_sided) config_error("linkage: only two-sided tests are supported");
      break;
    }
    case Scenario::logistic_gwas:
      if (!(gwas.maf > 0.0 && gwas.maf < 0.5)) config_error("gwas: maf must lie in (0, 0.5)");
      if (!(gwas.x1_prob > 0.0 && gwas.x1_prob < 1.0)) config_error("gwas: x1_prob must lie in (0, 1)");
      if (!(gwas.x2_sd > 0.0)) config_error("gwas: x2_sd must be positive");
      if (n < 10) config_error("gwas: n must be >= 10");
      break;
    case Scenario::weibull_many_nuisance:
      if (weibull.k < 1) config_error("weibull: k must be >= 1");
      if (!(weibull.shape > 0.0) || !(weibull.scale > 0.0)) config_error("weibull: shape and scale must be positive");
      if (n <= weibull.k + 2) config_error("weibull: n must exceed k + 2");
      break;
  }
  const bool parametric = scenario == Scenario::logistic_gwas || scenario == Scenario::weibull_many_nuisance;
  if (parametric && (theory == TheoryKind::edgeworth || theory == TheoryKind::correct_variance)) {
    config_error("theory curves for regression scenarios are uniform only");
  }
}

const MethodSummary& ExperimentResult::method(TestMethod m) const {
  for (const auto& s : methods) {
    if (s.method == m) return s;
  }
  throw Error(ErrorKind::domain, std::string("experiment has no method '") + to_string(m) + "'");
}

std::vector<double> standard_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 199; ++i) g.push_back(0.005 * i);
  return g;
}

std::mt19937_64 replication_engine(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t a = splitmix64(seed ^ splitmix64(index));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

TestStatCalibration scenario_calibration(const ExperimentConfig& config, TheoryKind kind) {
  FamilySpec truth = FamilySpec::normal(0.0, 1.0);
  double a = 0.0, b = 1.0;
  switch (config.scenario) {
    case Scenario::gamma_clt:
      truth = FamilySpec::gamma(config.gamma.shape, config.gamma.true_rate);
      a = config.gamma.shape / config.gamma.null_rate;
      b = std::sqrt(config.gamma.shape) / config.gamma.null_rate;
      break;
    case Scenario::linkage:
      truth = FamilySpec::multinomial_share(config.linkage.truth[0], config.linkage.truth[1], config.linkage.truth[2]);
      a = 1.0;
      b = std::sqrt(0.5);
      break;
    default:
      throw Error(ErrorKind::config, "scenario has no Edgeworth calibration");
  }
  if (kind == TheoryKind::correct_variance) {
    TestStatCalibration cal;
    const double sd = std::sqrt(truth.variance());
    cal.a_n = a;
    cal.b_n = sd;
    cal.cumulants.n = config.n;
    cal.cumulants.mu_n = std::sqrt(static_cast<double>(config.n)) * (truth.mean() - a) / sd;
    cal.cumulants.v_n = 1.0;
    return cal;
  }
  return calibrate(truth, config.n, a, b);
}

std::vector<double> theory_curve(const ExperimentConfig& config, TheoryKind kind, std::span<const double> grid) {
  if (kind == TheoryKind::automatic) {
    kind = (config.scenario == Scenario::gamma_clt || config.scenario == Scenario::linkage) ? TheoryKind::edgeworth
                                                                                           : TheoryKind::uniform;
  }
  if (kind == TheoryKind::uniform) return {grid.begin(), grid.end()};
  return pvalue_curve(scenario_calibration(config, kind), grid, config.sided).cdf;
}

std::vector<double> empirical_cdf(std::span<const double> pvalues, std::span<const double> grid) {
  std::vector<double> sorted;
  sorted.reserve(pvalues.size());
  for (const double p : pvalues) {
    if (!std::isnan(p)) sorted.push_back(p);
  }
  if (sorted.empty()) throw Error(ErrorKind::domain, "empirical_cdf: no p-values");
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(grid.size());
  const double n = static_cast<double>(sorted.size());
  for (const double t : grid) {
    out.push_back(static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin()) / n);
  }
  return out;
}

double ks_distance(std::span<const double> empirical, std::span<const double> theoretical) {
  if (empirical.size() != theoretical.size()) {
    throw Error(ErrorKind::domain, "ks_distance: grids differ in length (" + std::to_string(empirical.size()) +
                                       " vs " + std::to_string(theoretical.size()) + ")");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < empirical.size(); ++i) d = std::max(d, std::fabs(empirical[i] - theoretical[i]));
  return d;
}

TypeIError type1_error(std::span<const double> pvalues, double alpha) {
  long total = 0, hits = 0;
  for (const double p : pvalues) {
    if (std::isnan(p)) continue;
    ++total;
    if (p <= alpha) ++hits;
  }
  if (total == 0) throw Error(ErrorKind::domain, "type1_error: no p-values");
  TypeIError out;
  out.alpha = alpha;
  out.rate = static_cast<double>(hits) / static_cast<double>(total);
  out.se = std::sqrt(out.rate * (1.0 - out.rate) / static_cast<double>(total));
  return out;
}

ShapeLabel classify_shape(std::span<const double> pvalues) {
  std::array<long, kShapeBins> counts{};
  for (const double p : pvalues) {
    if (std::isnan(p)) continue;
    const int b = std::clamp(static_cast<int>(p * kShapeBins), 0, kShapeBins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  return classify_shape_counts(counts);
}

ShapeLabel classify_shape_counts(std::span<const long> counts) {
  if (counts.size() != kShapeBins) {
    throw Error(ErrorKind::domain, "classify_shape: expected " + std::to_string(kShapeBins) + " bins");
  }
  long total = 0;
  for (const long c : counts) total += c;
  if (total < 1000) {
    throw Error(ErrorKind::domain, "classify_shape: need at least 1000 p-values, got " + std::to_string(total));
  }
  const double N = static_cast<double>(total);
  const double w = 1.0 / kShapeBins;
  auto prob = [&](int b) { return static_cast<double>(counts[static_cast<std::size_t>(b)]) / N; };
  // Density SE of a single bin at the uniform rate, and of a difference of two bins.
  const double se_null = std::sqrt(w * (1.0 - w) / N) / w;
  auto se_diff = [&](int a, int b) {
    const double pa = prob(a), pb = prob(b);
    return std::sqrt(std::max(pa + pb - (pa - pb) * (pa - pb), 1.0 / N) / N) / w;
  };

  ShapeLabel out;
  const int lo = 0, hi = kShapeBins - 1;
  out.low_density = prob(lo) / w;
  out.high_density = prob(hi) / w;
  out.mode_bin = 1;
  for (int b = 2; b < hi; ++b) {
    if (prob(b) > prob(out.mode_bin)) out.mode_bin = b;
  }
  out.mode_density = prob(out.mode_bin) / w;

  const double z = 2.0;
  const bool low_below = out.low_density < 1.0 - z * se_null;
  const bool low_above = out.low_density > 1.0 + z * se_null;
  const bool high_above = out.high_density > 1.0 + z * se_null;
  out.low_end_deficient = low_below;

  // The mode also has to stand clear of 1 by 3.5 SE: the largest of 18
  // uniform bins is two SE high by chance alone.
  const bool interior_mode = out.mode_density - out.low_density > z * se_diff(out.mode_bin, lo) &&
                             out.mode_density - out.high_density > z * se_diff(out.mode_bin, hi) &&
                             out.mode_density > 1.0 + 3.5 * se_null;
  using S = ShapeLabel::Shape;
  if (interior_mode) {
    out.shape = S::shape3;
  } else if (low_below && high_above) {
    out.shape = S::shape4;
  } else if (low_above && !high_above) {
    out.shape = S::shape2;
  } else if (!low_below && !low_above && !high_above && out.high_density >= 1.0 - z * se_null) {
    out.shape = S::shape1;
  } else if (low_below || high_above) {
    out.shape = S::shape4;
  } else if (low_above) {
    out.shape = S::shape2;
  } else {
    out.shape = S::shape1;
  }
  return out;
}

namespace {

struct Context {
  const ExperimentConfig& config;
  std::optional<FamilySpec> null_family;
  Eigen::MatrixXd gwas_X;
  Eigen::VectorXd gwas_y;
};

struct Outcome {
  double p = kNaN;
  std::string note;  // error kind or flag
};

void draw_gwas_genotype(std::mt19937_64& rng, const GwasScenario& g, Eigen::MatrixXd& X) {
  std::binomial_distribution<int> snp(2, g.maf);
  for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, 1) = snp(rng);
}

void draw_gwas_labels(std::mt19937_64& rng, const GwasScenario& g, const Eigen::MatrixXd& X, Eigen::VectorXd& y) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::Vector4d beta(g.beta[0], g.beta[1], g.beta[2], g.beta[3]);
  const Eigen::VectorXd eta = X * beta;
  for (Eigen::Index i = 0; i < X.rows(); ++i) y[i] = u(rng) < 1.0 / (1.0 + std::exp(-eta[i])) ? 1.0 : 0.0;
}

Context make_context(const ExperimentConfig& config) {
  Context ctx{config, std::nullopt, {}, {}};
  if (config.scenario == Scenario::gamma_clt) {
    ctx.null_family = FamilySpec::gamma(config.gamma.shape, config.gamma.null_rate);
  }
  if (config.scenario == Scenario::logistic_gwas) {
    // Stream index 2^64-1 is reserved for the design shared by all replications.
    auto rng = replication_engine(config.seed, std::numeric_limits<std::uint64_t>::max());
    const auto n = static_cast<Eigen::Index>(config.n);
    ctx.gwas_X.resize(n, 4);
    ctx.gwas_X.col(0).setOnes();
    draw_gwas_genotype(rng, config.gwas, ctx.gwas_X);
    std::bernoulli_distribution x1(config.gwas.x1_prob);
    std::normal_distribution<double> x2(config.gwas.x2_mean, config.gwas.x2_sd);
    for (Eigen::Index i = 0; i < n; ++i) ctx.gwas_X(i, 2) = x1(rng) ? 1.0 : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ctx.gwas_X(i, 3) = x2(rng);
    ctx.gwas_y.resize(n);
    draw_gwas_labels(rng, config.gwas, ctx.gwas_X, ctx.gwas_y);
  }
  return ctx;
}

template <class F>
Outcome guarded(F&& f) {
  Outcome o;
  try {
    o = f();
  } catch (const Error& e) {
    o.p = kNaN;
    o.note = to_string(e.kind());
  } catch (const std::exception&) {
    o.p = kNaN;
    o.note = "internal";
  }
  return o;
}

Outcome from_rstar(const RStarResult& r) {
  Outcome o{r.p_value, {}};
  if (r.sign_mismatch) o.note = "sign_mismatch";
  return o;
}

std::vector<Outcome> run_gamma(const Context& ctx, std::mt19937_64& rng) {
  const auto& c = ctx.config;
  std::gamma_distribution<double> draw(c.gamma.shape, 1.0 / c.gamma.true_rate);
  double sum = 0.0;
  for (long i = 0; i < c.n; ++i) sum += draw(rng);
  const double mean = sum / static_cast<double>(c.n);
  std::vector<Outcome> out;
  for (const auto m : c.methods) {
    out.push_back(guarded([&]() -> Outcome {
      switch (m) {
        case TestMethod::normal: return {normal_pvalue(*ctx.null_family, c.n, mean, c.sided), {}};
        case TestMethod::saddlepoint:
          return {corrected_pvalue(*ctx.null_family, c.n, mean, c.sided, c.tail_form), {}};
        default: {
          auto refit = [&](std::optional<double> rate) {
            return fit_gamma_sufficient(c.gamma.shape, c.n, sum, rate);
          };
          return from_rstar(rstar_test(refit, 0, c.gamma.null_rate, c.sided));
        }
      }
    }));
  }
  return out;
}

std::vector<Outcome> run_linkage(const Context& ctx, std::mt19937_64& rng) {
  const auto& c = ctx.config;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long counts[3] = {0, 0, 0};
  const double c0 = c.linkage.truth[0], c1 = c0 + c.linkage.truth[1];
  for (long i = 0; i < c.n; ++i) {
    const double v = u(rng);
    ++counts[v < c0 ? 0 : (v < c1 ? 1 : 2)];
  }
  std::vector<Outcome> out;
  std::optional<LinkageTests> tests;
  std::string failure;
  try {
    tests = linkage_tests(counts[0], counts[1], counts[2]);
  } catch (const Error& e) {
    failure = to_string(e.kind());
  }
  for (const auto m : c.methods) {
    if (m == TestMethod::wald) {
      out.push_back(tests ? Outcome{tests->wald.p_value, {}} : Outcome{kNaN, failure});
    } else {
      // The score form needs no variance estimate; rebuild it if the Wald form failed.
      const double n = static_cast<double>(c.n);
      const double s = std::sqrt(n) * ((counts[1] + 2.0 * counts[2]) / n - 1.0) / std::sqrt(0.5);
      out.push_back({tests ? tests->score.p_value : std::min(1.0, 2.0 * normal_cdf(-std::fabs(s))), {}});
    }
  }
  return out;
}

std::vector<Outcome> run_regression(const ModelSpec& model, const DataSet& data, Eigen::Index j, double psi0,
                                    const ExperimentConfig& c) {
  std::optional<ModelFit> full;
  std::string full_error;
  const bool needs_full = std::find_if(c.methods.begin(), c.methods.end(), [](TestMethod m) {
                            return m == TestMethod::wald || m == TestMethod::rstar;
                          }) != c.methods.end();
  if (needs_full) {
    try {
      full = fit_mle(model, data);
    } catch (const Error& e) {
      full_error = to_string(e.kind());
    } catch (const std::exception&) {
      full_error = "internal";
    }
  }
  std::vector<Outcome> out;
  for (const auto m : c.methods) {
    if ((m == TestMethod::wald || m == TestMethod::rstar) && !full) {
      out.push_back({kNaN, full_error});
      continue;
    }
    out.push_back(guarded([&]() -> Outcome {
      switch (m) {
        case TestMethod::wald: {
          const auto w = wald_test(*full, j, psi0);
          if (c.sided == Sidedness::one_sided) return {normal_cdf(w.statistic), {}};
          return {w.p_value, {}};
        }
        case TestMethod::score: {
          const auto s = score_test_glm(model, data, j, psi0);
          if (c.sided == Sidedness::one_sided) return {normal_cdf(s.statistic), {}};
          return {s.p_value, {}};
        }
        default: {
          auto refit = [&](std::optional<double> psi) {
            return psi ? fit_constrained(model, data, j, *psi) : *full;
          };
          auto qfn = [&](const ModelFit& f, const ModelFit& con, double psi) {
            return model_q_factor(model, data, f, con, psi, j);
          };
          return from_rstar(rstar_test(refit, j, psi0, c.sided, qfn));
        }
      }
    }));
  }
  return out;
}

std::vector<Outcome> run_gwas(const Context& ctx, std::mt19937_64& rng) {
  const auto& c = ctx.config;
  DataSet data;
  data.X = ctx.gwas_X;
  data.y = ctx.gwas_y;
  if (c.gwas.fixed_labels) {
    draw_gwas_genotype(rng, c.gwas, data.X);
  } else {
    draw_gwas_labels(rng, c.gwas, data.X, data.y);
  }
  return run_regression(ModelSpec{ModelKind::logistic, 1.0}, data, 1, c.gwas.beta[1], c);
}

std::vector<Outcome> run_weibull(const Context& ctx, std::mt19937_64& rng) {
  const auto& c = ctx.config;
  const auto n = static_cast<Eigen::Index>(c.n);
  const int k = c.weibull.k;
  DataSet data;
  data.X.resize(n, k + 1);
  data.X.col(0).setOnes();
  std::normal_distribution<double> z(0.0, 1.0);
  for (Eigen::Index col = 1; col <= k; ++col) {
    for (Eigen::Index i = 0; i < n; ++i) data.X(i, col) = z(rng);
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.y[i] = c.weibull.scale * std::pow(-std::log1p(-u(rng)), 1.0 / c.weibull.shape);
  }
  return run_regression(ModelSpec{ModelKind::weibull, 1.0}, data, 1, 0.0, c);
}

std::vector<Outcome> run_one(const Context& ctx, std::uint64_t rep) {
  auto rng = replication_engine(ctx.config.seed, rep);
  switch (ctx.config.scenario) {
    case Scenario::gamma_clt: return run_gamma(ctx, rng);
    case Scenario::linkage: return run_linkage(ctx, rng);
    case Scenario::logistic_gwas: return run_gwas(ctx, rng);
    case Scenario::weibull_many_nuisance: return run_weibull(ctx, rng);
  }
  return {};
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const Context ctx = make_context(config);
  const std::size_t nm = config.methods.size();
  const auto reps = static_cast<std::size_t>(config.reps);
  std::vector<std::vector<Outcome>> slots(reps);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < reps; r = next++) slots[r] = run_one(ctx, r);
  };
  const int nthreads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(config.workers), reps));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentResult res;
  res.config = config;
  res.grid = standard_grid();
  for (int b = 0; b <= kHistogramBins; ++b) res.histogram_edges.push_back(static_cast<double>(b) / kHistogramBins);
  TheoryKind kind = config.theory;
  if (kind == TheoryKind::automatic) {
    kind = (config.scenario == Scenario::gamma_clt || config.scenario == Scenario::linkage) ? TheoryKind::edgeworth
                                                                                           : TheoryKind::uniform;
  }
  res.theory_name = kind == TheoryKind::edgeworth ? "edgeworth"
                    : kind == TheoryKind::correct_variance ? "correct_variance"
                                                           : "uniform";
  res.theory_cdf = theory_curve(config, kind, res.grid);

  for (std::size_t m = 0; m < nm; ++m) {
    MethodSummary s;
    s.method = config.methods[m];
    s.pvalues.resize(reps);
    s.histogram.assign(kHistogramBins, 0);
    for (std::size_t r = 0; r < reps; ++r) {
      const Outcome& o = slots[r][m];
      s.pvalues[r] = o.p;
      if (!o.note.empty()) ++s.error_counts[o.note];
      if (std::isnan(o.p)) {
        ++s.excluded;
        continue;
      }
      const int b = std::clamp(static_cast<int>(o.p * kHistogramBins), 0, kHistogramBins - 1);
      ++s.histogram[static_cast<std::size_t>(b)];
    }
    if (s.excluded < config.reps) {
      s.ecdf = empirical_cdf(s.pvalues, res.grid);
      for (const double a : config.alphas) s.type1.push_back(type1_error(s.pvalues, a));
      s.ks_theory = ks_distance(s.ecdf, res.theory_cdf);
      s.ks_uniform = ks_distance(s.ecdf, res.grid);
      if (config.reps - s.excluded >= 1000) s.shape = classify_shape(s.pvalues);
    } else {
      s.ecdf.assign(res.grid.size(), kNaN);
      s.ks_theory = s.ks_uniform = kNaN;
    }
    res.methods.push_back(std::move(s));
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace pvcal
