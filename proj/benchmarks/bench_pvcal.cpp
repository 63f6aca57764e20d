#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "pvcal/cumulants.hpp"
#include "pvcal/edgeworth.hpp"
#include "pvcal/harness.hpp"
#include "pvcal/models.hpp"
#include "pvcal/rstar.hpp"
#include "pvcal/saddlepoint.hpp"

using namespace pvcal;

namespace {

DataSet logistic_data(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::binomial_distribution<int> geno(2, 0.025);
  std::bernoulli_distribution sex(0.5);
  std::normal_distribution<double> age(20.0, 1.0);
  std::uniform_real_distribution<double> u;
  DataSet d;
  d.X.resize(n, 4);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    d.X(i, 1) = geno(rng);
    d.X(i, 2) = sex(rng);
    d.X(i, 3) = age(rng);
    const double eta = -3.5 + 0.02 * d.X(i, 2) + 0.02 * d.X(i, 3);
    d.y[i] = u(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
  }
  return d;
}

DataSet weibull_data(int n, int k, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::weibull_distribution<double> wb(2.0, 1.0);
  DataSet d;
  d.X.resize(n, k);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    for (int j = 1; j < k; ++j) d.X(i, j) = nd(rng);
    d.y[i] = wb(rng);
  }
  return d;
}

}  // namespace

static void BM_EdgeworthCurve(benchmark::State& state) {
  const auto cal = calibrate(FamilySpec::gamma(0.01, 0.01), 750, 1.0, 10.0);
  const auto grid = standard_grid();
  for (auto _ : state) benchmark::DoNotOptimize(pvalue_curve(cal, grid, Sidedness::two_sided));
}
BENCHMARK(BM_EdgeworthCurve);

static void BM_LatticeCurve(benchmark::State& state) {
  const auto cal = calibrate(FamilySpec::multinomial_share(0.09, 0.8, 0.11), state.range(0), 1.0, std::sqrt(0.5));
  const auto grid = standard_grid();
  for (auto _ : state) benchmark::DoNotOptimize(pvalue_curve(cal, grid, Sidedness::two_sided));
}
BENCHMARK(BM_LatticeCurve)->Arg(10)->Arg(400);

static void BM_SaddlepointPValue(benchmark::State& state) {
  const auto fam = FamilySpec::gamma(0.01, 0.01);
  const auto form = state.range(0) == 0 ? TailForm::lugannani_rice : TailForm::rstar_form;
  double xbar = 1.2;
  for (auto _ : state) {
    benchmark::DoNotOptimize(corrected_pvalue(fam, 750, xbar, Sidedness::two_sided, form));
    xbar = xbar > 2.0 ? 1.2 : xbar + 0.01;
  }
}
BENCHMARK(BM_SaddlepointPValue)->Arg(0)->Arg(1);

static void BM_LogisticFit(benchmark::State& state) {
  const ModelSpec m{ModelKind::logistic};
  const auto d = logistic_data(3000, 1);
  for (auto _ : state) benchmark::DoNotOptimize(fit_mle(m, d));
}
BENCHMARK(BM_LogisticFit)->Unit(benchmark::kMillisecond);

static void BM_LogisticRStar(benchmark::State& state) {
  const ModelSpec m{ModelKind::logistic};
  const auto d = logistic_data(3000, 1);
  for (auto _ : state) benchmark::DoNotOptimize(rstar_test(m, d, 1, 0.0, Sidedness::two_sided));
}
BENCHMARK(BM_LogisticRStar)->Unit(benchmark::kMillisecond);

static void BM_WeibullRStar(benchmark::State& state) {
  ModelSpec m{ModelKind::weibull};
  const auto d = weibull_data(200, static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(rstar_test(m, d, 1, 0.0, Sidedness::two_sided));
}
BENCHMARK(BM_WeibullRStar)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

static void BM_LinkageReplications(benchmark::State& state) {
  ExperimentConfig c;
  c.scenario = Scenario::linkage;
  c.n = 400;
  c.reps = 10000;
  c.seed = 7;
  c.workers = 1;
  c.methods = {TestMethod::score, TestMethod::wald};
  c.linkage.truth = {0.09, 0.8, 0.11};
  for (auto _ : state) benchmark::DoNotOptimize(run_experiment(c));
}
BENCHMARK(BM_LinkageReplications)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
