#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/weibull.hpp>
#include <boost/math/quadrature/sinh_sinh.hpp>

#include "pvcal/error.hpp"
#include "pvcal/models.hpp"
#include "pvcal/specialfn.hpp"

using namespace pvcal;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double oracle_loglik(const ModelSpec& m, const DataSet& d, const VectorXd& th) {
  double ll = 0.0;
  const Eigen::Index p = d.X.cols();
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    switch (m.kind) {
      case ModelKind::logistic: {
        const double eta = d.X.row(i).dot(th);
        const double pr = 1.0 / (1.0 + std::exp(-eta));
        ll += d.y[i] > 0.5 ? std::log(pr) : std::log1p(-pr);
        break;
      }
      case ModelKind::weibull: {
        const double scale = std::exp(d.X.row(i).dot(th.head(p)));
        boost::math::weibull_distribution<double> w(std::exp(th[p]), scale);
        ll += std::log(boost::math::pdf(w, d.y[i]));
        break;
      }
      case ModelKind::gamma_known_shape: {
        boost::math::gamma_distribution<double> g(m.known_shape, 1.0 / th[0]);
        ll += std::log(boost::math::pdf(g, d.y[i]));
        break;
      }
    }
  }
  return ll;
}

VectorXd fd_grad(const ModelSpec& m, const DataSet& d, const VectorXd& th) {
  const double h = 1e-5;
  VectorXd g(th.size());
  for (Eigen::Index k = 0; k < th.size(); ++k) {
    VectorXd a = th, b = th;
    a[k] += h;
    b[k] -= h;
    g[k] = (oracle_loglik(m, d, a) - oracle_loglik(m, d, b)) / (2 * h);
  }
  return g;
}

MatrixXd fd_hess(const ModelSpec& m, const DataSet& d, const VectorXd& th) {
  const double h = 1e-4;
  const Eigen::Index k = th.size();
  MatrixXd H(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) {
      auto f = [&](double da, double db) {
        VectorXd t = th;
        t[a] += da;
        t[b] += db;
        return oracle_loglik(m, d, t);
      };
      H(a, b) = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h);
    }
  }
  return H;
}

DataSet logistic_data(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  DataSet d;
  d.X.resize(n, 3);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    d.X(i, 1) = nd(rng);
    d.X(i, 2) = ud(rng) < 0.3 ? 1.0 : 0.0;
    const double eta = -0.4 + 0.8 * d.X(i, 1) - 0.5 * d.X(i, 2);
    d.y[i] = ud(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
  }
  return d;
}

DataSet weibull_data(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  DataSet d;
  d.X.resize(n, 2);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    d.X(i, 1) = nd(rng);
    const double scale = std::exp(0.3 + 0.5 * d.X(i, 1));
    d.y[i] = scale * std::pow(-std::log1p(-ud(rng)), 1.0 / 1.7);
  }
  return d;
}

DataSet gamma_data(int n, double shape, double rate, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gd(shape, 1.0 / rate);
  DataSet d;
  d.X = MatrixXd::Ones(n, 1);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) d.y[i] = gd(rng);
  return d;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("log-likelihood, score and information against independent oracles") {
    struct Case {
      ModelSpec model;
      DataSet data;
      VectorXd theta;
    };
    std::vector<Case> cases;
    cases.push_back({{ModelKind::logistic}, logistic_data(60, 1), (VectorXd(3) << -0.2, 0.5, 0.3).finished()});
    cases.push_back({{ModelKind::weibull}, weibull_data(40, 2), (VectorXd(3) << 0.2, 0.4, 0.4).finished()});
    cases.push_back({{ModelKind::gamma_known_shape, 2.5}, gamma_data(30, 2.5, 1.3, 3), (VectorXd(1) << 1.1).finished()});
    for (const auto& c : cases) {
      CAPTURE(to_string(c.model.kind));
      CHECK(loglik(c.model, c.data, c.theta) == doctest::Approx(oracle_loglik(c.model, c.data, c.theta)).epsilon(1e-11));
      const VectorXd g = score(c.model, c.data, c.theta);
      const VectorXd g_fd = fd_grad(c.model, c.data, c.theta);
      for (Eigen::Index k = 0; k < g.size(); ++k) CHECK(g[k] == doctest::Approx(g_fd[k]).epsilon(1e-6).scale(1.0));
      const MatrixXd I = observed_info(c.model, c.data, c.theta);
      const MatrixXd H = fd_hess(c.model, c.data, c.theta);
      for (Eigen::Index a = 0; a < I.rows(); ++a)
        for (Eigen::Index b = 0; b < I.cols(); ++b) CHECK(I(a, b) == doctest::Approx(-H(a, b)).epsilon(1e-4).scale(1.0));
      CHECK(num_params(c.model, c.data) == c.theta.size());
    }
  }

  TEST_CASE("fit_mle reaches a stationary maximum with a non-decreasing trace") {
    for (auto [model, data] : {std::pair{ModelSpec{ModelKind::logistic}, logistic_data(300, 5)},
                               std::pair{ModelSpec{ModelKind::weibull}, weibull_data(200, 6)}}) {
      const ModelFit fit = fit_mle(model, data);
      CAPTURE(to_string(model.kind));
      CHECK(fit.converged);
      CHECK(fit.score.lpNorm<Eigen::Infinity>() <= 1e-6);
      CHECK(fd_grad(model, data, fit.estimates).lpNorm<Eigen::Infinity>() < 1e-5);
      for (size_t i = 1; i < fit.loglik_trace.size(); ++i) {
        const double slack = 1e-12 * std::max(1.0, std::abs(fit.loglik_trace[i - 1]));
        CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1] - slack);
      }
      // a maximum: any small perturbation lowers the likelihood
      for (Eigen::Index k = 0; k < fit.estimates.size(); ++k) {
        for (double dlt : {-1e-3, 1e-3}) {
          VectorXd t = fit.estimates;
          t[k] += dlt;
          CHECK(oracle_loglik(model, data, t) < fit.loglik);
        }
      }
    }
  }

  TEST_CASE("gamma known-shape fit is closed form") {
    const auto d = gamma_data(50, 0.7, 2.0, 9);
    const ModelSpec m{ModelKind::gamma_known_shape, 0.7};
    const ModelFit fit = fit_mle(m, d);
    CHECK(fit.estimates[0] == doctest::Approx(0.7 / d.y.mean()).epsilon(1e-9));
    const ModelFit suff = fit_gamma_sufficient(0.7, 50, d.y.sum());
    CHECK(suff.estimates[0] == doctest::Approx(0.7 / d.y.mean()).epsilon(1e-13));
    // the sufficient-statistic likelihood drops only the data-only term
    const double dropped = (0.7 - 1.0) * d.y.array().log().sum();
    CHECK(suff.loglik + dropped == doctest::Approx(fit.loglik).epsilon(1e-11));
    const ModelFit con = fit_gamma_sufficient(0.7, 50, d.y.sum(), 1.5);
    CHECK(con.estimates[0] == 1.5);
    CHECK(con.nuisance_info_logdet.value() == 0.0);
    CHECK_THROWS_AS(fit_constrained(m, d, 0, -1.0), Error);
    CHECK_THROWS_AS(fit_gamma_sufficient(0.7, 0, 1.0), Error);
  }

  TEST_CASE("fit_constrained pins the interest parameter") {
    const ModelSpec m{ModelKind::logistic};
    const auto d = logistic_data(300, 11);
    const ModelFit con = fit_constrained(m, d, 1, 0.2);
    CHECK(con.estimates[1] == 0.2);
    CHECK(con.pinned_index.value() == 1);
    const VectorXd g = fd_grad(m, d, con.estimates);
    CHECK(std::abs(g[0]) < 1e-5);
    CHECK(std::abs(g[2]) < 1e-5);
    CHECK(con.nuisance_info_logdet.value() == doctest::Approx(nuisance_logdet(con, 1)).epsilon(1e-10));
    MatrixXd I = observed_info(m, d, con.estimates);
    MatrixXd nuis(2, 2);
    nuis << I(0, 0), I(0, 2), I(2, 0), I(2, 2);
    CHECK(con.nuisance_info_det() == doctest::Approx(nuis.determinant()).epsilon(1e-9));
    CHECK(fit_mle(m, d).loglik >= con.loglik);
    CHECK_THROWS_AS(fit_mle(m, d).nuisance_info_det(), Error);
    CHECK_THROWS_AS(fit_constrained(m, d, 3, 0.0), Error);
  }

  TEST_CASE("logistic separation and design problems") {
    DataSet d;
    d.X.resize(10, 2);
    d.y.resize(10);
    for (int i = 0; i < 10; ++i) {
      d.X(i, 0) = 1.0;
      d.X(i, 1) = i - 4.5;
      d.y[i] = i >= 5 ? 1.0 : 0.0;
    }
    try {
      fit_mle({ModelKind::logistic}, d);
      FAIL("expected separation");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::separation);
    }
    DataSet all_ones = d;
    all_ones.y.setOnes();
    CHECK_THROWS_AS(fit_mle({ModelKind::logistic}, all_ones), Error);

    DataSet collinear = logistic_data(50, 4);
    collinear.X.col(2) = 2.0 * collinear.X.col(1);
    try {
      fit_mle({ModelKind::logistic}, collinear);
      FAIL("expected rank deficiency");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::rank_deficient);
    }
    DataSet bad = logistic_data(20, 4);
    bad.y[3] = 0.5;
    CHECK_THROWS_AS(fit_mle({ModelKind::logistic}, bad), Error);
    DataSet neg = weibull_data(20, 4);
    neg.y[0] = -1.0;
    CHECK_THROWS_AS(fit_mle({ModelKind::weibull}, neg), Error);
  }

  TEST_CASE("wald and score statistics") {
    const ModelSpec m{ModelKind::logistic};
    const auto d = logistic_data(400, 21);
    const ModelFit full = fit_mle(m, d);
    const MatrixXd inv = full.observed_info.inverse();
    const TestResult w = wald_test(full, 1, 0.5);
    const double z = (full.estimates[1] - 0.5) / std::sqrt(inv(1, 1));
    CHECK(w.statistic == doctest::Approx(z).epsilon(1e-10));
    CHECK(w.p_value == doctest::Approx(2.0 * normal_cdf(-std::abs(z))).epsilon(1e-10));
    CHECK(wald_test(m, d, 1, 0.5).statistic == doctest::Approx(z).epsilon(1e-8));

    const ModelFit con = fit_constrained(m, d, 2, 0.0);
    VectorXd pi = (1.0 / (1.0 + (-(d.X * con.estimates).array()).exp())).matrix();
    const MatrixXd xdx = d.X.transpose() * (pi.array() * (1.0 - pi.array())).matrix().asDiagonal() * d.X;
    const double u = d.X.col(2).dot(d.y - pi);
    const double s = u * std::sqrt(xdx.inverse()(2, 2));
    const TestResult sc = score_test_glm(m, d, 2, 0.0);
    CHECK(sc.statistic == doctest::Approx(s).epsilon(1e-7));
    CHECK(sc.method == TestMethod::score);
    CHECK_THROWS_AS(score_test_glm({ModelKind::weibull}, weibull_data(30, 1), 1, 0.0), Error);
  }

  TEST_CASE("linkage tests") {
    const auto t = linkage_tests(20, 50, 30);
    const double xbar = (50 + 60) / 100.0;
    const double var = (20 * xbar * xbar + 50 * (1 - xbar) * (1 - xbar) + 30 * (2 - xbar) * (2 - xbar)) / 100.0;
    CHECK(t.score.statistic == doctest::Approx(10.0 * 0.1 / std::sqrt(0.5)).epsilon(1e-13));
    CHECK(t.wald.statistic == doctest::Approx(10.0 * 0.1 / std::sqrt(var)).epsilon(1e-13));
    CHECK(t.score.p_value == doctest::Approx(2.0 * normal_cdf(-std::sqrt(2.0) * 1.0)).epsilon(1e-12));
    const auto null = linkage_tests(25, 50, 25);
    CHECK(null.score.statistic == 0.0);
    CHECK(null.score.p_value == 1.0);
    CHECK_THROWS_AS(linkage_tests(0, 10, 0), Error);
    CHECK_THROWS_AS(linkage_tests(-1, 10, 0), Error);
    CHECK_THROWS_AS(linkage_tests(1, 0, 0), Error);
  }

  TEST_CASE("weibull score covariances against quadrature over the Gumbel law") {
    const auto d = weibull_data(5, 31);
    const VectorXd hat = (VectorXd(3) << 0.3, 0.6, 0.2).finished();
    const VectorXd til = (VectorXd(3) << 0.25, 0.0, 0.35).finished();
    const auto cov = score_covariances({ModelKind::weibull}, d, hat, til);
    REQUIRE(cov.has_value());

    const double k = std::exp(hat[2]), kt = std::exp(til[2]);
    boost::math::quadrature::sinh_sinh<double> integrator;
    MatrixXd S = MatrixXd::Zero(3, 3), info = MatrixXd::Zero(3, 3);
    VectorXd q = VectorXd::Zero(3);
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      const Eigen::Vector2d x = d.X.row(i).transpose();
      const double eta = x.dot(hat.head(2)), eta_t = x.dot(til.head(2));
      // log E = w with E ~ Exp(1); log y = eta + w / k
      auto terms = [&](double w, int a, int b, int mode) {
        const double zt = kt * (w / k + eta - eta_t);
        const double gh[2] = {k * (std::exp(w) - 1.0), 1.0 + w - w * std::exp(w)};
        const double gt[2] = {kt * (std::exp(zt) - 1.0), 1.0 + zt - zt * std::exp(zt)};
        const double lh = hat[2] + w - std::exp(w);
        const double lt = til[2] + zt - std::exp(zt);
        if (mode == 0) return gh[a] * gt[b];
        if (mode == 1) return gh[a] * gh[b];
        return gh[a] * (lh - lt);
      };
      auto expect = [&](int a, int b, int mode) {
        return integrator.integrate([&](double w) {
          const double dens = std::exp(w - std::exp(w));
          return dens == 0.0 ? 0.0 : dens * terms(w, a, b, mode);
        });
      };
      const double xs[3] = {x[0], x[1], 1.0};
      auto blk = [](int r) { return r < 2 ? 0 : 1; };
      for (int r = 0; r < 3; ++r) {
        q[r] += xs[r] * expect(blk(r), 0, 2);
        for (int c = 0; c < 3; ++c) {
          S(r, c) += xs[r] * xs[c] * expect(blk(r), blk(c), 0);
          info(r, c) += xs[r] * xs[c] * expect(blk(r), blk(c), 1);
        }
      }
    }
    for (int r = 0; r < 3; ++r) {
      CHECK(cov->q[r] == doctest::Approx(q[r]).epsilon(1e-8).scale(1.0));
      for (int c = 0; c < 3; ++c) {
        CHECK(cov->S(r, c) == doctest::Approx(S(r, c)).epsilon(1e-8).scale(1.0));
        CHECK(cov->expected_info(r, c) == doctest::Approx(info(r, c)).epsilon(1e-8).scale(1.0));
      }
    }
    const auto same = score_covariances({ModelKind::weibull}, d, hat, hat);
    CHECK((same->S - same->expected_info).norm() < 1e-10);
    CHECK(same->q.norm() < 1e-10);
    CHECK_FALSE(score_covariances({ModelKind::logistic}, logistic_data(20, 1), VectorXd::Zero(3), VectorXd::Zero(3)));
  }

  TEST_CASE("dataset CSV") {
    std::istringstream in("y,snp1,age\n1,0,30\n0,2,41\n1,1,NA\n");
    CHECK_THROWS_AS(read_dataset_csv(in), Error);
    std::istringstream ok("y,snp1,age\n1,0,30\n0,2,41\n1,1,50\n0,1,22\n");
    const DataSet d = read_dataset_csv(ok);
    CHECK(d.rows() == 4);
    CHECK(d.cols() == 3);
    CHECK(d.columns[0].name == "intercept");
    CHECK(d.X.col(0).isOnes());
    CHECK(d.columns[1].genetic);
    CHECK(d.columns[1].maf.value() == doctest::Approx(0.5));
    CHECK_FALSE(d.columns[2].genetic);
    CHECK(d.X(1, 2) == 41.0);
    std::istringstream noy("a,b\n1,2\n");
    CHECK_THROWS_AS(read_dataset_csv(noy), Error);
    std::istringstream ragged("y,a\n1,2\n3\n");
    CHECK_THROWS_AS(read_dataset_csv(ragged), Error);
    CHECK_THROWS_AS(read_dataset_csv_file("/nonexistent/file.csv"), Error);
  }
}
