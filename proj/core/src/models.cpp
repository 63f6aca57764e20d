#include "pvcal/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "pvcal/error.hpp"
#include "pvcal/specialfn.hpp"

namespace pvcal {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::logistic: return "logistic";
    case ModelKind::weibull: return "weibull";
    case ModelKind::gamma_known_shape: return "gamma_known_shape";
  }
  return "unknown";
}

const char* to_string(TestMethod method) noexcept {
  switch (method) {
    case TestMethod::wald: return "wald";
    case TestMethod::score: return "score";
    case TestMethod::rstar: return "rstar";
    case TestMethod::saddlepoint: return "saddlepoint";
    case TestMethod::normal: return "normal";
  }
  return "unknown";
}

double ModelFit::nuisance_info_det() const {
  if (!nuisance_info_logdet) {
    throw Error(ErrorKind::unsupported, "nuisance_info_det: only constrained fits carry the nuisance block");
  }
  return std::exp(*nuisance_info_logdet);
}

namespace {

constexpr int kMaxIterations = 100;
constexpr double kScoreTol = 1e-8;
constexpr double kStepTol = 1e-6;
constexpr double kSeparationProb = 1e-10;

struct Evaluation {
  double loglik = 0.0;
  VectorXd score;
  MatrixXd info;
};

class Likelihood {
 public:
  virtual ~Likelihood() = default;
  virtual Index dim() const = 0;
  virtual bool admissible(const VectorXd&) const { return true; }
  virtual double loglik(const VectorXd& theta) const = 0;
  virtual Evaluation evaluate(const VectorXd& theta) const = 0;
  // Starting point with parameter `pinned` (if any) fixed at `value`.
  virtual VectorXd start(std::optional<Index> pinned, double value) const = 0;
  // Called after each accepted iterate; may throw (separation).
  virtual void observe_iterate(const VectorXd&) {}
};

double log1pexp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic_fn(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

void check_design(const DataSet& data, Index extra_params) {
  if (data.X.rows() != data.y.size()) {
    throw Error(ErrorKind::domain, "model: design has " + std::to_string(data.X.rows()) +
                                       " rows but y has " + std::to_string(data.y.size()));
  }
  if (data.X.cols() < 1) throw Error(ErrorKind::domain, "model: design has no columns");
  if (!data.y.allFinite() || !data.X.allFinite()) {
    throw Error(ErrorKind::domain, "model: data contain missing or non-finite values");
  }
  if (data.y.size() <= data.X.cols() + extra_params - 1) {
    throw Error(ErrorKind::rank_deficient, "model: need more observations than parameters");
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(data.X);
  if (qr.rank() < data.X.cols()) {
    throw Error(ErrorKind::rank_deficient, "model: design matrix is not of full column rank");
  }
}

class LogisticLikelihood final : public Likelihood {
 public:
  explicit LogisticLikelihood(const DataSet& data) : data_(data) {
    check_design(data, 0);
    for (Index i = 0; i < data.y.size(); ++i) {
      if (data.y[i] != 0.0 && data.y[i] != 1.0) {
        throw Error(ErrorKind::domain, "logistic: responses must be 0/1");
      }
    }
    const double ybar = data.y.mean();
    if (ybar == 0.0 || ybar == 1.0) {
      throw Error(ErrorKind::separation, "logistic: all responses are identical (separation)");
    }
    ybar_ = ybar;
  }

  Index dim() const override { return data_.X.cols(); }

  double loglik(const VectorXd& beta) const override {
    const VectorXd eta = data_.X * beta;
    double ll = 0.0;
    for (Index i = 0; i < eta.size(); ++i) ll += data_.y[i] * eta[i] - log1pexp(eta[i]);
    return ll;
  }

  Evaluation evaluate(const VectorXd& beta) const override {
    const VectorXd eta = data_.X * beta;
    VectorXd resid(eta.size());
    VectorXd w(eta.size());
    double ll = 0.0;
    for (Index i = 0; i < eta.size(); ++i) {
      const double p = logistic_fn(eta[i]);
      resid[i] = data_.y[i] - p;
      w[i] = p * (1.0 - p);
      ll += data_.y[i] * eta[i] - log1pexp(eta[i]);
    }
    Evaluation ev;
    ev.loglik = ll;
    ev.score = data_.X.transpose() * resid;
    ev.info = data_.X.transpose() * w.asDiagonal() * data_.X;
    return ev;
  }

  VectorXd start(std::optional<Index> pinned, double value) const override {
    VectorXd beta = VectorXd::Zero(dim());
    // Intercept column (constant 1) gets logit(ybar).
    for (Index c = 0; c < dim(); ++c) {
      if ((data_.X.col(c).array() == 1.0).all()) {
        beta[c] = logit(ybar_);
        break;
      }
    }
    if (pinned) beta[*pinned] = value;
    return beta;
  }

  void observe_iterate(const VectorXd& beta) override {
    const VectorXd eta = data_.X * beta;
    double extreme = 1.0;
    for (Index i = 0; i < eta.size(); ++i) {
      const double p = logistic_fn(eta[i]);
      extreme = std::min({extreme, p, 1.0 - p});
    }
    const double norm = beta.norm();
    if (extreme < kSeparationProb && norm > last_norm_) {
      if (++growing_ >= 3) {
        throw Error(ErrorKind::separation,
                    "logistic: fitted probabilities leave [1e-10, 1-1e-10] with growing coefficients "
                    "(separation)");
      }
    } else {
      growing_ = 0;
    }
    last_norm_ = norm;
  }

 private:
  const DataSet& data_;
  double ybar_ = 0.5;
  double last_norm_ = 0.0;
  int growing_ = 0;
};

class WeibullLikelihood final : public Likelihood {
 public:
  explicit WeibullLikelihood(const DataSet& data) : data_(data) {
    check_design(data, 1);
    if ((data.y.array() <= 0.0).any()) {
      throw Error(ErrorKind::domain, "weibull: responses must be positive");
    }
    log_y_ = data.y.array().log().matrix();
  }

  Index dim() const override { return data_.X.cols() + 1; }

  double loglik(const VectorXd& theta) const override {
    const Index p = data_.X.cols();
    const double tau = theta[p];
    const double k = std::exp(tau);
    const VectorXd eta = data_.X * theta.head(p);
    double ll = 0.0;
    for (Index i = 0; i < eta.size(); ++i) {
      const double z = k * (log_y_[i] - eta[i]);
      ll += tau + z - log_y_[i] - std::exp(z);
    }
    return ll;
  }

  Evaluation evaluate(const VectorXd& theta) const override {
    const Index p = data_.X.cols();
    const Index n = data_.y.size();
    const double tau = theta[p];
    const double k = std::exp(tau);
    const VectorXd eta = data_.X * theta.head(p);
    VectorXd g_eta(n), w_eta(n), cross(n);
    double ll = 0.0, g_tau = 0.0, i_tau = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double z = k * (log_y_[i] - eta[i]);
      const double e = std::exp(z);
      ll += tau + z - log_y_[i] - e;
      g_eta[i] = k * (e - 1.0);
      w_eta[i] = k * k * e;
      cross[i] = -(k * (e - 1.0) + k * e * z);
      g_tau += 1.0 + z - z * e;
      i_tau += -z + z * e + z * z * e;
    }
    Evaluation ev;
    ev.loglik = ll;
    ev.score.resize(p + 1);
    ev.score.head(p) = data_.X.transpose() * g_eta;
    ev.score[p] = g_tau;
    ev.info.resize(p + 1, p + 1);
    ev.info.topLeftCorner(p, p) = data_.X.transpose() * w_eta.asDiagonal() * data_.X;
    const VectorXd off = data_.X.transpose() * cross;
    ev.info.topRightCorner(p, 1) = off;
    ev.info.bottomLeftCorner(1, p) = off.transpose();
    ev.info(p, p) = i_tau;
    return ev;
  }

  // Least squares on log y: log y = eta + sigma W with E[W] = -gamma.
  VectorXd start(std::optional<Index> pinned, double value) const override {
    const Index p = data_.X.cols();
    VectorXd target = log_y_;
    MatrixXd design = data_.X;
    if (pinned) {
      target -= value * data_.X.col(*pinned);
      MatrixXd reduced(design.rows(), p - 1);
      Index c = 0;
      for (Index j = 0; j < p; ++j) {
        if (j != *pinned) reduced.col(c++) = design.col(j);
      }
      design = reduced;
    }
    VectorXd coef = VectorXd::Zero(design.cols());
    double sd = 1.0;
    if (design.cols() > 0) {
      coef = design.colPivHouseholderQr().solve(target);
      const VectorXd resid = target - design * coef;
      const double dof = std::max<double>(1.0, static_cast<double>(resid.size() - design.cols()));
      sd = std::sqrt(resid.squaredNorm() / dof);
    } else {
      const double mean = target.mean();
      sd = std::sqrt((target.array() - mean).square().sum() / std::max<double>(1.0, target.size() - 1.0));
    }
    const double sigma = std::max(1e-3, sd * std::sqrt(6.0) / 3.14159265358979323846);
    VectorXd theta(p + 1);
    Index c = 0;
    for (Index j = 0; j < p; ++j) {
      if (pinned && j == *pinned) {
        theta[j] = value;
      } else {
        theta[j] = coef[c++];
      }
    }
    // Shift the intercept by gamma * sigma.
    for (Index j = 0; j < p; ++j) {
      if ((!pinned || j != *pinned) && (data_.X.col(j).array() == 1.0).all()) {
        theta[j] += 0.57721566490153286 * sigma;
        break;
      }
    }
    theta[p] = -std::log(sigma);
    return theta;
  }

 private:
  const DataSet& data_;
  VectorXd log_y_;
};

class GammaLikelihood final : public Likelihood {
 public:
  GammaLikelihood(const DataSet& data, double shape) : data_(data), shape_(shape) {
    if (!(shape > 0.0)) throw Error(ErrorKind::domain, "gamma model: known shape must be positive");
    if (data.y.size() < 1) throw Error(ErrorKind::domain, "gamma model: no observations");
    if (!data.y.allFinite() || (data.y.array() <= 0.0).any()) {
      throw Error(ErrorKind::domain, "gamma model: observations must be positive and finite");
    }
    n_ = static_cast<double>(data.y.size());
    sum_ = data.y.sum();
    sum_log_ = data.y.array().log().sum();
  }

  Index dim() const override { return 1; }
  bool admissible(const VectorXd& theta) const override { return theta[0] > 0.0; }

  double loglik(const VectorXd& theta) const override {
    const double rate = theta[0];
    return n_ * shape_ * std::log(rate) - rate * sum_ + (shape_ - 1.0) * sum_log_ -
           n_ * std::lgamma(shape_);
  }

  Evaluation evaluate(const VectorXd& theta) const override {
    const double rate = theta[0];
    Evaluation ev;
    ev.loglik = loglik(theta);
    ev.score = VectorXd::Constant(1, n_ * shape_ / rate - sum_);
    ev.info = MatrixXd::Constant(1, 1, n_ * shape_ / (rate * rate));
    return ev;
  }

  VectorXd start(std::optional<Index> pinned, double value) const override {
    if (pinned) return VectorXd::Constant(1, value);
    // Moment start at half the closed-form MLE so Newton has work to do.
    return VectorXd::Constant(1, 0.5 * shape_ * n_ / sum_);
  }

 private:
  const DataSet& data_;
  double shape_;
  double n_ = 0.0, sum_ = 0.0, sum_log_ = 0.0;
};

std::unique_ptr<Likelihood> make_likelihood(const ModelSpec& model, const DataSet& data) {
  switch (model.kind) {
    case ModelKind::logistic: return std::make_unique<LogisticLikelihood>(data);
    case ModelKind::weibull: return std::make_unique<WeibullLikelihood>(data);
    case ModelKind::gamma_known_shape: return std::make_unique<GammaLikelihood>(data, model.known_shape);
  }
  throw Error(ErrorKind::domain, "model: unknown kind");
}

// Restriction of a vector/matrix to the free indices.
std::vector<Index> free_indices(Index dim, std::optional<Index> pinned) {
  std::vector<Index> idx;
  for (Index j = 0; j < dim; ++j) {
    if (!pinned || j != *pinned) idx.push_back(j);
  }
  return idx;
}

VectorXd restrict(const VectorXd& v, const std::vector<Index>& idx) {
  VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) out[a] = v[idx[a]];
  return out;
}

MatrixXd restrict(const MatrixXd& m, const std::vector<Index>& idx) {
  const auto k = static_cast<Index>(idx.size());
  MatrixXd out(k, k);
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < k; ++b) out(a, b) = m(idx[a], idx[b]);
  }
  return out;
}

// Solves info * step = score, regularizing when info is not positive definite.
VectorXd newton_direction(const MatrixXd& info, const VectorXd& g) {
  Eigen::LLT<MatrixXd> llt(info);
  if (llt.info() == Eigen::Success) return llt.solve(g);
  const double scale = std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
  for (double ridge = 1e-8; ridge < 1e8; ridge *= 10.0) {
    MatrixXd damped = info + ridge * scale * MatrixXd::Identity(info.rows(), info.cols());
    Eigen::LLT<MatrixXd> d(damped);
    if (d.info() == Eigen::Success) return d.solve(g);
  }
  return g / scale;
}

std::optional<double> logdet_pd(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const auto& l = llt.matrixL();
  double s = 0.0;
  for (Index i = 0; i < m.rows(); ++i) {
    const double d = l(i, i);
    if (!(d > 0.0)) return std::nullopt;
    s += std::log(d);
  }
  return 2.0 * s;
}

ModelFit run_newton(Likelihood& lik, std::optional<Index> pinned, double value) {
  const Index dim = lik.dim();
  if (pinned && (*pinned < 0 || *pinned >= dim)) {
    throw Error(ErrorKind::domain, "fit: parameter index " + std::to_string(*pinned) + " out of range");
  }
  const auto idx = free_indices(dim, pinned);
  VectorXd theta = lik.start(pinned, value);
  if (!lik.admissible(theta)) throw Error(ErrorKind::domain, "fit: inadmissible starting point");
  Evaluation ev = lik.evaluate(theta);
  if (!std::isfinite(ev.loglik)) throw Error(ErrorKind::domain, "fit: non-finite log-likelihood at start");

  ModelFit fit;
  fit.loglik_trace.push_back(ev.loglik);
  bool converged = idx.empty();
  int it = 0;
  while (!converged && it < kMaxIterations) {
    const VectorXd g = restrict(ev.score, idx);
    const MatrixXd info = restrict(ev.info, idx);
    const VectorXd dir = newton_direction(info, g);
    if (g.cwiseAbs().maxCoeff() <= kScoreTol &&
        dir.cwiseAbs().maxCoeff() <= kStepTol * (1.0 + restrict(theta, idx).cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }
    // Near the optimum the log-likelihood is flat to rounding; a decrease
    // that small does not count against the step.
    const double slack = 1e-12 * std::max(1.0, std::fabs(ev.loglik));
    double t = 1.0;
    bool accepted = false;
    VectorXd candidate = theta;
    double cand_ll = ev.loglik;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      candidate = theta;
      for (std::size_t a = 0; a < idx.size(); ++a) candidate[idx[a]] += t * dir[static_cast<Index>(a)];
      if (!lik.admissible(candidate)) continue;
      cand_ll = lik.loglik(candidate);
      if (std::isfinite(cand_ll) && cand_ll >= ev.loglik - slack) {
        accepted = true;
        break;
      }
    }
    ++it;
    if (!accepted) {
      // No ascent left at working precision.
      if (g.cwiseAbs().maxCoeff() <= 1e-6) {
        converged = true;
        break;
      }
      throw Error(ErrorKind::convergence, "fit: step halving failed to increase the log-likelihood at iteration " +
                                              std::to_string(it));
    }
    theta = candidate;
    lik.observe_iterate(theta);
    ev = lik.evaluate(theta);
    fit.loglik_trace.push_back(ev.loglik);
  }
  if (!converged) {
    const VectorXd g = restrict(ev.score, idx);
    if (g.cwiseAbs().maxCoeff() > 1e-6) {
      throw Error(ErrorKind::convergence, "fit: no convergence after " + std::to_string(kMaxIterations) +
                                              " iterations (score max-norm " +
                                              std::to_string(g.cwiseAbs().maxCoeff()) + ")");
    }
    converged = true;
  }
  fit.estimates = theta;
  fit.loglik = ev.loglik;
  fit.score = ev.score;
  fit.observed_info = ev.info;
  fit.converged = converged;
  fit.iterations = it;
  if (pinned) {
    fit.pinned_index = pinned;
    fit.pinned_value = value;
    fit.nuisance_info_logdet = logdet_pd(restrict(ev.info, idx));
  }
  return fit;
}

}  // namespace

Index num_params(const ModelSpec& model, const DataSet& data) {
  switch (model.kind) {
    case ModelKind::logistic: return data.X.cols();
    case ModelKind::weibull: return data.X.cols() + 1;
    case ModelKind::gamma_known_shape: return 1;
  }
  return 0;
}

double loglik(const ModelSpec& model, const DataSet& data, const VectorXd& theta) {
  return make_likelihood(model, data)->loglik(theta);
}

VectorXd score(const ModelSpec& model, const DataSet& data, const VectorXd& theta) {
  return make_likelihood(model, data)->evaluate(theta).score;
}

MatrixXd observed_info(const ModelSpec& model, const DataSet& data, const VectorXd& theta) {
  return make_likelihood(model, data)->evaluate(theta).info;
}

ModelFit fit_mle(const ModelSpec& model, const DataSet& data) {
  auto lik = make_likelihood(model, data);
  return run_newton(*lik, std::nullopt, 0.0);
}

ModelFit fit_constrained(const ModelSpec& model, const DataSet& data, Index j, double psi0) {
  if (!std::isfinite(psi0)) throw Error(ErrorKind::domain, "fit_constrained: non-finite psi0");
  if (model.kind == ModelKind::gamma_known_shape && !(psi0 > 0.0)) {
    throw Error(ErrorKind::domain, "fit_constrained: rate must be positive");
  }
  auto lik = make_likelihood(model, data);
  return run_newton(*lik, j, psi0);
}

ModelFit fit_gamma_sufficient(double shape, long n, double sum_y, std::optional<double> fixed_rate) {
  if (!(shape > 0.0) || n < 1 || !(sum_y > 0.0) || !std::isfinite(sum_y)) {
    throw Error(ErrorKind::domain, "fit_gamma_sufficient: need shape > 0, n >= 1 and a positive finite sum");
  }
  if (fixed_rate && !(*fixed_rate > 0.0)) throw Error(ErrorKind::domain, "fit_gamma_sufficient: rate must be positive");
  const double nn = static_cast<double>(n);
  const double rate = fixed_rate ? *fixed_rate : shape * nn / sum_y;
  ModelFit fit;
  fit.estimates = VectorXd::Constant(1, rate);
  fit.loglik = nn * shape * std::log(rate) - rate * sum_y - nn * std::lgamma(shape);
  fit.score = VectorXd::Constant(1, nn * shape / rate - sum_y);
  fit.observed_info = MatrixXd::Constant(1, 1, nn * shape / (rate * rate));
  fit.converged = true;
  fit.loglik_trace = {fit.loglik};
  if (fixed_rate) {
    fit.pinned_index = 0;
    fit.pinned_value = *fixed_rate;
    fit.nuisance_info_logdet = 0.0;
  }
  return fit;
}

namespace {

// c * E^a * L^m with E ~ Exp(1), L = log E.
struct Term {
  double coef;
  double a;
  int m;
};

// E[E^a L^m] = Gamma^(m)(1 + a).
double gumbel_moment(double a, int m) {
  const double x = 1.0 + a;
  const double g = std::tgamma(x);
  if (m == 0) return g;
  const double psi = boost::math::digamma(x);
  if (m == 1) return g * psi;
  return g * (psi * psi + boost::math::trigamma(x));
}

double expect_product(const std::vector<Term>& f, const std::vector<Term>& g) {
  double s = 0.0;
  for (const auto& u : f) {
    for (const auto& v : g) {
      if (u.coef == 0.0 || v.coef == 0.0) continue;
      s += u.coef * v.coef * gumbel_moment(u.a + v.a, u.m + v.m);
    }
  }
  return s;
}

}  // namespace

std::optional<ScoreCovariances> score_covariances(const ModelSpec& model, const DataSet& data,
                                                  const VectorXd& theta_hat, const VectorXd& theta_tilde) {
  if (model.kind != ModelKind::weibull) return std::nullopt;
  const Index p = data.X.cols();
  if (theta_hat.size() != p + 1 || theta_tilde.size() != p + 1) {
    throw Error(ErrorKind::domain, "score_covariances: parameter vectors do not match the design");
  }
  const double k1 = std::exp(theta_hat[p]), k2 = std::exp(theta_tilde[p]);
  const double rho = k2 / k1;
  const double dtau = theta_hat[p] - theta_tilde[p];
  const VectorXd eta1 = data.X * theta_hat.head(p);
  const VectorXd eta2 = data.X * theta_tilde.head(p);

  // Under theta_hat, z1 = L and z2 = rho L + c. Score parts per observation:
  // A = d/d eta, B = d/d tau.
  const std::vector<Term> a1{{k1, 1.0, 0}, {-k1, 0.0, 0}};
  const std::vector<Term> b1{{1.0, 0.0, 0}, {1.0, 0.0, 1}, {-1.0, 1.0, 1}};
  const std::vector<Term> a1_self = a1, b1_self = b1;
  const double s_aa0 = expect_product(a1, a1_self), s_ab0 = expect_product(a1, b1_self),
               s_bb0 = expect_product(b1, b1_self);

  ScoreCovariances out;
  out.S = MatrixXd::Zero(p + 1, p + 1);
  out.q = VectorXd::Zero(p + 1);
  out.expected_info = MatrixXd::Zero(p + 1, p + 1);
  for (Index i = 0; i < data.X.rows(); ++i) {
    const double c = k2 * (eta1[i] - eta2[i]);
    const double ec = std::exp(c);
    const std::vector<Term> a2{{k2 * ec, rho, 0}, {-k2, 0.0, 0}};
    const std::vector<Term> b2{{1.0 + c, 0.0, 0}, {rho, 0.0, 1}, {-rho * ec, rho, 1}, {-c * ec, rho, 0}};
    const std::vector<Term> d{{dtau - c, 0.0, 0}, {1.0 - rho, 0.0, 1}, {-1.0, 1.0, 0}, {ec, rho, 0}};
    const auto x = data.X.row(i).transpose();
    const double saa = expect_product(a1, a2), sab = expect_product(a1, b2), sba = expect_product(b1, a2),
                 sbb = expect_product(b1, b2);
    out.S.topLeftCorner(p, p).noalias() += saa * x * x.transpose();
    out.S.topRightCorner(p, 1) += sab * x;
    out.S.bottomLeftCorner(1, p) += sba * x.transpose();
    out.S(p, p) += sbb;
    out.q.head(p) += expect_product(a1, d) * x;
    out.q[p] += expect_product(b1, d);
    out.expected_info.topLeftCorner(p, p).noalias() += s_aa0 * x * x.transpose();
    out.expected_info.topRightCorner(p, 1) += s_ab0 * x;
    out.expected_info.bottomLeftCorner(1, p) += s_ab0 * x.transpose();
    out.expected_info(p, p) += s_bb0;
  }
  return out;
}

double nuisance_logdet(const ModelFit& fit, Index j) {
  const Index dim = fit.observed_info.rows();
  if (j < 0 || j >= dim) throw Error(ErrorKind::domain, "nuisance_logdet: index out of range");
  const auto ld = logdet_pd(restrict(fit.observed_info, free_indices(dim, j)));
  if (!ld) {
    throw Error(ErrorKind::inconsistent,
                "nuisance_logdet: nuisance information block is not positive definite");
  }
  return *ld;
}

TestResult score_test_glm(const ModelSpec& model, const DataSet& data, Index j, double psi0) {
  if (model.kind != ModelKind::logistic) {
    throw Error(ErrorKind::unsupported, "score_test_glm: only the logistic model is supported");
  }
  const ModelFit null_fit = fit_constrained(model, data, j, psi0);
  // Canonical link: a' = 1, so W = I and D = diag(pi (1 - pi)).
  const VectorXd eta = data.X * null_fit.estimates;
  VectorXd resid(eta.size());
  VectorXd w(eta.size());
  for (Index i = 0; i < eta.size(); ++i) {
    const double p = logistic_fn(eta[i]);
    resid[i] = data.y[i] - p;
    w[i] = p * (1.0 - p);
  }
  const MatrixXd xdx = data.X.transpose() * w.asDiagonal() * data.X;
  Eigen::FullPivLU<MatrixXd> lu(xdx);
  if (!lu.isInvertible()) throw Error(ErrorKind::rank_deficient, "score_test_glm: X'DX is singular");
  const double inv_jj = lu.inverse()(j, j);
  const double u = data.X.col(j).dot(resid);
  TestResult out;
  out.method = TestMethod::score;
  out.statistic = std::sqrt(inv_jj) * u;
  out.p_value = std::min(1.0, 2.0 * normal_cdf(-std::fabs(out.statistic)));
  return out;
}

TestResult wald_test(const ModelFit& full, Index j, double psi0) {
  const Index dim = full.observed_info.rows();
  if (j < 0 || j >= dim) throw Error(ErrorKind::domain, "wald_test: index out of range");
  Eigen::FullPivLU<MatrixXd> lu(full.observed_info);
  if (!lu.isInvertible()) throw Error(ErrorKind::rank_deficient, "wald_test: singular information matrix");
  const double var = lu.inverse()(j, j);
  if (!(var > 0.0)) throw Error(ErrorKind::rank_deficient, "wald_test: non-positive variance");
  TestResult out;
  out.method = TestMethod::wald;
  out.statistic = (full.estimates[j] - psi0) / std::sqrt(var);
  out.p_value = std::min(1.0, 2.0 * normal_cdf(-std::fabs(out.statistic)));
  return out;
}

TestResult wald_test(const ModelSpec& model, const DataSet& data, Index j, double psi0) {
  return wald_test(fit_mle(model, data), j, psi0);
}

LinkageTests linkage_tests(long n0, long n1, long n2) {
  if (n0 < 0 || n1 < 0 || n2 < 0) throw Error(ErrorKind::domain, "linkage_tests: negative count");
  const long total = n0 + n1 + n2;
  if (total < 2) throw Error(ErrorKind::domain, "linkage_tests: need at least two sibling pairs");
  const double n = static_cast<double>(total);
  const double xbar = (n1 + 2.0 * n2) / n;
  const double rn = std::sqrt(n);

  LinkageTests out;
  out.score.method = TestMethod::score;
  out.score.statistic = rn * (xbar - 1.0) / std::sqrt(0.5);
  out.score.p_value = std::min(1.0, 2.0 * normal_cdf(-std::fabs(out.score.statistic)));

  const double var_hat = (n0 * xbar * xbar + n1 * (1.0 - xbar) * (1.0 - xbar) +
                          n2 * (2.0 - xbar) * (2.0 - xbar)) / n;
  if (!(var_hat > 0.0)) {
    throw Error(ErrorKind::degenerate, "linkage_tests: all pairs share the same count; Wald variance is zero");
  }
  out.wald.method = TestMethod::wald;
  out.wald.statistic = rn * (xbar - 1.0) / std::sqrt(var_hat);
  out.wald.p_value = std::min(1.0, 2.0 * normal_cdf(-std::fabs(out.wald.statistic)));
  return out;
}

}  // namespace pvcal
