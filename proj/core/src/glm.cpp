#include "expomatch/glm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/distributions/normal.hpp>

#include "expomatch/error.hpp"

namespace expomatch {

std::string_view to_string(Family family) {
  return family == Family::Logistic ? "logistic" : "poisson";
}

DesignMatrix DesignMatrix::with_intercept(std::vector<std::string> predictor_names,
                                          const Eigen::MatrixXd& predictors) {
  if (static_cast<Eigen::Index>(predictor_names.size()) != predictors.cols())
    throw Error(ErrorCode::ColumnMismatch, "predictor names do not match column count");
  std::set<std::string> seen;
  for (const auto& n : predictor_names) {
    if (n == kInterceptName || !seen.insert(n).second)
      throw Error(ErrorCode::ColumnMismatch, "duplicate or reserved column name '" + n + "'");
  }
  if (!predictors.allFinite()) throw Error(ErrorCode::ColumnMismatch, "design matrix has non-finite entries");

  DesignMatrix dm;
  dm.names_.reserve(predictor_names.size() + 1);
  dm.names_.emplace_back(kInterceptName);
  for (auto& n : predictor_names) dm.names_.push_back(std::move(n));
  dm.values_.resize(predictors.rows(), predictors.cols() + 1);
  dm.values_.col(0).setOnes();
  dm.values_.rightCols(predictors.cols()) = predictors;
  return dm;
}

DesignMatrix::Standardization DesignMatrix::standardization() const {
  Standardization s;
  const Eigen::Index p = cols();
  const double n = static_cast<double>(rows());
  s.center = Eigen::VectorXd::Zero(p);
  s.scale = Eigen::VectorXd::Ones(p);
  for (Eigen::Index j = 1; j < p; ++j) {
    const double mean = values_.col(j).mean();
    const double ss = (values_.col(j).array() - mean).square().sum();
    double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) sd = 0.0;
    s.center(j) = mean;
    s.scale(j) = sd;
  }
  return s;
}

std::optional<std::size_t> FittedGlm::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  return std::nullopt;
}

double FittedGlm::coefficient(std::string_view name) const {
  auto i = index_of(name);
  if (!i) throw Error(ErrorCode::ColumnMismatch, "no coefficient named '" + std::string(name) + "'");
  return coefficients(static_cast<Eigen::Index>(*i));
}

double FittedGlm::std_error(std::string_view name) const {
  auto i = index_of(name);
  if (!i) throw Error(ErrorCode::ColumnMismatch, "no coefficient named '" + std::string(name) + "'");
  const auto k = static_cast<Eigen::Index>(*i);
  return std::sqrt(std::max(0.0, covariance(k, k)));
}

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double inv_logit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

struct Response {
  Family family;
  Eigen::Map<const Eigen::VectorXd> y;
  Eigen::VectorXd offset;
};

Eigen::VectorXd mean_of(Family family, const Eigen::VectorXd& eta) {
  if (family == Family::Logistic) return eta.unaryExpr([](double e) { return inv_logit(e); });
  return eta.array().exp().matrix();
}

// Variance function, which is also the IRLS weight under the canonical link.
Eigen::VectorXd weight_of(Family family, const Eigen::VectorXd& mu) {
  if (family == Family::Logistic) return (mu.array() * (1.0 - mu.array())).matrix();
  return mu;
}

double deviance_of(const Response& r, const Eigen::VectorXd& eta) {
  double dev = 0.0;
  const Eigen::Index n = eta.size();
  if (r.family == Family::Logistic) {
    for (Eigen::Index i = 0; i < n; ++i) {
      // -log(mu) = softplus(-eta), -log(1-mu) = softplus(eta)
      dev += r.y(i) > 0.5 ? softplus(-eta(i)) : softplus(eta(i));
    }
    return 2.0 * dev;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = std::exp(eta(i));
    const double y = r.y(i);
    dev += (y > 0.0 ? y * (std::log(y) - eta(i)) : 0.0) - (y - mu);
  }
  return 2.0 * dev;
}

// Maps standardized coefficients to the original scale: beta = T * beta_std.
Eigen::MatrixXd back_transform(const DesignMatrix::Standardization& s) {
  const Eigen::Index p = s.center.size();
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(p, p);
  t(0, 0) = 1.0;
  for (Eigen::Index j = 1; j < p; ++j) {
    t(j, j) = 1.0 / s.scale(j);
    t(0, j) = -s.center(j) / s.scale(j);
  }
  return t;
}

FittedGlm irls(const DesignMatrix& x, const Response& r, Eigen::VectorXd beta, const FitOptions& opt) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const auto stdz = x.standardization();
  for (Eigen::Index j = 1; j < p; ++j) {
    if (stdz.scale(j) == 0.0)
      throw Error(ErrorCode::Singular, "column '" + x.names()[j] + "' is constant (collinear with intercept)");
  }
  const Eigen::MatrixXd t = back_transform(stdz);
  const Eigen::MatrixXd z = x.values() * t;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) throw Error(ErrorCode::Singular, "design matrix is rank deficient");

  auto eta_of = [&](const Eigen::VectorXd& b) -> Eigen::VectorXd { return z * b + r.offset; };

  FittedGlm fit;
  fit.family = r.family;
  fit.names = x.names();
  fit.n_obs = static_cast<std::size_t>(n);

  Eigen::VectorXd eta = eta_of(beta);
  double dev = deviance_of(r, eta);
  fit.deviance_trace.push_back(dev);

  double max_score = 0.0;
  int iter = 0;
  bool converged = false;
  while (iter < opt.max_iterations) {
    ++iter;
    const Eigen::VectorXd mu = mean_of(r.family, eta);
    const Eigen::VectorXd w = weight_of(r.family, mu);
    const Eigen::MatrixXd info = z.transpose() * w.asDiagonal() * z;
    const Eigen::VectorXd rhs =
        z.transpose() * (w.cwiseProduct(eta - r.offset) + (r.y - mu));
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13)
      throw Error(ErrorCode::Singular, "information matrix is not positive definite");
    Eigen::VectorXd next = ldlt.solve(rhs);

    Eigen::VectorXd next_eta = eta_of(next);
    double next_dev = deviance_of(r, next_eta);
    const double slack = 1e-12 * (std::abs(dev) + 1.0);
    int halvings = 0;
    while (!(std::isfinite(next_dev) && next_dev <= dev + slack)) {
      if (halvings == opt.max_step_halvings)
        throw Error(ErrorCode::NoConvergence, "deviance increase not resolved by step halving");
      next = 0.5 * (beta + next);
      next_eta = eta_of(next);
      next_dev = deviance_of(r, next_eta);
      ++halvings;
    }

    const double rel_change = std::abs(next_dev - dev) / (std::abs(next_dev) + 0.1);
    beta = std::move(next);
    eta = std::move(next_eta);
    dev = next_dev;
    fit.deviance_trace.push_back(dev);

    const Eigen::VectorXd resid = r.y - mean_of(r.family, eta);
    max_score = (z.transpose() * resid).cwiseAbs().maxCoeff();
    converged = rel_change < opt.relative_tolerance && max_score < opt.score_tolerance;

    if (r.family == Family::Logistic) {
      if (p > 1 && beta.tail(p - 1).cwiseAbs().maxCoeff() > opt.separation_threshold)
        throw Error(ErrorCode::Separation, "standardized coefficient exceeds separation threshold");
      if (dev < 1e-8 && !converged)
        throw Error(ErrorCode::Separation, "deviance collapsed to zero before convergence");
    }
    if (converged) break;
  }
  if (!converged)
    throw Error(ErrorCode::NoConvergence,
                "IRLS did not converge in " + std::to_string(opt.max_iterations) + " iterations");

  const Eigen::VectorXd mu = mean_of(r.family, eta);
  const Eigen::VectorXd w = weight_of(r.family, mu);
  const Eigen::MatrixXd info = z.transpose() * w.asDiagonal() * z;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw Error(ErrorCode::Singular, "information matrix is not positive definite at the solution");
  const Eigen::MatrixXd cov_std = ldlt.solve(Eigen::MatrixXd::Identity(p, p));

  fit.coefficients = t * beta;
  Eigen::MatrixXd cov = t * cov_std * t.transpose();
  fit.covariance = 0.5 * (cov + cov.transpose());
  fit.deviance = dev;
  fit.iterations = iter;
  fit.converged = true;
  fit.max_abs_score = max_score;
  return fit;
}

Eigen::VectorXd offset_vector(std::span<const double> offset, Eigen::Index n) {
  if (offset.empty()) return Eigen::VectorXd::Zero(n);
  if (static_cast<Eigen::Index>(offset.size()) != n)
    throw Error(ErrorCode::ColumnMismatch, "offset length does not match rows");
  Eigen::VectorXd o = Eigen::Map<const Eigen::VectorXd>(offset.data(), n);
  if (!o.allFinite()) throw Error(ErrorCode::ColumnMismatch, "offset has non-finite entries");
  return o;
}

void check_shape(const DesignMatrix& x, std::size_t n_response) {
  if (static_cast<Eigen::Index>(n_response) != x.rows())
    throw Error(ErrorCode::ColumnMismatch, "response length does not match rows");
  if (x.rows() <= x.cols())
    throw Error(ErrorCode::InsufficientUnits, "need more observations than model columns");
}

}  // namespace

FittedGlm fit_logistic(const DesignMatrix& x, std::span<const double> y, const FitOptions& options) {
  check_shape(x, y.size());
  double events = 0.0;
  for (double v : y) {
    if (v != 0.0 && v != 1.0) throw Error(ErrorCode::ColumnMismatch, "logistic response must be 0/1");
    events += v;
  }
  if (events == 0.0 || events == static_cast<double>(y.size()))
    throw Error(ErrorCode::InsufficientUnits, "logistic response needs both classes");

  Response r{Family::Logistic, Eigen::Map<const Eigen::VectorXd>(y.data(), x.rows()),
             Eigen::VectorXd::Zero(x.rows())};
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
  const double ybar = events / static_cast<double>(y.size());
  beta(0) = std::log(ybar / (1.0 - ybar));
  return irls(x, r, std::move(beta), options);
}

FittedGlm fit_poisson(const DesignMatrix& x, std::span<const double> counts, std::span<const double> offset,
                      const FitOptions& options) {
  check_shape(x, counts.size());
  double total = 0.0;
  for (double c : counts) {
    if (!(c >= 0.0) || std::floor(c) != c)
      throw Error(ErrorCode::ColumnMismatch, "Poisson counts must be nonnegative integers");
    total += c;
  }
  if (total == 0.0) throw Error(ErrorCode::AllZeroCounts, "all counts are zero");

  Response r{Family::Poisson, Eigen::Map<const Eigen::VectorXd>(counts.data(), x.rows()),
             offset_vector(offset, x.rows())};
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
  beta(0) = std::log(total / r.offset.array().exp().sum());
  return irls(x, r, std::move(beta), options);
}

Eigen::VectorXd score(Family family, const DesignMatrix& x, std::span<const double> y,
                      std::span<const double> offset, const Eigen::VectorXd& coefficients) {
  if (static_cast<Eigen::Index>(y.size()) != x.rows() || coefficients.size() != x.cols())
    throw Error(ErrorCode::ColumnMismatch, "score inputs have inconsistent shapes");
  const Eigen::VectorXd eta = x.values() * coefficients + offset_vector(offset, x.rows());
  const Eigen::VectorXd mu = mean_of(family, eta);
  return x.values().transpose() * (Eigen::Map<const Eigen::VectorXd>(y.data(), x.rows()) - mu);
}

Eigen::VectorXd predict_proba(const FittedGlm& model, const DesignMatrix& x) {
  if (model.family != Family::Logistic)
    throw Error(ErrorCode::ColumnMismatch, "predict_proba needs a logistic model");
  if (!model.converged) throw Error(ErrorCode::NoConvergence, "model did not converge");
  if (model.names != x.names())
    throw Error(ErrorCode::ColumnMismatch, "design columns do not match the fitted model");
  const Eigen::VectorXd eta = x.values() * model.coefficients;
  return eta.unaryExpr([](double e) { return inv_logit(e); });
}

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidConfig, "confidence level must be in (0,1)");
  return boost::math::quantile(boost::math::normal(), 0.5 + 0.5 * level);
}

IrrEstimate irr_with_ci(const FittedGlm& model, std::string_view exposure_column, double level) {
  if (model.family != Family::Poisson) throw Error(ErrorCode::ColumnMismatch, "IRR needs a Poisson model");
  if (!model.converged) throw Error(ErrorCode::NoConvergence, "model did not converge");
  const double beta = model.coefficient(exposure_column);
  const double se = model.std_error(exposure_column);
  const double zc = normal_critical_value(level);
  IrrEstimate est;
  est.log_irr = beta;
  est.log_se = se;
  est.irr = std::exp(beta);
  est.ci_low = std::exp(beta - zc * se);
  est.ci_high = std::exp(beta + zc * se);
  return est;
}

}  // namespace expomatch
