#include <doctest.h>

#include <cmath>
#include <random>

#include "expomatch/error.hpp"
#include "expomatch/glm.hpp"
#include "support/oracles.hpp"

using namespace expomatch;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidConfig;
}

// 10 units with x = 1 (8 events) and 10 with x = 0 (2 events).
struct TwoByTwo {
  DesignMatrix x;
  std::vector<double> y;
  TwoByTwo() {
    Eigen::MatrixXd m(20, 1);
    for (int i = 0; i < 20; ++i) {
      m(i, 0) = i < 10 ? 1.0 : 0.0;
      y.push_back(i < 10 ? (i < 8 ? 1.0 : 0.0) : (i < 12 ? 1.0 : 0.0));
    }
    x = DesignMatrix::with_intercept({"x"}, m);
  }
};

FittedGlm manual_poisson(double beta, double se) {
  FittedGlm m;
  m.family = Family::Poisson;
  m.names = {"(Intercept)", "high_exposed"};
  m.coefficients = Eigen::Vector2d(-3.0, beta);
  m.covariance = Eigen::Matrix2d::Zero();
  m.covariance(0, 0) = 0.01;
  m.covariance(1, 1) = se * se;
  m.converged = true;
  return m;
}

struct RandomProblem {
  DesignMatrix x;
  std::vector<double> y, offset;
};

RandomProblem random_problem(std::mt19937_64& rng, Family family, int n, int p) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd m(n, p);
  std::vector<std::string> names;
  for (int j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  Eigen::VectorXd beta(p + 1);
  for (int j = 0; j <= p; ++j) beta(j) = 0.5 * nd(rng);
  // columns on very different scales, so standardization matters
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) m(i, j) = std::pow(10.0, j - 1) * nd(rng) + 3.0 * j;
  RandomProblem pr;
  pr.x = DesignMatrix::with_intercept(names, m);
  Eigen::VectorXd scaled_beta = beta;
  for (int j = 1; j <= p; ++j) scaled_beta(j) /= std::pow(10.0, j - 2);
  scaled_beta(0) = beta(0);
  for (int j = 1; j <= p; ++j) scaled_beta(0) -= scaled_beta(j) * 3.0 * (j - 1);
  const Eigen::VectorXd eta = pr.x.values() * scaled_beta;
  for (int i = 0; i < n; ++i) {
    if (family == Family::Logistic) {
      pr.y.push_back(u(rng) < 1.0 / (1.0 + std::exp(-eta(i))) ? 1.0 : 0.0);
    } else {
      const double off = std::log(50.0 + 100.0 * u(rng));
      pr.offset.push_back(off);
      std::poisson_distribution<int> pd(std::exp(eta(i) - 3.0 + off));
      pr.y.push_back(pd(rng));
    }
  }
  return pr;
}

double loglik(Family f, const RandomProblem& pr, const Eigen::VectorXd& b) {
  return f == Family::Logistic ? oracle::loglik_logistic(pr.x.values(), pr.y, b)
                               : oracle::loglik_poisson(pr.x.values(), pr.y, pr.offset, b);
}

}  // namespace

TEST_SUITE("glm") {
  TEST_CASE("2x2 logistic recovers the closed-form odds ratio") {
    const TwoByTwo d;
    const FittedGlm fit = fit_logistic(d.x, d.y);
    CHECK(fit.converged);
    CHECK(std::abs(fit.coefficient("x") - 2.0 * std::log(4.0)) < 1e-6);
    CHECK(std::abs(fit.coefficient("(Intercept)") - oracle::logit(0.2)) < 1e-6);
    // Wald SE of a log odds ratio: sqrt(1/8 + 1/2 + 1/2 + 1/8)
    CHECK(fit.std_error("x") == doctest::Approx(std::sqrt(1.25)).epsilon(1e-6));
    const Eigen::VectorXd p = predict_proba(fit, d.x);
    CHECK(p(0) == doctest::Approx(0.8).epsilon(1e-8));
    CHECK(p(19) == doctest::Approx(0.2).epsilon(1e-8));
  }

  TEST_CASE("constant extra covariate is Singular") {
    Eigen::MatrixXd m(20, 2);
    for (int i = 0; i < 20; ++i) {
      m(i, 0) = i % 3;
      m(i, 1) = 7.0;
    }
    std::vector<double> y(20);
    for (int i = 0; i < 20; ++i) y[i] = (i * 7) % 3 == 0 ? 1.0 : 0.0;
    const auto x = DesignMatrix::with_intercept({"a", "const"}, m);
    CHECK(code_of([&] { fit_logistic(x, y); }) == ErrorCode::Singular);
  }

  TEST_CASE("exactly collinear covariates are Singular") {
    Eigen::MatrixXd m(30, 2);
    std::vector<double> y(30);
    for (int i = 0; i < 30; ++i) {
      m(i, 0) = i;
      m(i, 1) = 2.0 * i + 1.0;
      y[i] = (i * 5) % 4 == 0 ? 1.0 : 0.0;
    }
    const auto x = DesignMatrix::with_intercept({"a", "b"}, m);
    CHECK(code_of([&] { fit_logistic(x, y); }) == ErrorCode::Singular);
  }

  TEST_CASE("perfect separation is detected") {
    Eigen::MatrixXd m(40, 1);
    std::vector<double> y(40);
    for (int i = 0; i < 40; ++i) {
      m(i, 0) = i - 19.5;
      y[i] = m(i, 0) > 0 ? 1.0 : 0.0;
    }
    const auto x = DesignMatrix::with_intercept({"x"}, m);
    CHECK(code_of([&] { fit_logistic(x, y); }) == ErrorCode::Separation);
  }

  TEST_CASE("logistic input errors") {
    const TwoByTwo d;
    std::vector<double> ones(20, 1.0);
    CHECK(code_of([&] { fit_logistic(d.x, ones); }) == ErrorCode::InsufficientUnits);
    std::vector<double> bad = d.y;
    bad[0] = 2.0;
    CHECK(code_of([&] { fit_logistic(d.x, bad); }) == ErrorCode::ColumnMismatch);
    std::vector<double> short_y(5, 0.0);
    CHECK(code_of([&] { fit_logistic(d.x, short_y); }) == ErrorCode::ColumnMismatch);
  }

  TEST_CASE("two-group Poisson recovers IRR 2") {
    Eigen::MatrixXd m(2, 1);
    m << 0.0, 1.0;
    const auto x = DesignMatrix::with_intercept({"high_exposed"}, m);
    std::vector<double> y = {10.0, 20.0};
    std::vector<double> off = {std::log(1000.0), std::log(1000.0)};
    // Saturated model: n == p is rejected, so replicate each group.
    Eigen::MatrixXd m4(4, 1);
    m4 << 0.0, 0.0, 1.0, 1.0;
    const auto x4 = DesignMatrix::with_intercept({"high_exposed"}, m4);
    std::vector<double> y4 = {5.0, 5.0, 10.0, 10.0};
    std::vector<double> off4(4, std::log(500.0));
    const FittedGlm fit = fit_poisson(x4, y4, off4);
    CHECK(std::abs(fit.coefficient("high_exposed") - std::log(2.0)) < 1e-8);
    const auto irr = irr_with_ci(fit, "high_exposed");
    CHECK(std::abs(irr.irr - 2.0) < 1e-8);
    // SE of a log rate ratio from counts: sqrt(1/10 + 1/20)
    CHECK(irr.log_se == doctest::Approx(std::sqrt(0.15)).epsilon(1e-6));
    CHECK(std::abs(fit.coefficient("(Intercept)") - std::log(10.0 / 1000.0)) < 1e-8);
    CHECK(code_of([&] { fit_poisson(x, y, off); }) == ErrorCode::InsufficientUnits);
  }

  TEST_CASE("identical rates give IRR 1") {
    Eigen::MatrixXd m(6, 1);
    m << 0, 0, 0, 1, 1, 1;
    const auto x = DesignMatrix::with_intercept({"e"}, m);
    std::vector<double> y = {3, 4, 5, 6, 8, 10};
    std::vector<double> off = {std::log(100), std::log(100), std::log(100), std::log(200), std::log(200), std::log(200)};
    const auto fit = fit_poisson(x, y, off);
    CHECK(std::abs(fit.coefficient("e")) < 1e-10);
    CHECK(irr_with_ci(fit, "e").irr == doctest::Approx(1.0).epsilon(1e-10));
  }

  TEST_CASE("scaling person-years shifts only the intercept") {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 5; ++rep) {
      const auto pr = random_problem(rng, Family::Poisson, 200, 3);
      const auto a = fit_poisson(pr.x, pr.y, pr.offset);
      std::vector<double> off10 = pr.offset;
      for (auto& o : off10) o += std::log(10.0);
      const auto b = fit_poisson(pr.x, pr.y, off10);
      CHECK(std::abs((b.coefficients(0) - a.coefficients(0)) + std::log(10.0)) < 1e-8);
      for (Eigen::Index j = 1; j < a.coefficients.size(); ++j)
        CHECK(std::abs(b.coefficients(j) - a.coefficients(j)) < 1e-8);
    }
  }

  TEST_CASE("Poisson input errors") {
    Eigen::MatrixXd m(4, 1);
    m << 0, 1, 0, 1;
    const auto x = DesignMatrix::with_intercept({"e"}, m);
    std::vector<double> zeros(4, 0.0);
    CHECK(code_of([&] { fit_poisson(x, zeros, {}); }) == ErrorCode::AllZeroCounts);
    std::vector<double> frac = {1.5, 2, 3, 4};
    CHECK(code_of([&] { fit_poisson(x, frac, {}); }) == ErrorCode::ColumnMismatch);
    std::vector<double> neg = {-1, 2, 3, 4};
    CHECK(code_of([&] { fit_poisson(x, neg, {}); }) == ErrorCode::ColumnMismatch);
  }

  TEST_CASE("predict_proba boundary values") {
    FittedGlm m;
    m.family = Family::Logistic;
    m.names = {"(Intercept)", "a"};
    m.coefficients = Eigen::Vector2d(0.0, 0.0);
    m.converged = true;
    Eigen::MatrixXd v(3, 1);
    v << -5.0, 0.0, 12.0;
    const auto x = DesignMatrix::with_intercept({"a"}, v);
    const Eigen::VectorXd half = predict_proba(m, x);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(half(i) == 0.5);
    m.coefficients(0) = oracle::logit(0.3);
    const Eigen::VectorXd p = predict_proba(m, x);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(0.3).epsilon(1e-14));

    const auto other = DesignMatrix::with_intercept({"b"}, v);
    CHECK(code_of([&] { predict_proba(m, other); }) == ErrorCode::ColumnMismatch);
    m.family = Family::Poisson;
    CHECK(code_of([&] { predict_proba(m, x); }) == ErrorCode::ColumnMismatch);
  }

  TEST_CASE("irr_with_ci hand exponentiation") {
    CHECK(normal_critical_value(0.95) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    const auto e = irr_with_ci(manual_poisson(0.0, 0.01), "high_exposed");
    CHECK(e.irr == 1.0);
    CHECK(e.ci_low == doctest::Approx(0.9806).epsilon(5e-5));
    CHECK(e.ci_high == doctest::Approx(1.0198).epsilon(5e-5));
    CHECK(e.ci_low == doctest::Approx(std::exp(-1.959963984540054 * 0.01)).epsilon(1e-14));

    const auto d = irr_with_ci(manual_poisson(std::log(2.0), 0.0), "high_exposed");
    CHECK(d.irr == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(d.ci_low == d.irr);
    CHECK(d.ci_high == d.irr);

    CHECK(code_of([&] { irr_with_ci(manual_poisson(0, 1), "missing"); }) == ErrorCode::ColumnMismatch);
  }

  TEST_CASE("analytic score matches central differences at convergence") {
    std::mt19937_64 rng(99);
    for (Family f : {Family::Logistic, Family::Poisson}) {
      for (int rep = 0; rep < 6; ++rep) {
        const auto pr = random_problem(rng, f, 150, 3);
        const auto fit = f == Family::Logistic ? fit_logistic(pr.x, pr.y) : fit_poisson(pr.x, pr.y, pr.offset);
        // at a perturbed point the gradient is far from zero, so the check has teeth
        Eigen::VectorXd b = fit.coefficients;
        for (Eigen::Index j = 0; j < b.size(); ++j) b(j) += 0.05 / (1.0 + std::abs(j - 1.0));
        for (const Eigen::VectorXd& at : {fit.coefficients, b}) {
          const Eigen::VectorXd g = score(f, pr.x, pr.y, pr.offset, at);
          for (Eigen::Index j = 0; j < at.size(); ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(at(j)));
            Eigen::VectorXd up = at, dn = at;
            up(j) += h;
            dn(j) -= h;
            const double fd = (loglik(f, pr, up) - loglik(f, pr, dn)) / (2 * h);
            const double rel = std::abs(g(j) - fd) / std::max({1.0, std::abs(g(j)), std::abs(fd)});
            CHECK(rel < 1e-4);
          }
        }
      }
    }
  }

  TEST_CASE("fitted values are invariant to affine rescaling of covariates") {
    std::mt19937_64 rng(8);
    for (Family f : {Family::Logistic, Family::Poisson}) {
      const auto pr = random_problem(rng, f, 300, 3);
      Eigen::MatrixXd raw = pr.x.values().rightCols(3);
      Eigen::MatrixXd scaled = raw;
      scaled.col(0) = raw.col(0) * 1e3 + Eigen::VectorXd::Constant(raw.rows(), -42.0);
      scaled.col(1) = raw.col(1) * -0.01 + Eigen::VectorXd::Constant(raw.rows(), 7.0);
      scaled.col(2) = raw.col(2) + 0.5 * raw.col(0);  // invertible mix
      const auto x2 = DesignMatrix::with_intercept({"x0", "x1", "x2"}, scaled);
      const auto a = f == Family::Logistic ? fit_logistic(pr.x, pr.y) : fit_poisson(pr.x, pr.y, pr.offset);
      const auto b = f == Family::Logistic ? fit_logistic(x2, pr.y) : fit_poisson(x2, pr.y, pr.offset);
      const Eigen::VectorXd ea = pr.x.values() * a.coefficients;
      const Eigen::VectorXd eb = x2.values() * b.coefficients;
      for (Eigen::Index i = 0; i < ea.size(); ++i) {
        const double ma = f == Family::Logistic ? 1 / (1 + std::exp(-ea(i))) : std::exp(ea(i) + pr.offset[i]);
        const double mb = f == Family::Logistic ? 1 / (1 + std::exp(-eb(i))) : std::exp(eb(i) + pr.offset[i]);
        CHECK(std::abs(ma - mb) < 1e-8 * std::max(1.0, std::abs(ma)));
      }
      CHECK(a.deviance == doctest::Approx(b.deviance).epsilon(1e-10));
    }
  }

  TEST_CASE("deviance never increases across iterations") {
    std::mt19937_64 rng(17);
    for (Family f : {Family::Logistic, Family::Poisson}) {
      for (int rep = 0; rep < 10; ++rep) {
        const auto pr = random_problem(rng, f, 120, 4);
        const auto fit = f == Family::Logistic ? fit_logistic(pr.x, pr.y) : fit_poisson(pr.x, pr.y, pr.offset);
        REQUIRE(fit.deviance_trace.size() >= 2);
        for (std::size_t i = 1; i < fit.deviance_trace.size(); ++i)
          CHECK(fit.deviance_trace[i] <= fit.deviance_trace[i - 1] + 1e-12 * (std::abs(fit.deviance_trace[i - 1]) + 1));
        CHECK(fit.max_abs_score < 1e-6);
      }
    }
  }

  TEST_CASE("design matrix validation") {
    Eigen::MatrixXd m(3, 2);
    m.setOnes();
    CHECK(code_of([&] { DesignMatrix::with_intercept({"a"}, m); }) == ErrorCode::ColumnMismatch);
    CHECK(code_of([&] { DesignMatrix::with_intercept({"a", "a"}, m); }) == ErrorCode::ColumnMismatch);
    CHECK(code_of([&] { DesignMatrix::with_intercept({"(Intercept)", "a"}, m); }) == ErrorCode::ColumnMismatch);
    m(0, 0) = std::nan("");
    CHECK(code_of([&] { DesignMatrix::with_intercept({"a", "b"}, m); }) == ErrorCode::ColumnMismatch);
  }

  TEST_CASE("standardized covariance maps back to the original scale") {
    // Covariance of an original-scale fit equals the inverse Fisher information.
    std::mt19937_64 rng(4);
    const auto pr = random_problem(rng, Family::Logistic, 400, 2);
    const auto fit = fit_logistic(pr.x, pr.y);
    const Eigen::VectorXd eta = pr.x.values() * fit.coefficients;
    Eigen::VectorXd w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double p = 1 / (1 + std::exp(-eta(i)));
      w(i) = p * (1 - p);
    }
    const Eigen::MatrixXd info = pr.x.values().transpose() * w.asDiagonal() * pr.x.values();
    const Eigen::MatrixXd inv = info.inverse();
    for (Eigen::Index i = 0; i < inv.rows(); ++i)
      for (Eigen::Index j = 0; j < inv.cols(); ++j)
        CHECK(fit.covariance(i, j) == doctest::Approx(inv(i, j)).epsilon(1e-6).scale(1e-12));
  }
}
