#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "expomatch/datamodel.hpp"

namespace expomatch {

enum class Family { Logistic, Poisson };

std::string_view to_string(Family family);

inline constexpr std::string_view kInterceptName = "(Intercept)";

/// Model matrix whose first column is the intercept.
///
/// Non-intercept columns are z-standardized inside the fitters; the
/// per-column centre and scale are exposed for inspection.
class DesignMatrix {
 public:
  DesignMatrix() = default;

  /// Prepends a column of ones named "(Intercept)". Throws ColumnMismatch on
  /// duplicate or reserved names, non-finite values, or a size mismatch.
  static DesignMatrix with_intercept(std::vector<std::string> predictor_names,
                                     const Eigen::MatrixXd& predictors);

  const std::vector<std::string>& names() const noexcept { return names_; }
  const Eigen::MatrixXd& values() const noexcept { return values_; }
  Eigen::Index rows() const noexcept { return values_.rows(); }
  Eigen::Index cols() const noexcept { return values_.cols(); }

  struct Standardization {
    Eigen::VectorXd center;  // 0 for the intercept
    Eigen::VectorXd scale;   // 1 for the intercept; 0 flags a constant column
  };
  Standardization standardization() const;

 private:
  std::vector<std::string> names_;
  Eigen::MatrixXd values_;
};

struct FitOptions {
  int max_iterations = 100;
  double relative_tolerance = 1e-8;  // on the deviance
  double score_tolerance = 1e-6;     // max |score|, standardized coordinates
  int max_step_halvings = 10;
  double separation_threshold = 15.0;  // |standardized coefficient|
};

struct FittedGlm {
  Family family = Family::Logistic;
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;  // original covariate scale
  Eigen::MatrixXd covariance;
  double deviance = 0.0;
  int iterations = 0;
  bool converged = false;
  double max_abs_score = 0.0;  // standardized coordinates, at the returned fit
  std::vector<double> deviance_trace;
  std::size_t n_obs = 0;

  std::optional<std::size_t> index_of(std::string_view name) const;
  double coefficient(std::string_view name) const;
  double std_error(std::string_view name) const;
};

FittedGlm fit_logistic(const DesignMatrix& x, std::span<const double> y, const FitOptions& options = {});

/// Poisson log-linear fit with a fixed offset (log person-years). An empty
/// offset means zero.
FittedGlm fit_poisson(const DesignMatrix& x, std::span<const double> counts,
                      std::span<const double> offset, const FitOptions& options = {});

/// Gradient of the log-likelihood with respect to original-scale coefficients.
Eigen::VectorXd score(Family family, const DesignMatrix& x, std::span<const double> y,
                      std::span<const double> offset, const Eigen::VectorXd& coefficients);

Eigen::VectorXd predict_proba(const FittedGlm& model, const DesignMatrix& x);

struct IrrEstimate {
  double irr = 1.0;
  double ci_low = 1.0;
  double ci_high = 1.0;
  double log_irr = 0.0;
  double log_se = 0.0;
  Region region = Region::IndustrialMidwest;
  std::size_t n_pairs = 0;
};

/// Two-sided normal quantile for a central interval at `level`.
double normal_critical_value(double level);

IrrEstimate irr_with_ci(const FittedGlm& model, std::string_view exposure_column, double level = 0.95);

}  // namespace expomatch
