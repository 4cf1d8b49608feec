#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nvdnp/experiments.hpp"
#include "nvdnp/types.hpp"

namespace nvdnp {

struct Bounds {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

struct FitTolerances {
  double step = 1e-10;      // relative parameter change
  double residual = 1e-12;  // ‖r‖
  double gradient = 0.0;    // ‖Jᵀr‖∞; 0 disables
};

using ModelFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct FitProblem {
  ModelFn model;
  Eigen::VectorXd data;
  Eigen::VectorXd init;
  std::vector<Bounds> bounds;  // empty: unbounded
  FitTolerances tolerances;
  int max_evaluations = 500;

  /// Forward-difference step: max(relative·|x|, floor). Empty floor vector means 1e−12.
  double fd_relative_step = 1e-6;
  Eigen::VectorXd fd_floor;

  /// Optional analytic Jacobian; replaces finite differences when set.
  JacobianFn jacobian;
  /// Jacobian columns are evaluated on this many threads. The model must then be reentrant.
  int jacobian_workers = 1;
};

struct FitReport {
  Eigen::VectorXd params;
  double residual_norm = 0.0;
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  Eigen::VectorXd uncertainty;          // √diag(cov)
  Eigen::VectorXd covariance_diagonal;  // s²·(JᵀJ)⁻¹, s² = ‖r‖²/(m − n)
  std::vector<double> residual_history; // ‖r‖ after each accepted step, starting at init
};

/// Bounded Levenberg–Marquardt. Non-convergence is reported, not thrown.
/// Throws ModelError on non-finite model output, DomainError on an invalid problem.
FitReport least_squares(const FitProblem& p);

/// Forward differences with steps pushed inward at upper bounds.
Eigen::MatrixXd finite_difference_jacobian(const ModelFn& model, const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& f0, const FitProblem& p);

/// Thrown by callers that treat non-convergence as an error.
class FitError : public Error {
 public:
  FitError(const std::string& what, FitReport report) : Error(what), report_(std::move(report)) {}
  const FitReport& report() const { return report_; }

 private:
  FitReport report_;
};

nlohmann::json to_json(const FitReport& r, const std::vector<std::string>& names);

struct CurvePoint {
  double delta_hz;
  double p;
};

struct CurveFitOptions {
  double f_rel_hz = 0.0;
  double a_zz_magnitude_hz = 600e3;
  double a_ani_hz = 100e3;
  int max_evaluations = 400;
  int workers = 1;
  /// Relative A_ani uncertainty above which the report is flagged.
  double ani_uncertainty_flag = 0.2;
};

struct CurveFit {
  double f_rel_hz;
  double a_zz_magnitude_hz;
  double a_zz_hz;  // preset sign applied
  double a_ani_hz;
  bool a_ani_poorly_constrained;
  FitReport report;
};

inline const std::vector<std::string> kCurveFitNames{"f_rel_hz", "a_zz_magnitude_hz", "a_ani_hz"};

/// Fits (f_rel, |A_zz|, A_ani) to P(Δ) data with the full schedule simulation as
/// forward model: P_model(Δ) = P(Δ − f_rel). Requires ≥ 10 points.
CurveFit fit_polarization_curve(std::span<const CurvePoint> data, const ExperimentSetup& setup,
                                const CurveFitOptions& options = {});

nlohmann::json to_json(const CurveFit& f);

}  // namespace nvdnp
