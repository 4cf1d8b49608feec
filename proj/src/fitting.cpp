#include "nvdnp/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "nvdnp/parallel.hpp"

namespace nvdnp {

namespace {

double lower(const FitProblem& p, Eigen::Index i) {
  return p.bounds.empty() ? -std::numeric_limits<double>::infinity() : p.bounds[static_cast<std::size_t>(i)].lo;
}
double upper(const FitProblem& p, Eigen::Index i) {
  return p.bounds.empty() ? std::numeric_limits<double>::infinity() : p.bounds[static_cast<std::size_t>(i)].hi;
}

Eigen::VectorXd project(const FitProblem& p, Eigen::VectorXd x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = std::clamp(x(i), lower(p, i), upper(p, i));
  return x;
}

void check_problem(const FitProblem& p) {
  if (!p.model) throw DomainError("least_squares: no model");
  if (p.init.size() == 0) throw DomainError("least_squares: no parameters");
  if (!p.bounds.empty() && p.bounds.size() != static_cast<std::size_t>(p.init.size()))
    throw DomainError("least_squares: bounds size does not match parameters");
  for (Eigen::Index i = 0; i < p.init.size(); ++i) {
    if (!(lower(p, i) <= upper(p, i))) throw DomainError("least_squares: empty bounds interval");
    if (p.init(i) < lower(p, i) || p.init(i) > upper(p, i))
      throw DomainError("least_squares: init outside bounds");
  }
  if (p.fd_floor.size() != 0 && p.fd_floor.size() != p.init.size())
    throw DomainError("least_squares: fd_floor size does not match parameters");
  if (p.max_evaluations < 1) throw DomainError("least_squares: max_evaluations must be >= 1");
}

Eigen::VectorXd residual(const FitProblem& p, const Eigen::VectorXd& x) {
  Eigen::VectorXd f = p.model(x);
  if (f.size() != p.data.size()) throw DomainError("least_squares: model output length does not match data");
  if (!f.allFinite()) throw ModelError("least_squares: model returned a non-finite value");
  return f - p.data;
}

}  // namespace

Eigen::MatrixXd finite_difference_jacobian(const ModelFn& model, const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& f0, const FitProblem& p) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd j(f0.size(), n);
  parallel_for(static_cast<std::size_t>(n), p.jacobian_workers, [&](std::size_t, std::size_t col) {
    const auto i = static_cast<Eigen::Index>(col);
    const double floor = p.fd_floor.size() ? p.fd_floor(i) : 1e-12;
    double h = std::max(p.fd_relative_step * std::abs(x(i)), floor);
    if (x(i) + h > upper(p, i)) h = -h;
    Eigen::VectorXd xh = x;
    xh(i) += h;
    const Eigen::VectorXd fh = model(xh);
    if (fh.size() != f0.size()) throw DomainError("least_squares: model output length changed");
    if (!fh.allFinite()) throw ModelError("least_squares: model returned a non-finite value");
    j.col(i) = (fh - f0) / h;
  });
  return j;
}

FitReport least_squares(const FitProblem& p) {
  check_problem(p);
  const Eigen::Index n = p.init.size();
  FitReport rep;
  Eigen::VectorXd x = project(p, p.init);
  Eigen::VectorXd r = residual(p, x);
  rep.evaluations = 1;
  double norm = r.norm();
  rep.residual_history.push_back(norm);

  auto jacobian_at = [&](const Eigen::VectorXd& at, const Eigen::VectorXd& r_at) {
    if (p.jacobian) return Eigen::MatrixXd(p.jacobian(at));
    rep.evaluations += static_cast<int>(n);
    return finite_difference_jacobian(p.model, at, r_at + p.data, p);
  };

  double lambda = 1e-3;
  Eigen::VectorXd scale = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd j;
  bool fresh = false;
  while (true) {
    if (norm <= p.tolerances.residual) {
      rep.converged = true;
      rep.stop_reason = "residual tolerance";
      break;
    }
    if (rep.evaluations >= p.max_evaluations) {
      rep.stop_reason = "evaluation budget exhausted";
      break;
    }
    if (!fresh) {
      j = jacobian_at(x, r);
      fresh = true;
    }
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    if (p.tolerances.gradient > 0.0 && g.cwiseAbs().maxCoeff() <= p.tolerances.gradient) {
      rep.converged = true;
      rep.stop_reason = "gradient tolerance";
      break;
    }
    scale = scale.cwiseMax(jtj.diagonal()).cwiseMax(1e-300);

    Eigen::MatrixXd a = jtj;
    a.diagonal() += lambda * scale;
    const Eigen::VectorXd delta = a.ldlt().solve(-g);
    const Eigen::VectorXd trial = project(p, x + delta);
    const Eigen::VectorXd step = trial - x;
    if (!step.allFinite()) throw ModelError("least_squares: non-finite step");
    if (step.norm() <= p.tolerances.step * (x.norm() + p.tolerances.step)) {
      rep.converged = true;
      rep.stop_reason = "step tolerance";
      break;
    }
    const Eigen::VectorXd r_trial = residual(p, trial);
    ++rep.evaluations;
    const double norm_trial = r_trial.norm();
    if (norm_trial < norm) {
      x = trial;
      r = r_trial;
      norm = norm_trial;
      rep.residual_history.push_back(norm);
      ++rep.iterations;
      lambda = std::max(lambda / 10.0, 1e-12);
      fresh = false;
    } else {
      lambda *= 10.0;
      if (lambda > 1e16) {
        rep.converged = true;
        rep.stop_reason = "no further decrease";
        break;
      }
    }
  }

  rep.params = x;
  rep.residual_norm = norm;

  // Uncertainty from the Jacobian at the optimum.
  const Eigen::Index m = r.size();
  if (!fresh) j = jacobian_at(x, r);
  const double s2 = m > n ? norm * norm / static_cast<double>(m - n) : 0.0;
  const Eigen::MatrixXd cov = s2 * Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(j.transpose() * j).pseudoInverse();
  rep.covariance_diagonal = cov.diagonal();
  rep.uncertainty = rep.covariance_diagonal.cwiseMax(0.0).cwiseSqrt();
  return rep;
}

nlohmann::json to_json(const FitReport& r, const std::vector<std::string>& names) {
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json cov = nlohmann::json::object();
  nlohmann::json unc = nlohmann::json::object();
  for (Eigen::Index i = 0; i < r.params.size(); ++i) {
    const std::string key = static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)]
                                                                       : "p" + std::to_string(i);
    params[key] = r.params(i);
    cov[key] = i < r.covariance_diagonal.size() ? r.covariance_diagonal(i) : 0.0;
    unc[key] = i < r.uncertainty.size() ? r.uncertainty(i) : 0.0;
  }
  return {{"params", params},
          {"covariance_diagonal", cov},
          {"uncertainty", unc},
          {"residual_norm", r.residual_norm},
          {"evaluations", r.evaluations},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"stop_reason", r.stop_reason}};
}

namespace {

// Memoizes whole-curve evaluations by exact parameter vector.
class CurveModel {
 public:
  CurveModel(std::span<const CurvePoint> data, const ExperimentSetup& setup, double sign, int workers)
      : data_(data), setup_(setup), sign_(sign), workers_(workers) {}

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) {
    const std::vector<double> key(x.data(), x.data() + x.size());
    {
      std::lock_guard lock(mutex_);
      if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    ExperimentSetup s = setup_;
    s.params.a_zz = sign_ * x(1);
    s.params.a_ani = x(2);
    Eigen::VectorXd out(static_cast<Eigen::Index>(data_.size()));
    parallel_for(data_.size(), workers_, [&](std::size_t, std::size_t i) {
      out(static_cast<Eigen::Index>(i)) = final_polarization(s, data_[i].delta_hz - x(0));
    });
    std::lock_guard lock(mutex_);
    memo_.emplace(key, out);
    return out;
  }

 private:
  std::span<const CurvePoint> data_;
  const ExperimentSetup& setup_;
  double sign_;
  int workers_;
  std::mutex mutex_;
  std::map<std::vector<double>, Eigen::VectorXd> memo_;
};

}  // namespace

CurveFit fit_polarization_curve(std::span<const CurvePoint> data, const ExperimentSetup& setup,
                                const CurveFitOptions& options) {
  if (data.size() < 10) throw DomainError("fit_polarization_curve: need at least 10 data points");
  for (const CurvePoint& c : data)
    if (!std::isfinite(c.delta_hz) || !std::isfinite(c.p))
      throw DomainError("fit_polarization_curve: non-finite data");

  const double sign = setup.params.a_zz > 0.0 ? 1.0 : -1.0;
  CurveModel model(data, setup, sign, options.workers);

  FitProblem prob;
  prob.model = [&model](const Eigen::VectorXd& x) { return model(x); };
  prob.data.resize(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) prob.data(static_cast<Eigen::Index>(i)) = data[i].p;
  prob.init = Eigen::Vector3d(options.f_rel_hz, options.a_zz_magnitude_hz, options.a_ani_hz);
  prob.bounds = {{-5e6, 5e6}, {0.0, 1e8}, {0.0, 1e8}};
  prob.fd_floor = Eigen::Vector3d(1.0, 1.0, 1.0);
  prob.max_evaluations = options.max_evaluations;

  CurveFit fit;
  fit.report = least_squares(prob);
  fit.f_rel_hz = fit.report.params(0);
  fit.a_zz_magnitude_hz = fit.report.params(1);
  fit.a_zz_hz = sign * fit.a_zz_magnitude_hz;
  fit.a_ani_hz = fit.report.params(2);
  const double rel = fit.a_ani_hz > 0.0 ? fit.report.uncertainty(2) / fit.a_ani_hz
                                        : std::numeric_limits<double>::infinity();
  fit.a_ani_poorly_constrained = !(rel <= options.ani_uncertainty_flag);
  return fit;
}

nlohmann::json to_json(const CurveFit& f) {
  nlohmann::json j = to_json(f.report, kCurveFitNames);
  j["a_zz_hz"] = f.a_zz_hz;
  j["a_ani_poorly_constrained"] = f.a_ani_poorly_constrained;
  return j;
}

}  // namespace nvdnp
