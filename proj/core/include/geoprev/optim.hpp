#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace geoprev::optim {

/// Objective value at `x`; when `grad` is non-null it must be filled as well.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;
using ValueFn = std::function<double(const Eigen::VectorXd& x)>;

struct Options {
  int max_iterations = 200;
  double grad_tol = 1e-6;       // projected-gradient infinity norm
  double rel_f_tol = 1e-10;     // relative change of f between accepted steps
  double max_step = 2.0;        // cap on the infinity norm of a single step
  Eigen::MatrixXd initial_inverse_hessian;  // warm start; empty means a scaled identity
};

struct Result {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> trace;  // f after each accepted step, starting with f(x0)
  Eigen::MatrixXd inverse_hessian;  // final BFGS approximation
  std::string message;
};

/// Box-constrained quasi-Newton minimization (projected BFGS with Armijo
/// backtracking). Non-finite objective values are treated as infeasible and
/// shrink the step. Throws FitError if f(x0) is not finite.
Result minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                     const Eigen::VectorXd& upper, const Options& options = {});

/// Central-difference gradient; falls back to one-sided differences within
/// `h` of a bound.
Eigen::VectorXd numeric_gradient(const ValueFn& f, const Eigen::VectorXd& x, double h,
                                 const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

/// Wraps a value-only function into an Objective with numeric gradients.
Objective with_numeric_gradient(ValueFn f, Eigen::VectorXd lower, Eigen::VectorXd upper,
                                double h = 1e-5);

}  // namespace geoprev::optim
