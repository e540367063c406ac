#include "geoprev/optim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "geoprev/errors.hpp"

namespace geoprev::optim {

namespace {

Eigen::VectorXd project(Eigen::VectorXd x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Gradient with components zeroed where a bound blocks descent.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                   const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)) pg[i] = 0.0;
  }
  return pg;
}

}  // namespace

Eigen::VectorXd numeric_gradient(const ValueFn& f, const Eigen::VectorXd& x, double h,
                                 const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double up = std::min(x[i] + h, upper[i]);
    const double dn = std::max(x[i] - h, lower[i]);
    xp[i] = up;
    const double fu = f(xp);
    xp[i] = dn;
    const double fd = f(xp);
    xp[i] = x[i];
    g[i] = (up > dn) ? (fu - fd) / (up - dn) : 0.0;
  }
  return g;
}

Objective with_numeric_gradient(ValueFn f, Eigen::VectorXd lower, Eigen::VectorXd upper,
                                double h) {
  return [f = std::move(f), lower = std::move(lower), upper = std::move(upper), h](
             const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const double v = f(x);
    if (grad) *grad = numeric_gradient(f, x, h, lower, upper);
    return v;
  };
}

Result minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                     const Eigen::VectorXd& upper, const Options& options) {
  const Eigen::Index n = x0.size();
  Result res;
  res.x = project(std::move(x0), lower, upper);
  res.grad.resize(n);
  res.f = f(res.x, &res.grad);
  ++res.evaluations;
  if (!std::isfinite(res.f) || !res.grad.allFinite()) {
    std::ostringstream msg;
    msg << "objective not finite at the starting point [" << res.x.transpose() << "]";
    throw FitError(msg.str());
  }
  res.trace.push_back(res.f);

  const bool warm = options.initial_inverse_hessian.rows() == n && options.initial_inverse_hessian.cols() == n;
  Eigen::MatrixXd hinv = warm ? options.initial_inverse_hessian : Eigen::MatrixXd::Identity(n, n);
  bool scaled = warm;
  int stalled = 0;
  auto finish = [&](Result& r) { r.inverse_hessian = hinv; };
  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    const Eigen::VectorXd pg = projected_gradient(res.x, res.grad, lower, upper);
    if (pg.lpNorm<Eigen::Infinity>() < options.grad_tol) {
      res.converged = true;
      res.message = "projected gradient below tolerance";
      finish(res);
      return res;
    }

    // Free variables only; fixed ones sit on an active bound.
    Eigen::VectorXd dir = -hinv * pg;
    for (Eigen::Index i = 0; i < n; ++i)
      if (pg[i] == 0.0) dir[i] = 0.0;
    if (dir.dot(pg) >= 0.0) {
      hinv.setIdentity();
      scaled = false;
      dir = -pg;
    }
    const double dmax = dir.lpNorm<Eigen::Infinity>();
    if (dmax > options.max_step) dir *= options.max_step / dmax;

    double step = 1.0;
    Eigen::VectorXd x_new, g_new(n);
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = project(res.x + step * dir, lower, upper);
      f_new = f(x_new, &g_new);
      ++res.evaluations;
      const double decrease = res.grad.dot(x_new - res.x);
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= res.f + 1e-4 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.converged = pg.lpNorm<Eigen::Infinity>() < 1e3 * options.grad_tol;
      res.message = "line search failed to decrease the objective";
      finish(res);
      return res;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - res.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      if (!scaled) {
        hinv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
      hinv = (id - rho * s * y.transpose()) * hinv * (id - rho * y * s.transpose()) +
             rho * s * s.transpose();
    }

    const double f_old = res.f;
    res.x = x_new;
    res.f = f_new;
    res.grad = g_new;
    res.trace.push_back(f_new);

    if (std::abs(f_old - f_new) <= options.rel_f_tol * std::max(1.0, std::abs(f_old))) {
      if (++stalled >= 2) {
        res.converged = true;
        res.message = "relative objective change below tolerance";
        finish(res);
        return res;
      }
    } else {
      stalled = 0;
    }
  }
  res.message = "iteration limit reached";
  finish(res);
  return res;
}

}  // namespace geoprev::optim
