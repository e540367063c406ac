#include "geoprev/lgm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "geoprev/errors.hpp"
#include "geoprev/link.hpp"
#include "geoprev/optim.hpp"
#include "geoprev/parallel.hpp"

namespace geoprev::lgm {

using SpMat = Eigen::SparseMatrix<double>;
using Trip = Eigen::Triplet<double>;

Location Lattice::node(std::size_t idx) const {
  return {origin.lon + static_cast<double>(idx % nx) * cell,
          origin.lat + static_cast<double>(idx / nx) * cell};
}

BBox Lattice::hull() const {
  return {origin,
          {origin.lon + static_cast<double>(nx - 1) * cell, origin.lat + static_cast<double>(ny - 1) * cell}};
}

bool Lattice::contains(const Location& p) const {
  const double tol = 1e-9 * cell;
  return hull().expanded(tol).contains(p);
}

Lattice Lattice::covering(const BBox& bbox, double cell, double margin) {
  if (!(cell > 0.0)) throw ValidationError("lgm: lattice_cell must be > 0");
  if (!(margin >= 0.0)) throw ValidationError("lgm: margin must be >= 0");
  const BBox ex = bbox.expanded(margin);
  Lattice l;
  l.origin = ex.lo;
  l.cell = cell;
  l.nx = static_cast<std::size_t>(std::ceil(ex.width() / cell - 1e-9)) + 1;
  l.ny = static_cast<std::size_t>(std::ceil(ex.height() / cell - 1e-9)) + 1;
  l.nx = std::max<std::size_t>(l.nx, 3);
  l.ny = std::max<std::size_t>(l.ny, 3);
  return l;
}

SpMat build_precision(const Lattice& lattice, double kappa, double tau) {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw ValidationError("lgm: kappa must be > 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("lgm: tau must be > 0");
  if (lattice.nx < 3 || lattice.ny < 3) throw ValidationError("lgm: lattice must be at least 3x3");
  const auto n = static_cast<int>(lattice.size());
  const double h2 = lattice.cell * lattice.cell;
  const auto nx = static_cast<int>(lattice.nx);
  const auto ny = static_cast<int>(lattice.ny);
  // K = kappa^2 C + G with C = h^2 I; G is the graph Laplacian of the grid.
  std::vector<Trip> trip;
  trip.reserve(static_cast<std::size_t>(n) * 5);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int k = j * nx + i;
      double deg = 0.0;
      auto link = [&](int other) {
        trip.emplace_back(k, other, -1.0);
        deg += 1.0;
      };
      if (i > 0) link(k - 1);
      if (i + 1 < nx) link(k + 1);
      if (j > 0) link(k - nx);
      if (j + 1 < ny) link(k + nx);
      trip.emplace_back(k, k, kappa * kappa * h2 + deg);
    }
  }
  SpMat kmat(n, n);
  kmat.setFromTriplets(trip.begin(), trip.end());
  SpMat q = (tau / h2) * (kmat * kmat);
  q.makeCompressed();
  return q;
}

SpMat interp_matrix(const Lattice& lattice, std::span<const Location> pts) {
  std::vector<Trip> trip;
  trip.reserve(pts.size() * 4);
  for (std::size_t r = 0; r < pts.size(); ++r) {
    const auto& p = pts[r];
    if (!lattice.contains(p)) {
      std::ostringstream msg;
      msg << "lgm: point (" << p.lon << ", " << p.lat << ") outside the lattice hull";
      throw BoundsError(msg.str());
    }
    const double fx = std::clamp((p.lon - lattice.origin.lon) / lattice.cell, 0.0,
                                 static_cast<double>(lattice.nx - 1));
    const double fy = std::clamp((p.lat - lattice.origin.lat) / lattice.cell, 0.0,
                                 static_cast<double>(lattice.ny - 1));
    const auto i = std::min(static_cast<std::size_t>(fx), lattice.nx - 2);
    const auto j = std::min(static_cast<std::size_t>(fy), lattice.ny - 2);
    const double tx = fx - static_cast<double>(i);
    const double ty = fy - static_cast<double>(j);
    const double w[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
    const std::size_t idx[4] = {j * lattice.nx + i, j * lattice.nx + i + 1, (j + 1) * lattice.nx + i,
                                (j + 1) * lattice.nx + i + 1};
    for (int c = 0; c < 4; ++c)
      if (w[c] != 0.0) trip.emplace_back(static_cast<int>(r), static_cast<int>(idx[c]), w[c]);
  }
  SpMat a(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(lattice.size()));
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

std::string to_string(Response r) {
  switch (r) {
    case Response::Binomial: return "binomial";
    case Response::BetaBinomial: return "betabinomial";
    case Response::Gaussian: return "gaussian";
  }
  return "binomial";
}

Response response_from_string(const std::string& s) {
  if (s == "binomial") return Response::Binomial;
  if (s == "betabinomial") return Response::BetaBinomial;
  if (s == "gaussian") return Response::Gaussian;
  throw ValidationError("lgm: unknown response '" + s + "'");
}

void LgmSpec::validate() const {
  if (!(lattice_cell > 0.0)) throw ValidationError("lgm: lattice_cell must be > 0");
  if (!(margin >= 0.0)) throw ValidationError("lgm: margin must be >= 0");
  if (alpha != 2) throw ValidationError("lgm: only alpha = 2 is supported");
  auto box = [](double lo, double hi, const char* what) {
    if (!(lo > 0.0) || !(hi > lo)) throw ValidationError(std::string("lgm: invalid ") + what + " range");
  };
  box(kappa_min, kappa_max, "kappa");
  box(tau_min, tau_max, "tau");
  box(phi_min, phi_max, "phi");
  box(noise_var_min, noise_var_max, "noise variance");
  if (fixed_noise_var && !(*fixed_noise_var > 0.0)) throw ValidationError("lgm: fixed_noise_var must be > 0");
  if (!(min_range_cells >= 0.0)) throw ValidationError("lgm: min_range_cells must be >= 0");
  if (!(effective_kappa_max() > kappa_min)) throw ValidationError("lgm: kappa range empty at this lattice_cell");
  if (!(intercept_precision > 0.0)) throw ValidationError("lgm: intercept_precision must be > 0");
}

double LgmSpec::effective_kappa_max() const {
  if (min_range_cells <= 0.0) return kappa_max;
  return std::min(kappa_max, std::sqrt(8.0) / (min_range_cells * lattice_cell));
}

namespace {

struct Problem {
  Lattice lattice;
  SpMat a_aug;  // [A, 1]
  Eigen::VectorXd h, n, y;
  double log_const = 0.0;  // binomial coefficients
};

Problem make_problem(std::span<const SurveyRecord> records, const Lattice& lattice) {
  Problem p;
  p.lattice = lattice;
  const auto locs = locations_of(records);
  const SpMat a = interp_matrix(lattice, locs);
  const auto m = static_cast<Eigen::Index>(lattice.size());
  std::vector<Trip> trip;
  for (Eigen::Index k = 0; k < a.outerSize(); ++k)
    for (SpMat::InnerIterator it(a, k); it; ++it) trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (std::size_t i = 0; i < records.size(); ++i) trip.emplace_back(static_cast<int>(i), static_cast<int>(m), 1.0);
  p.a_aug.resize(static_cast<Eigen::Index>(records.size()), m + 1);
  p.a_aug.setFromTriplets(trip.begin(), trip.end());
  const auto n = static_cast<Eigen::Index>(records.size());
  p.h.resize(n);
  p.n.resize(n);
  p.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    p.h[i] = static_cast<double>(r.positive);
    p.n[i] = static_cast<double>(r.examined);
    p.y[i] = r.prevalence();
    p.log_const += std::lgamma(p.n[i] + 1.0) - std::lgamma(p.h[i] + 1.0) - std::lgamma(p.n[i] - p.h[i] + 1.0);
  }
  return p;
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Log-likelihood at linear predictor z with gradient and negative curvature.
// Curvature is floored at a tiny positive value so Newton stays a descent
// method where the Beta-binomial likelihood is locally convex.
double likelihood(const Problem& p, const LgmSpec& spec, const Theta& th, const Eigen::VectorXd& z,
                  Eigen::VectorXd* grad, Eigen::VectorXd* curv) {
  const auto n = z.size();
  if (grad) grad->resize(n);
  if (curv) curv->resize(n);
  double ll = 0.0;
  switch (spec.response) {
    case Response::Binomial:
      ll = p.log_const;
      for (Eigen::Index i = 0; i < n; ++i) {
        ll += p.h[i] * z[i] - p.n[i] * softplus(z[i]);
        const double pr = inv_logit(z[i]);
        if (grad) (*grad)[i] = p.h[i] - p.n[i] * pr;
        if (curv) (*curv)[i] = std::max(p.n[i] * pr * (1.0 - pr), 1e-300);
      }
      break;
    case Response::BetaBinomial: {
      using boost::math::digamma;
      using boost::math::trigamma;
      const double phi = th.extra;
      ll = p.log_const;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double pr = std::clamp(inv_logit(z[i]), 1e-15, 1.0 - 1e-15);
        const double a = pr * phi, b = (1.0 - pr) * phi;
        const double hh = p.h[i], nn = p.n[i];
        ll += std::lgamma(hh + a) + std::lgamma(nn - hh + b) - std::lgamma(nn + phi) - std::lgamma(a) -
              std::lgamma(b) + std::lgamma(phi);
        if (grad || curv) {
          const double s = pr * (1.0 - pr);
          const double d1 = digamma(hh + a) - digamma(a) - digamma(nn - hh + b) + digamma(b);
          if (grad) (*grad)[i] = phi * s * d1;
          if (curv) {
            const double d2 = trigamma(hh + a) - trigamma(a) + trigamma(nn - hh + b) - trigamma(b);
            const double second = phi * s * (1.0 - 2.0 * pr) * d1 + phi * phi * s * s * d2;
            (*curv)[i] = std::max(-second, 1e-12);
          }
        }
      }
      break;
    }
    case Response::Gaussian: {
      const double s2 = th.extra;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double r = p.y[i] - z[i];
        ll += -0.5 * std::log(2.0 * std::numbers::pi * s2) - 0.5 * r * r / s2;
        if (grad) (*grad)[i] = r / s2;
        if (curv) (*curv)[i] = 1.0 / s2;
      }
      break;
    }
  }
  return ll;
}

SpMat prior_precision(const Problem& p, const LgmSpec& spec, const Theta& th) {
  const SpMat q = build_precision(p.lattice, th.kappa, th.tau);
  const auto m = q.rows();
  SpMat out(m + 1, m + 1);
  std::vector<Trip> trip;
  trip.reserve(static_cast<std::size_t>(q.nonZeros()) + 1);
  for (Eigen::Index k = 0; k < q.outerSize(); ++k)
    for (SpMat::InnerIterator it(q, k); it; ++it) trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  trip.emplace_back(static_cast<int>(m), static_cast<int>(m), spec.intercept_precision);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

double log_det(const Cholesky& c) {
  return 2.0 * c.matrixL().nestedExpression().diagonal().array().log().sum();
}

struct Laplace {
  Eigen::VectorXd x;
  std::shared_ptr<Cholesky> chol;
  double log_marginal = 0.0;
  int iterations = 0;
};

Laplace laplace(const Problem& p, const LgmSpec& spec, const Theta& th, const Eigen::VectorXd* warm) {
  const SpMat prior = prior_precision(p, spec, th);
  const auto dim = prior.rows();
  Laplace out;
  out.x = (warm && warm->size() == dim) ? *warm : Eigen::VectorXd::Zero(dim);

  auto objective = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd z = p.a_aug * x;
    return likelihood(p, spec, th, z, nullptr, nullptr) - 0.5 * x.dot(prior * x);
  };

  auto chol = std::make_shared<Cholesky>();
  Cholesky prior_chol(prior);
  if (prior_chol.info() != Eigen::Success) throw NumericalError("lgm: prior precision not positive definite");

  double obj = objective(out.x);
  Eigen::VectorXd g, w;
  for (int it = 0;; ++it) {
    const Eigen::VectorXd z = p.a_aug * out.x;
    likelihood(p, spec, th, z, &g, &w);
    const Eigen::VectorXd grad = p.a_aug.transpose() * g - prior * out.x;
    const SpMat hess = prior + SpMat(p.a_aug.transpose() * w.asDiagonal() * p.a_aug);
    chol->compute(hess);
    if (chol->info() != Eigen::Success) throw NumericalError("lgm: Laplace Hessian not positive definite");
    const double gnorm = grad.lpNorm<Eigen::Infinity>();
    const Eigen::VectorXd step = chol->solve(grad);
    if (gnorm < 1e-8 || step.lpNorm<Eigen::Infinity>() < 1e-12) {
      out.iterations = it;
      break;
    }
    if (it >= 100) {
      std::ostringstream msg;
      msg << "lgm: inner Newton did not converge in 100 iterations (gradient norm " << gnorm << ")";
      throw FitError(msg.str());
    }
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      const Eigen::VectorXd cand = out.x + t * step;
      const double v = objective(cand);
      if (std::isfinite(v) && v >= obj - 1e-12 * std::abs(obj)) {
        out.x = cand;
        obj = v;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      out.iterations = it;
      break;
    }
  }
  // The Hessian was factorized at the final iterate.
  out.log_marginal = obj + 0.5 * log_det(prior_chol) - 0.5 * log_det(*chol);
  out.chol = std::move(chol);
  return out;
}

struct Layout {
  bool has_extra;
  Eigen::Index size() const { return has_extra ? 3 : 2; }
};

Layout layout_of(const LgmSpec& spec) {
  return {spec.response == Response::BetaBinomial ||
          (spec.response == Response::Gaussian && !spec.fixed_noise_var)};
}

Theta unpack(const LgmSpec& spec, const Eigen::VectorXd& v) {
  Theta th;
  th.kappa = std::exp(v[0]);
  th.tau = std::exp(v[1]);
  if (v.size() > 2) th.extra = std::exp(v[2]);
  else if (spec.response == Response::Gaussian) th.extra = *spec.fixed_noise_var;
  return th;
}

Lattice lattice_for(std::span<const SurveyRecord> records, const LgmSpec& spec) {
  return Lattice::covering(bounding_box(records), spec.lattice_cell, spec.margin);
}

LgmFit assemble(const LgmSpec& spec, const Lattice& lattice, const Theta& th, Laplace la) {
  LgmFit out;
  out.lattice = lattice;
  out.spec = spec;
  out.theta = th;
  out.mode = std::move(la.x);
  out.chol = std::move(la.chol);
  out.log_marginal = la.log_marginal;
  return out;
}

}  // namespace

double laplace_log_marginal(std::span<const SurveyRecord> records, const Lattice& lattice,
                            const LgmSpec& spec, const Theta& theta, LatentMode* mode) {
  spec.validate();
  const Problem p = make_problem(records, lattice);
  const Laplace la = laplace(p, spec, theta, nullptr);
  if (mode) {
    mode->x = la.x;
    mode->log_marginal = la.log_marginal;
    mode->newton_iterations = la.iterations;
  }
  return la.log_marginal;
}

Eigen::VectorXd LgmFit::theta_hat() const {
  const bool extra = spec.response == Response::BetaBinomial ||
                     (spec.response == Response::Gaussian && !spec.fixed_noise_var);
  Eigen::VectorXd v(extra ? 3 : 2);
  v[0] = std::log(theta.kappa);
  v[1] = std::log(theta.tau);
  if (extra) v[2] = std::log(theta.extra);
  return v;
}

LgmFit fit(std::span<const SurveyRecord> records, const LgmSpec& spec) {
  spec.validate();
  if (records.size() < 2) throw ValidationError("lgm fit needs at least 2 records");
  const Lattice lattice = lattice_for(records, spec);
  const Problem p = make_problem(records, lattice);
  const Layout layout = layout_of(spec);

  Eigen::VectorXd lo(layout.size()), hi(layout.size()), x0(layout.size());
  lo[0] = std::log(spec.kappa_min);
  hi[0] = std::log(spec.effective_kappa_max());
  lo[1] = std::log(spec.tau_min);
  hi[1] = std::log(spec.tau_max);
  const BBox box = bounding_box(records);
  const double diag = std::hypot(box.width(), box.height());
  const double range0 = std::max(diag / 5.0, 2.0 * spec.lattice_cell);
  const double kappa0 = std::clamp(std::sqrt(8.0) / range0, spec.kappa_min, spec.effective_kappa_max());
  x0[0] = std::log(kappa0);
  x0[1] = std::clamp(std::log(1.0 / (4.0 * std::numbers::pi * kappa0 * kappa0)), lo[1], hi[1]);
  std::vector<std::string> names{"log_kappa", "log_tau"};
  if (layout.has_extra) {
    if (spec.response == Response::BetaBinomial) {
      lo[2] = std::log(spec.phi_min);
      hi[2] = std::log(spec.phi_max);
      x0[2] = std::clamp(std::log(10.0), lo[2], hi[2]);
      names.emplace_back("log_phi");
    } else {
      lo[2] = std::log(spec.noise_var_min);
      hi[2] = std::log(spec.noise_var_max);
      const double v = (p.y.array() - p.y.mean()).square().mean();
      x0[2] = std::clamp(std::log(std::max(v / 2.0, 1e-6)), lo[2], hi[2]);
      names.emplace_back("log_noise_var");
    }
  }

  Eigen::VectorXd warm = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lattice.size()) + 1);
  const optim::ValueFn neg = [&](const Eigen::VectorXd& v) {
    try {
      Laplace la = laplace(p, spec, unpack(spec, v), &warm);
      if (!std::isfinite(la.log_marginal)) return std::numeric_limits<double>::infinity();
      warm = la.x;
      return -la.log_marginal;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    } catch (const FitError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  optim::Options opts;
  opts.grad_tol = 1e-4;
  opts.rel_f_tol = 1e-10;
  opts.max_iterations = 200;
  opts.max_step = 1.0;
  const optim::Result res = optim::minimize_bfgs(optim::with_numeric_gradient(neg, lo, hi, 1e-4), x0, lo, hi, opts);

  const Theta th = unpack(spec, res.x);
  LgmFit out = assemble(spec, lattice, th, laplace(p, spec, th, &warm));
  out.outer_iterations = res.iterations;
  out.converged = res.converged;
  for (Eigen::Index k = 0; k < layout.size(); ++k) {
    const double tol = 1e-6 * (hi[k] - lo[k]);
    const char* side = nullptr;
    if (res.x[k] <= lo[k] + tol) side = "lower";
    if (res.x[k] >= hi[k] - tol) side = "upper";
    if (side) out.bound_hits.push_back(names[static_cast<std::size_t>(k)] + " at " + side + " bound");
  }
  if (spec.strict_bounds && !out.bound_hits.empty())
    throw FitError("lgm: hyperparameter optimum left the prior range: " + out.bound_hits.front());
  return out;
}

LgmFit refit_at(std::span<const SurveyRecord> records, const LgmSpec& spec, const Theta& theta) {
  spec.validate();
  const Lattice lattice = lattice_for(records, spec);
  const Problem p = make_problem(records, lattice);
  LgmFit out = assemble(spec, lattice, theta, laplace(p, spec, theta, nullptr));
  out.converged = true;
  return out;
}

std::vector<LgmPrediction> predict(const LgmFit& fit, std::span<const Location> pts) {
  const SpMat a = interp_matrix(fit.lattice, pts);
  const SpMat at = a.transpose();
  const auto dim = fit.mode.size();
  const auto& chol = *fit.chol;
  std::vector<LgmPrediction> out(pts.size());
  const Response resp = fit.spec.response;
  parallel::parallel_for(pts.size(), fit.spec.threads, [&](std::size_t i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    for (SpMat::InnerIterator it(at, static_cast<Eigen::Index>(i)); it; ++it) v[it.row()] = it.value();
    v[dim - 1] = 1.0;
    const double mu = v.dot(fit.mode);
    // var = v' H^{-1} v = |L^{-1} P v|^2
    Eigen::VectorXd pv = chol.permutationP() * v;
    chol.matrixL().solveInPlace(pv);
    const double sd = std::sqrt(pv.squaredNorm());
    auto& o = out[i];
    o.latent_mean = mu;
    o.latent_sd = sd;
    if (resp == Response::Gaussian) {
      o.median = mu;
      o.mean = mu;
      o.sd = std::sqrt(sd * sd + fit.theta.extra);
      return;
    }
    const auto mom = logit_normal_moments(mu, sd);
    o.median = inv_logit(mu);
    o.mean = mom.mean;
    double var = mom.variance;
    if (resp == Response::BetaBinomial) {
      const double e_pq = mom.mean - (mom.variance + mom.mean * mom.mean);
      var += std::max(e_pq, 0.0) / (1.0 + fit.theta.extra);
    }
    o.sd = std::sqrt(var);
  });
  return out;
}

RangeDiagnostic range_diagnostic(const Theta& theta) {
  return {std::sqrt(8.0) / theta.kappa, 1.0 / (4.0 * std::numbers::pi * theta.kappa * theta.kappa * theta.tau)};
}

RangeDiagnostic range_diagnostic(const LgmFit& fit) { return range_diagnostic(fit.theta); }

}  // namespace geoprev::lgm
