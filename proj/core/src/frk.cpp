#include "geoprev/frk.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "geoprev/errors.hpp"
#include "geoprev/link.hpp"
#include "geoprev/optim.hpp"
#include "geoprev/parallel.hpp"

namespace geoprev::frk {

// ---------------------------------------------------------------------------
// Basis functions

BasisSet place_basis(const BBox& bbox, int nres, int regular, double scale_aperture) {
  if (nres < 1) throw ValidationError("frk: nres must be >= 1");
  if (regular < 1) throw ValidationError("frk: regular must be >= 1");
  if (!(scale_aperture > 0.0)) throw ValidationError("frk: scale_aperture must be > 0");
  const double w = bbox.width();
  const double h = bbox.height();
  if (!(w > 0.0) || !(h > 0.0)) throw ValidationError("frk: degenerate bounding box for basis");

  BasisSet b;
  b.nres = nres;
  b.regular = regular;
  b.scale_aperture = scale_aperture;
  for (int k = 1; k <= nres; ++k) {
    const auto per_side = static_cast<std::size_t>(regular) * 3u * (std::size_t{1} << (k - 1));
    const double short_side = std::min(w, h);
    const double margin = scale_aperture * short_side / static_cast<double>(per_side);
    const BBox ex = bbox.expanded(margin);
    const double spacing = std::min(ex.width(), ex.height()) / static_cast<double>(per_side);
    auto count = [&](double extent) {
      return std::max(per_side, static_cast<std::size_t>(std::llround(extent / spacing)));
    };
    BasisSet::Layer layer;
    layer.nx = count(ex.width());
    layer.ny = count(ex.height());
    layer.offset = b.centres.size();
    layer.spacing = spacing;
    layer.aperture = scale_aperture * spacing;
    const double cx = 0.5 * (ex.lo.lon + ex.hi.lon);
    const double cy = 0.5 * (ex.lo.lat + ex.hi.lat);
    const double x0 = cx - 0.5 * static_cast<double>(layer.nx - 1) * spacing;
    const double y0 = cy - 0.5 * static_cast<double>(layer.ny - 1) * spacing;
    for (std::size_t iy = 0; iy < layer.ny; ++iy) {
      for (std::size_t ix = 0; ix < layer.nx; ++ix) {
        b.centres.push_back({x0 + static_cast<double>(ix) * spacing, y0 + static_cast<double>(iy) * spacing});
        b.apertures.push_back(layer.aperture);
        b.resolution.push_back(k);
      }
    }
    b.layers.push_back(layer);
  }
  return b;
}

Eigen::MatrixXd basis_eval(const BasisSet& basis, std::span<const Location> pts) {
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(basis.size()));
  for (std::size_t l = 0; l < basis.size(); ++l) {
    const double inv = 1.0 / (2.0 * basis.apertures[l] * basis.apertures[l]);
    const auto& c = basis.centres[l];
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double dx = pts[i].lon - c.lon;
      const double dy = pts[i].lat - c.lat;
      phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
  return phi;
}

// ---------------------------------------------------------------------------
// BAUs

BauKey bau_key(const Location& loc, double cell_size) {
  return {static_cast<std::int64_t>(std::floor(loc.lon / cell_size)),
          static_cast<std::int64_t>(std::floor(loc.lat / cell_size))};
}

Location bau_centroid(const BauKey& key, double cell_size) {
  return {(static_cast<double>(key.first) + 0.5) * cell_size,
          (static_cast<double>(key.second) + 0.5) * cell_size};
}

BauGrid BauGrid::from_raster(const Raster& r, double cell_size) {
  BauGrid g;
  g.cell_size = cell_size;
  for (const auto& c : r.valid_centres()) {
    g.keys.push_back(bau_key(c, cell_size));
    g.centroids.push_back(bau_centroid(g.keys.back(), cell_size));
  }
  return g;
}

BauGrid BauGrid::covering(const BBox& bbox, double cell_size) {
  BauGrid g;
  g.cell_size = cell_size;
  const auto lo = bau_key(bbox.lo, cell_size);
  const auto hi = bau_key(bbox.hi, cell_size);
  for (auto row = lo.second; row <= hi.second; ++row) {
    for (auto col = lo.first; col <= hi.first; ++col) {
      g.keys.emplace_back(col, row);
      g.centroids.push_back(bau_centroid(g.keys.back(), cell_size));
    }
  }
  return g;
}

Eigen::SparseMatrix<double> incidence_matrix(std::span<const SurveyRecord> records,
                                             double cell_size, std::vector<BauKey>* bau_keys) {
  std::map<BauKey, std::size_t> index;
  std::vector<BauKey> keys;
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto key = bau_key(records[i].loc, cell_size);
    auto [it, inserted] = index.try_emplace(key, keys.size());
    if (inserted) keys.push_back(key);
    trip.emplace_back(static_cast<int>(i), static_cast<int>(it->second), 1.0);
  }
  Eigen::SparseMatrix<double> cz(static_cast<Eigen::Index>(records.size()),
                                 static_cast<Eigen::Index>(keys.size()));
  cz.setFromTriplets(trip.begin(), trip.end());
  if (bau_keys) *bau_keys = std::move(keys);
  return cz;
}

void FrkSpec::validate() const {
  if (nres < 1 || regular < 1) throw ValidationError("frk: nres and regular must be >= 1");
  if (!(scale_aperture > 0.0)) throw ValidationError("frk: scale_aperture must be > 0");
  if (!(bau_cell_size > 0.0)) throw ValidationError("frk: bau_cell_size must be > 0");
  if (n_mc < 1) throw ValidationError("frk: n_mc must be >= 1");
  if (response == Response::Gaussian && !(gaussian_noise_var > 0.0))
    throw ValidationError("frk: gaussian_noise_var must be > 0");
}

// ---------------------------------------------------------------------------
// Prior

namespace {

Eigen::MatrixXd layer_laplacian(std::size_t nx, std::size_t ny) {
  const auto n = static_cast<Eigen::Index>(nx * ny);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  auto link = [&](std::size_t a, std::size_t b) {
    l(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) -= 1.0;
    l(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) -= 1.0;
    l(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) += 1.0;
    l(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b)) += 1.0;
  };
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const std::size_t i = iy * nx + ix;
      if (ix + 1 < nx) link(i, i + 1);
      if (iy + 1 < ny) link(i, i + nx);
    }
  return l;
}

// log det of tau * (rho * L + (1 - rho) I) from the closed-form spectrum of
// the grid-graph Laplacian.
double layer_log_det(std::size_t nx, std::size_t ny, double tau, double rho) {
  double s = 0.0;
  for (std::size_t i = 0; i < nx; ++i) {
    const double ex = 2.0 - 2.0 * std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(nx));
    for (std::size_t j = 0; j < ny; ++j) {
      const double ey = 2.0 - 2.0 * std::cos(std::numbers::pi * static_cast<double>(j) / static_cast<double>(ny));
      s += std::log(tau * (rho * (ex + ey) + 1.0 - rho));
    }
  }
  return s;
}

}  // namespace

Eigen::MatrixXd coefficient_precision(const BasisSet& basis, const Hyper& h) {
  const auto r = static_cast<Eigen::Index>(basis.size());
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(r, r);
  for (std::size_t k = 0; k < basis.layers.size(); ++k) {
    const auto& layer = basis.layers[k];
    const auto n = static_cast<Eigen::Index>(layer.nx * layer.ny);
    const auto off = static_cast<Eigen::Index>(layer.offset);
    Eigen::MatrixXd block = h.rho[k] * layer_laplacian(layer.nx, layer.ny);
    block.diagonal().array() += 1.0 - h.rho[k];
    q.block(off, off, n, n) = h.tau[k] * block;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Laplace approximation

namespace {

// Data aggregated to BAUs plus the basis design at data-BAU centroids.
struct Problem {
  Eigen::MatrixXd phi;       // m x r at data BAU centroids
  std::vector<BauKey> keys;  // m data BAUs
  // Binomial: totals per BAU; Gaussian: per-BAU sum of y, observation count.
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  double log_const = 0.0;  // likelihood terms independent of zeta
};

Problem make_problem(std::span<const SurveyRecord> records, const BasisSet& basis,
                     const FrkSpec& spec) {
  Problem p;
  const auto cz = incidence_matrix(records, spec.bau_cell_size, &p.keys);
  const auto m = static_cast<Eigen::Index>(p.keys.size());
  std::vector<Location> cent;
  cent.reserve(p.keys.size());
  for (const auto& k : p.keys) cent.push_back(bau_centroid(k, spec.bau_cell_size));
  p.phi = basis_eval(basis, cent);
  p.a = Eigen::VectorXd::Zero(m);
  p.b = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < cz.outerSize(); ++i) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(cz, i); it; ++it) {
      const auto& rec = records[static_cast<std::size_t>(it.row())];
      if (spec.response == Response::Binomial) {
        p.a[it.col()] += static_cast<double>(rec.positive);
        p.b[it.col()] += static_cast<double>(rec.examined);
        p.log_const += std::lgamma(static_cast<double>(rec.examined) + 1.0) -
                       std::lgamma(static_cast<double>(rec.positive) + 1.0) -
                       std::lgamma(static_cast<double>(rec.examined - rec.positive) + 1.0);
      } else {
        const double y = rec.prevalence();
        p.a[it.col()] += y;
        p.b[it.col()] += 1.0;
        p.log_const += -0.5 * std::log(2.0 * std::numbers::pi * spec.gaussian_noise_var) -
                       0.5 * y * y / spec.gaussian_noise_var;
      }
    }
  }
  return p;
}

// Log-likelihood (without log_const) with first and negative second
// derivatives per BAU.
double likelihood(const Problem& p, const FrkSpec& spec, const Eigen::VectorXd& zeta,
                  Eigen::VectorXd* grad, Eigen::VectorXd* curv) {
  double ll = 0.0;
  const auto m = zeta.size();
  if (grad) grad->resize(m);
  if (curv) curv->resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double z = zeta[j];
    if (spec.response == Response::Binomial) {
      // H z - N log(1 + e^z), computed stably.
      const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      ll += p.a[j] * z - p.b[j] * softplus;
      const double pr = inv_logit(z);
      if (grad) (*grad)[j] = p.a[j] - p.b[j] * pr;
      if (curv) (*curv)[j] = p.b[j] * pr * (1.0 - pr);
    } else {
      // sum_i -(y_i - z)^2 / (2 s2) = (z * sum y - n z^2 / 2) / s2 + const
      const double s2 = spec.gaussian_noise_var;
      ll += (z * p.a[j] - 0.5 * p.b[j] * z * z) / s2;
      if (grad) (*grad)[j] = (p.a[j] - p.b[j] * z) / s2;
      if (curv) (*curv)[j] = p.b[j] / s2;
    }
  }
  return ll;
}

double prior_log_det(const BasisSet& basis, const Hyper& h) {
  double s = 0.0;
  for (std::size_t k = 0; k < basis.layers.size(); ++k)
    s += layer_log_det(basis.layers[k].nx, basis.layers[k].ny, h.tau[k], h.rho[k]);
  return s;
}

double laplace_impl(const Problem& p, const BasisSet& basis, const FrkSpec& spec, const Hyper& h,
                    LaplaceState& st, const LaplaceState* warm) {
  const auto r = static_cast<Eigen::Index>(basis.size());
  const auto m = static_cast<Eigen::Index>(p.keys.size());
  const bool fine = spec.fine_scale;
  const double s2 = h.sigma2_xi;
  const Eigen::MatrixXd q = coefficient_precision(basis, h);

  st.eta = (warm && warm->eta.size() == r) ? warm->eta : Eigen::VectorXd::Zero(r);
  st.xi = (fine && warm && warm->xi.size() == m) ? warm->xi : Eigen::VectorXd::Zero(fine ? m : 0);

  auto zeta_of = [&](const Eigen::VectorXd& eta, const Eigen::VectorXd& xi) {
    Eigen::VectorXd z = p.phi * eta;
    z.array() += h.beta0;
    if (fine) z += xi;
    return z;
  };
  auto objective = [&](const Eigen::VectorXd& eta, const Eigen::VectorXd& xi) {
    double v = likelihood(p, spec, zeta_of(eta, xi), nullptr, nullptr) - 0.5 * eta.dot(q * eta);
    if (fine) v -= 0.5 * xi.squaredNorm() / s2;
    return v;
  };

  Eigen::VectorXd g, w;
  double obj = objective(st.eta, st.xi);
  Eigen::LLT<Eigen::MatrixXd> schur_llt;
  for (int it = 0;; ++it) {
    const Eigen::VectorXd zeta = zeta_of(st.eta, st.xi);
    likelihood(p, spec, zeta, &g, &w);
    const Eigen::VectorXd g_eta = p.phi.transpose() * g - q * st.eta;
    Eigen::VectorXd g_xi;
    if (fine) g_xi = g - st.xi / s2;
    const double gnorm = std::max(g_eta.lpNorm<Eigen::Infinity>(),
                                  fine ? g_xi.lpNorm<Eigen::Infinity>() : 0.0);

    // Blocks of the negative Hessian at the current point.
    Eigen::VectorXd d_xi, w_eff = w;
    if (fine) {
      d_xi = w.array() + 1.0 / s2;
      w_eff = w.array() / (1.0 + w.array() * s2);
    }
    st.schur = q + p.phi.transpose() * w_eff.asDiagonal() * p.phi;
    schur_llt.compute(st.schur);
    if (schur_llt.info() != Eigen::Success) throw NumericalError("frk: Laplace Hessian not positive definite");

    if (gnorm < 1e-8) {
      st.newton_iterations = it;
      if (fine) {
        st.h_eta_xi = p.phi.transpose() * w.asDiagonal();
        st.h_xi_diag = d_xi;
      } else {
        st.h_eta_xi.resize(r, 0);
        st.h_xi_diag.resize(0);
      }
      break;
    }
    if (it >= 100) {
      std::ostringstream msg;
      msg << "frk: inner Newton did not converge in 100 iterations (gradient norm " << gnorm << ")";
      throw FitError(msg.str());
    }

    Eigen::VectorXd step_eta, step_xi;
    if (fine) {
      const Eigen::VectorXd rhs = g_eta - p.phi.transpose() * (w.cwiseProduct(g_xi.cwiseQuotient(d_xi)));
      step_eta = schur_llt.solve(rhs);
      step_xi = (g_xi - w.cwiseProduct(p.phi * step_eta)).cwiseQuotient(d_xi);
    } else {
      step_eta = schur_llt.solve(g_eta);
    }
    double t = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 50; ++ls) {
      const Eigen::VectorXd eta_new = st.eta + t * step_eta;
      const Eigen::VectorXd xi_new = fine ? Eigen::VectorXd(st.xi + t * step_xi) : st.xi;
      const double cand = objective(eta_new, xi_new);
      if (std::isfinite(cand) && cand >= obj - 1e-12 * std::abs(obj)) {
        st.eta = eta_new;
        st.xi = xi_new;
        obj = cand;
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) {
      std::ostringstream msg;
      msg << "frk: inner Newton line search failed (gradient norm " << gnorm << ")";
      throw FitError(msg.str());
    }
  }

  // log p(y|x*) + log p(x*) - log N(x*; x*, H^{-1}), the 2 pi terms cancel.
  const auto& l = schur_llt.matrixLLT();
  double logdet_h = 2.0 * l.diagonal().array().log().sum();
  double value = obj + p.log_const + 0.5 * prior_log_det(basis, h);
  if (fine) {
    logdet_h += st.h_xi_diag.array().log().sum();
    value -= 0.5 * static_cast<double>(m) * std::log(s2);
  }
  value -= 0.5 * logdet_h;
  st.log_marginal = value;
  return value;
}

struct HyperLayout {
  std::size_t nres;
  bool fine;
  std::size_t size() const { return 1 + 2 * nres + (fine ? 1 : 0); }

  Eigen::VectorXd pack(const Hyper& h) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
    v[0] = h.beta0;
    for (std::size_t k = 0; k < nres; ++k) {
      v[static_cast<Eigen::Index>(1 + 2 * k)] = std::log(h.tau[k]);
      v[static_cast<Eigen::Index>(2 + 2 * k)] = logit(h.rho[k]);
    }
    if (fine) v[static_cast<Eigen::Index>(size() - 1)] = std::log(h.sigma2_xi);
    return v;
  }

  Hyper unpack(const Eigen::VectorXd& v) const {
    Hyper h;
    h.beta0 = v[0];
    for (std::size_t k = 0; k < nres; ++k) {
      h.tau.push_back(std::exp(v[static_cast<Eigen::Index>(1 + 2 * k)]));
      h.rho.push_back(inv_logit(v[static_cast<Eigen::Index>(2 + 2 * k)]));
    }
    h.sigma2_xi = fine ? std::exp(v[static_cast<Eigen::Index>(size() - 1)]) : 0.0;
    return h;
  }

  std::pair<Eigen::VectorXd, Eigen::VectorXd> bounds() const {
    Eigen::VectorXd lo(static_cast<Eigen::Index>(size())), hi(static_cast<Eigen::Index>(size()));
    lo[0] = -20.0;
    hi[0] = 20.0;
    for (std::size_t k = 0; k < nres; ++k) {
      lo[static_cast<Eigen::Index>(1 + 2 * k)] = -10.0;
      hi[static_cast<Eigen::Index>(1 + 2 * k)] = 12.0;
      lo[static_cast<Eigen::Index>(2 + 2 * k)] = -7.0;
      hi[static_cast<Eigen::Index>(2 + 2 * k)] = 7.0;
    }
    if (fine) {
      lo[static_cast<Eigen::Index>(size() - 1)] = -12.0;
      hi[static_cast<Eigen::Index>(size() - 1)] = 3.0;
    }
    return {lo, hi};
  }
};

FrkFit assemble(const Problem& p, const FrkSpec& spec, const Hyper& h, LaplaceState st) {
  FrkFit out;
  out.hyper = h;
  out.laplace = std::move(st);
  out.bau_cell_size = spec.bau_cell_size;
  out.data_baus = p.keys;
  for (std::size_t j = 0; j < p.keys.size(); ++j) out.data_index.emplace(p.keys[j], j);
  out.response = spec.response;
  out.fine_scale = spec.fine_scale;
  return out;
}

}  // namespace

double laplace_log_marginal(std::span<const SurveyRecord> records, const BasisSet& basis,
                            const FrkSpec& spec, const Hyper& h, LaplaceState* state,
                            const LaplaceState* warm) {
  spec.validate();
  const Problem p = make_problem(records, basis, spec);
  LaplaceState st;
  const double v = laplace_impl(p, basis, spec, h, st, warm);
  if (state) *state = std::move(st);
  return v;
}

FrkFit fit(std::span<const SurveyRecord> records, const BasisSet& basis, const FrkSpec& spec) {
  spec.validate();
  if (records.empty()) throw ValidationError("frk fit needs at least one record");
  const Problem p = make_problem(records, basis, spec);
  const HyperLayout layout{basis.layers.size(), spec.fine_scale};

  Hyper init;
  double pos = 0.0, tot = 0.0;
  for (const auto& r : records) {
    pos += static_cast<double>(r.positive);
    tot += static_cast<double>(r.examined);
  }
  init.beta0 = spec.response == Response::Binomial ? logit((pos + 0.5) / (tot + 1.0)) : pos / tot;
  init.tau.assign(layout.nres, 1.0);
  init.rho.assign(layout.nres, 0.5);
  init.sigma2_xi = spec.response == Response::Binomial ? 0.1 : 0.01;

  auto [lo, hi] = layout.bounds();
  LaplaceState warm;
  bool have_warm = false;
  const optim::ValueFn neg_lm = [&](const Eigen::VectorXd& v) {
    LaplaceState st;
    try {
      const double lm = laplace_impl(p, basis, spec, layout.unpack(v), st, have_warm ? &warm : nullptr);
      if (!have_warm) {
        warm = st;
        have_warm = true;
      }
      return -lm;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const auto objective = optim::with_numeric_gradient(neg_lm, lo, hi, 1e-5);
  optim::Options opts;
  opts.rel_f_tol = 1e-6 * 1e-3;
  opts.grad_tol = 1e-4;
  opts.max_iterations = 200;
  optim::Result res = optim::minimize_bfgs(objective, layout.pack(init), lo, hi, opts);

  const Hyper best = layout.unpack(res.x);
  LaplaceState st;
  laplace_impl(p, basis, spec, best, st, &warm);
  FrkFit out = assemble(p, spec, best, std::move(st));
  out.outer_iterations = res.iterations;
  out.converged = res.converged;
  return out;
}

FrkFit refit_at(std::span<const SurveyRecord> records, const BasisSet& basis, const FrkSpec& spec,
                const Hyper& hyper) {
  spec.validate();
  const Problem p = make_problem(records, basis, spec);
  LaplaceState st;
  laplace_impl(p, basis, spec, hyper, st, nullptr);
  FrkFit out = assemble(p, spec, hyper, std::move(st));
  out.converged = true;
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo prediction

namespace {

std::vector<BauPrediction> predict_cells(const FrkFit& fit, const BasisSet& basis,
                                         std::span<const Location> centroids,
                                         std::span<const std::ptrdiff_t> data_idx,
                                         const PredictOptions& opt) {
  if (opt.n_mc < 1) throw ValidationError("frk: n_mc must be >= 1");
  const auto ncell = static_cast<Eigen::Index>(centroids.size());
  const Eigen::MatrixXd phi = basis_eval(basis, centroids);
  const auto& la = fit.laplace;
  const bool binomial = fit.response == Response::Binomial;
  auto link = [binomial](double z) { return binomial ? inv_logit(z) : z; };

  std::vector<BauPrediction> out(static_cast<std::size_t>(ncell));
  if (opt.zero_variance) {
    const Eigen::VectorXd z = phi * la.eta;
    for (Eigen::Index c = 0; c < ncell; ++c) {
      const auto d = data_idx[static_cast<std::size_t>(c)];
      const double xi = (fit.fine_scale && d >= 0) ? la.xi[d] : 0.0;
      out[static_cast<std::size_t>(c)].mean = link(fit.beta0() + z[c] + xi);
    }
    return out;
  }

  const auto r = static_cast<Eigen::Index>(basis.size());
  const Eigen::LLT<Eigen::MatrixXd> schur(la.schur);
  const Eigen::MatrixXd lt = schur.matrixU();  // S = U^T U, eta = mode + U^{-1} z
  const double sd_xi = std::sqrt(fit.sigma2_xi());

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(ncell);
  Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(ncell);
  constexpr int kBlock = 400;
  for (int begin = 0; begin < opt.n_mc; begin += kBlock) {
    const int len = std::min(kBlock, opt.n_mc - begin);
    Eigen::MatrixXd p_block(ncell, len);
    parallel::parallel_for(static_cast<std::size_t>(len), opt.threads, [&](std::size_t s) {
      const auto sample = static_cast<std::uint64_t>(begin) + s;
      std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                        static_cast<std::uint32_t>(sample), static_cast<std::uint32_t>(sample >> 32)};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> normal;
      Eigen::VectorXd z(r);
      for (Eigen::Index i = 0; i < r; ++i) z[i] = normal(rng);
      const Eigen::VectorXd deta = lt.triangularView<Eigen::Upper>().solve(z);
      const Eigen::VectorXd eta = la.eta + deta;
      Eigen::VectorXd xi_data;
      if (fit.fine_scale) {
        // xi | eta ~ N(xi* - D^{-1} H_xi_eta (eta - eta*), D^{-1})
        xi_data = la.xi - (la.h_eta_xi.transpose() * deta).cwiseQuotient(la.h_xi_diag);
        for (Eigen::Index j = 0; j < xi_data.size(); ++j)
          xi_data[j] += normal(rng) / std::sqrt(la.h_xi_diag[j]);
      }
      const Eigen::VectorXd zc = phi * eta;
      for (Eigen::Index c = 0; c < ncell; ++c) {
        double xi = 0.0;
        if (fit.fine_scale) {
          const auto d = data_idx[static_cast<std::size_t>(c)];
          xi = d >= 0 ? xi_data[d] : sd_xi * normal(rng);
        }
        p_block(c, static_cast<Eigen::Index>(s)) = link(fit.beta0() + zc[c] + xi);
      }
    });
    for (Eigen::Index s = 0; s < len; ++s) {
      sum += p_block.col(s);
      sumsq += p_block.col(s).cwiseAbs2();
    }
  }
  const double n = static_cast<double>(opt.n_mc);
  for (Eigen::Index c = 0; c < ncell; ++c) {
    const double mean = sum[c] / n;
    const double var = opt.n_mc > 1 ? std::max(0.0, (sumsq[c] - n * mean * mean) / (n - 1.0)) : 0.0;
    out[static_cast<std::size_t>(c)] = {mean, std::sqrt(var)};
  }
  return out;
}

}  // namespace

std::vector<BauPrediction> predict(const FrkFit& fit, const BasisSet& basis, const BauGrid& bau,
                                   const PredictOptions& options) {
  std::vector<std::ptrdiff_t> idx(bau.size(), -1);
  std::vector<Location> centroids(bau.size());
  for (std::size_t c = 0; c < bau.size(); ++c) {
    // Cells are re-keyed on the fit's lattice so the fine-scale effect lines up.
    centroids[c] = bau.centroids[c];
    const auto key = bau_key(bau.centroids[c], fit.bau_cell_size);
    if (auto it = fit.data_index.find(key); it != fit.data_index.end())
      idx[c] = static_cast<std::ptrdiff_t>(it->second);
  }
  return predict_cells(fit, basis, centroids, idx, options);
}

std::vector<BauPrediction> predict_points(const FrkFit& fit, const BasisSet& basis,
                                          std::span<const Location> pts,
                                          const PredictOptions& options) {
  BauGrid g;
  g.cell_size = fit.bau_cell_size;
  for (const auto& p : pts) {
    g.keys.push_back(bau_key(p, fit.bau_cell_size));
    g.centroids.push_back(bau_centroid(g.keys.back(), fit.bau_cell_size));
  }
  return predict(fit, basis, g, options);
}

}  // namespace geoprev::frk
