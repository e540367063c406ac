#include "geoprev/gpcore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "geoprev/errors.hpp"
#include "geoprev/optim.hpp"

namespace geoprev::gp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kThetaLower = 1e-10;
constexpr double kThetaUpper = 1e10;

CovarianceSpec with_theta(const CovarianceSpec& spec, const Theta& theta) {
  CovarianceSpec s = spec;
  s.variance = theta.sigma2;
  s.range = theta.range;
  return s;
}

double nugget(const Theta& theta) { return theta.tau2 + 1e-8 * theta.sigma2; }

Eigen::MatrixXd psi_from_distances(const Eigen::MatrixXd& dist, const CovarianceSpec& cs,
                                   const Theta& theta) {
  const auto n = dist.rows();
  Eigen::MatrixXd psi(n, n);
  const double diag = theta.sigma2 + nugget(theta);
  for (Eigen::Index j = 0; j < n; ++j) {
    psi(j, j) = diag;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = cov_value(cs, dist(i, j));
      psi(i, j) = v;
      psi(j, i) = v;
    }
  }
  return psi;
}

Eigen::MatrixXd psi_matrix(std::span<const Location> pts, const CovarianceSpec& cs,
                           const Theta& theta) {
  return psi_from_distances(distance_matrix(pts, cs.metric), cs, theta);
}

// Exact NLL on a precomputed distance matrix; gradient in log theta.
double nll_exact(const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Theta& theta,
                 const Eigen::MatrixXd& dist, const CovarianceSpec& spec, Eigen::Vector3d* grad) {
  const CovarianceSpec cs = with_theta(spec, theta);
  const Eigen::MatrixXd psi = psi_from_distances(dist, cs, theta);
  const auto llt = checked_cholesky(psi, "gp_nll");
  const Eigen::VectorXd r = y - f;
  const Eigen::VectorXd alpha = llt.solve(r);
  const Eigen::MatrixXd& l = llt.matrixLLT();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += std::log(l(i, i));
  const auto n = static_cast<double>(y.size());
  const double nll = 0.5 * r.dot(alpha) + logdet + 0.5 * n * kLog2Pi;

  if (grad) {
    // Psi^{-1} = L^{-T} L^{-1}, lower triangle only.
    const auto m = psi.rows();
    Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(m, m);
    llt.matrixL().solveInPlace(linv);
    Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(m, m);
    inv.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose());
    // W = Psi^{-1} - alpha alpha^T; d Psi / d log sigma2 is Psi minus the tau^2 part of the diagonal.
    double g_sigma = 0.0, g_range = 0.0, trace_w = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double wjj = inv(j, j) - alpha[j] * alpha[j];
      trace_w += wjj;
      g_sigma += wjj * (theta.sigma2 * (1.0 + 1e-8));
      for (Eigen::Index i = j + 1; i < m; ++i) {
        const double wij = inv(i, j) - alpha[i] * alpha[j];
        g_sigma += 2.0 * wij * psi(i, j);
        g_range += 2.0 * wij * cov_dlog_range(cs, dist(i, j));
      }
    }
    *grad = 0.5 * Eigen::Vector3d(g_sigma, g_range, trace_w * theta.tau2);
  }
  return nll;
}

Eigen::VectorXd to_log(const Theta& t) {
  return Eigen::Vector3d(std::log(t.sigma2), std::log(t.range), std::log(t.tau2));
}

Theta from_log(const Eigen::VectorXd& v) {
  return {std::exp(v[0]), std::exp(v[1]), std::exp(v[2])};
}

std::string describe(const Theta& t) {
  std::ostringstream s;
  s << "(sigma2=" << t.sigma2 << ", range=" << t.range << ", tau2=" << t.tau2 << ")";
  return s.str();
}

// Sparse Vecchia factor: Psi^{-1} ~ B^T D^{-1} B with B unit lower triangular.
struct VecchiaFactor {
  const std::vector<std::vector<std::int32_t>>* nb = nullptr;
  std::vector<Eigen::VectorXd> a;
  Eigen::VectorXd d;

  VecchiaFactor(std::span<const Location> pts, const CovarianceSpec& cs, const Theta& theta,
                const std::vector<std::vector<std::int32_t>>& neighbours)
      : nb(&neighbours), a(pts.size()), d(static_cast<Eigen::Index>(pts.size())) {
    const double diag = theta.sigma2 + nugget(theta);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto& ni = neighbours[i];
      const auto m = static_cast<Eigen::Index>(ni.size());
      if (m == 0) {
        d[static_cast<Eigen::Index>(i)] = diag;
        continue;
      }
      Eigen::MatrixXd c(m, m);
      Eigen::VectorXd k(m);
      for (Eigen::Index p = 0; p < m; ++p) {
        const auto& pp = pts[static_cast<std::size_t>(ni[static_cast<std::size_t>(p)])];
        k[p] = cov_value(cs, distance(pts[i], pp, cs.metric));
        c(p, p) = diag;
        for (Eigen::Index q = p + 1; q < m; ++q) {
          const double v = cov_value(
              cs, distance(pp, pts[static_cast<std::size_t>(ni[static_cast<std::size_t>(q)])], cs.metric));
          c(p, q) = v;
          c(q, p) = v;
        }
      }
      const auto llt = checked_cholesky(c, "Vecchia conditional");
      a[i] = llt.solve(k);
      d[static_cast<Eigen::Index>(i)] = diag - k.dot(a[i]);
      if (!(d[static_cast<Eigen::Index>(i)] > 0.0)) {
        throw NumericalError("Vecchia conditional variance is not positive");
      }
    }
  }

  Eigen::VectorXd apply_b(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = v;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto& ni = (*nb)[i];
      for (std::size_t p = 0; p < ni.size(); ++p)
        out[static_cast<Eigen::Index>(i)] -= a[i][static_cast<Eigen::Index>(p)] * v[ni[p]];
    }
    return out;
  }

  Eigen::VectorXd apply_bt(const Eigen::VectorXd& u) const {
    Eigen::VectorXd out = u;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto& ni = (*nb)[i];
      for (std::size_t p = 0; p < ni.size(); ++p)
        out[ni[p]] -= a[i][static_cast<Eigen::Index>(p)] * u[static_cast<Eigen::Index>(i)];
    }
    return out;
  }

  Eigen::VectorXd precision_apply(const Eigen::VectorXd& v) const {
    return apply_bt(apply_b(v).cwiseQuotient(d));
  }

  double nll(const Eigen::VectorXd& r) const {
    const Eigen::VectorXd e = apply_b(r);
    double s = 0.0;
    for (Eigen::Index i = 0; i < e.size(); ++i) s += std::log(d[i]) + e[i] * e[i] / d[i];
    return 0.5 * s + 0.5 * static_cast<double>(e.size()) * kLog2Pi;
  }
};

// Applies the (approximate) inverse of Psi at fixed theta.
class PsiSolver {
 public:
  PsiSolver(std::span<const Location> pts, const CovarianceSpec& cs, const Theta& theta,
            const std::vector<std::vector<std::int32_t>>* neighbours) {
    if (neighbours) {
      vecchia_.emplace(pts, cs, theta, *neighbours);
    } else {
      llt_.emplace(checked_cholesky(psi_matrix(pts, cs, theta), "gp covariance"));
    }
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const {
    if (llt_) return llt_->solve(b);
    Eigen::MatrixXd out(b.rows(), b.cols());
    for (Eigen::Index c = 0; c < b.cols(); ++c) out.col(c) = vecchia_->precision_apply(b.col(c));
    return out;
  }

 private:
  std::optional<Eigen::LLT<Eigen::MatrixXd>> llt_;
  std::optional<VecchiaFactor> vecchia_;
};

double nll_any(const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Theta& theta,
               std::span<const Location> pts, const CovarianceSpec& spec,
               const std::vector<std::vector<std::int32_t>>* neighbours, const Eigen::MatrixXd& dist) {
  if (neighbours) return gp_nll_vecchia(y, f, theta, pts, spec, *neighbours);
  return nll_exact(y, f, theta, dist, spec, nullptr);
}

Theta initial_theta(const Eigen::VectorXd& y, std::span<const Location> pts,
                    const GpModelSpec& spec) {
  if (!spec.data_init) return {spec.cov.variance, spec.cov.range, spec.noise_variance};
  const double mean = y.mean();
  const double var = (y.array() - mean).square().sum() / std::max<double>(1.0, static_cast<double>(y.size() - 1));
  const double half = std::max(0.5 * var, 1e-6);
  // Mean pairwise distance over a deterministic prefix of the data.
  const std::size_t m = std::min<std::size_t>(pts.size(), 300);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j, ++count) sum += distance(pts[i], pts[j], spec.cov.metric);
  const double range = count > 0 && sum > 0.0 ? sum / static_cast<double>(count) / 3.0 : 1.0;
  return {half, range, half};
}

struct StepResult {
  Eigen::VectorXd delta;  // change of F at the training rows
  Booster::Stage stage;
};

// One boosting update: tree structure from the functional gradient, leaf
// values from the generalized least-squares step scaled by the learning rate.
StepResult boosting_step(const Eigen::VectorXd& resid, const PsiSolver& solver,
                         const Eigen::MatrixXd& x, const BoostingSpec& b, std::mt19937_64& rng) {
  const auto n = resid.size();
  StepResult out;
  std::vector<std::int32_t> leaf_of(static_cast<std::size_t>(n), 0);
  if (x.cols() == 0) {
    out.stage.tree.nodes.emplace_back();
    out.stage.tree.nodes.back().leaf = 0;
    out.stage.tree.leaves.emplace_back();
  } else {
    const Eigen::VectorXd g = solver.solve(resid);
    std::vector<double> target(g.data(), g.data() + n);
    std::vector<std::int32_t> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    cart::TreeParams params;
    params.max_depth = static_cast<std::size_t>(std::max(0, b.max_depth));
    params.max_leaves = static_cast<std::size_t>(std::max(0, b.num_leaves));
    params.min_leaf_size = static_cast<std::size_t>(std::max(1, b.min_data_in_leaf));
    params.min_split_size = 2 * params.min_leaf_size;
    out.stage.tree = cart::grow_tree(x, target, rows, params, rng);
    for (std::size_t l = 0; l < out.stage.tree.leaves.size(); ++l) {
      for (auto r : out.stage.tree.leaves[l]) leaf_of[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(l);
      out.stage.tree.leaves[l].clear();
    }
  }
  const auto nl = static_cast<Eigen::Index>(out.stage.tree.leaves.size());
  Eigen::MatrixXd ind = Eigen::MatrixXd::Zero(n, nl);
  for (Eigen::Index i = 0; i < n; ++i) ind(i, leaf_of[static_cast<std::size_t>(i)]) = 1.0;
  const Eigen::MatrixXd w = solver.solve(ind);
  Eigen::MatrixXd gram = ind.transpose() * w;
  gram.diagonal().array() += 1e-12 * gram.diagonal().array().abs().maxCoeff();
  const Eigen::VectorXd c = gram.ldlt().solve(w.transpose() * resid) * b.learning_rate;
  out.stage.leaf_value.assign(c.data(), c.data() + c.size());
  out.delta = ind * c;
  return out;
}

GpFit fit_impl(std::span<const SurveyRecord> records, const Eigen::MatrixXd& x,
               const GpModelSpec& spec) {
  spec.validate();
  if (records.size() < 2) throw ValidationError("gp fit needs at least 2 records");
  if (x.cols() > 0 && x.rows() != static_cast<Eigen::Index>(records.size())) {
    throw ValidationError("covariate rows must match the number of records");
  }
  GpFit out;
  out.train_pts = locations_of(records);
  out.y = prevalences_of(records);
  out.covariates = x;
  out.vecchia = spec.vecchia;
  const auto n = out.y.size();
  std::span<const Location> pts(out.train_pts);

  std::optional<std::vector<std::vector<std::int32_t>>> nb;
  if (spec.vecchia) nb = vecchia_neighbours(pts, spec.vecchia->m_fit, spec.cov.metric);
  const auto* nbp = nb ? &*nb : nullptr;
  const Eigen::MatrixXd dist = nbp ? Eigen::MatrixXd() : distance_matrix(pts, spec.cov.metric);

  out.booster.base = out.y.mean();
  Eigen::VectorXd f = Eigen::VectorXd::Constant(n, out.booster.base);
  Theta theta = initial_theta(out.y, pts, spec);

  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(3, std::log(kThetaLower));
  const Eigen::VectorXd upper = Eigen::VectorXd::Constant(3, std::log(kThetaUpper));
  optim::Options opts;
  opts.grad_tol = 1e-6;
  opts.max_iterations = 100;

  try {
    out.nll_init = nll_any(out.y, f, theta, pts, spec.cov, nbp, dist);
  } catch (const NumericalError& e) {
    throw FitError(std::string("gp fit: initial likelihood failed: ") + e.what() +
                   "; last valid theta " + describe(theta));
  }
  if (!std::isfinite(out.nll_init)) {
    throw FitError("gp fit: non-finite initial likelihood at theta " + describe(theta));
  }

  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  double prev = out.nll_init;
  for (int round = 0; round < spec.boosting.rounds; ++round) {
    auto objective = [&](const Eigen::VectorXd& lt, Eigen::VectorXd* grad) -> double {
      try {
        if (nbp) {
          const auto value = [&](const Eigen::VectorXd& v) {
            return gp_nll_vecchia(out.y, f, from_log(v), pts, spec.cov, *nbp);
          };
          const double v = value(lt);
          if (grad) *grad = optim::numeric_gradient(value, lt, 1e-5, lower, upper);
          return v;
        }
        Eigen::Vector3d g;
        const double v = nll_exact(out.y, f, from_log(lt), dist, spec.cov, grad ? &g : nullptr);
        if (grad) *grad = g;
        return v;
      } catch (const NumericalError&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    optim::Result res;
    try {
      res = optim::minimize_bfgs(objective, to_log(theta), lower, upper, opts);
    } catch (const FitError& e) {
      throw FitError(std::string("gp fit diverged: ") + e.what() + "; last valid theta " +
                     describe(theta));
    }
    if (!std::isfinite(res.f)) {
      throw FitError("gp fit diverged; last valid theta " + describe(theta));
    }
    theta = from_log(res.x);
    opts.initial_inverse_hessian = res.inverse_hessian;

    const CovarianceSpec cs = with_theta(spec.cov, theta);
    const PsiSolver solver(pts, cs, theta, nbp);
    const Eigen::VectorXd resid = out.y - f;
    StepResult step = boosting_step(resid, solver, x, spec.boosting, rng);
    f += step.delta;
    out.booster.stages.push_back(std::move(step.stage));

    const double cur = nll_any(out.y, f, theta, pts, spec.cov, nbp, dist);
    out.nll_trace.push_back(cur);
    out.rounds_run = round + 1;
    if (spec.early_stop && prev - cur < 1e-8) break;
    prev = cur;
  }

  out.theta = theta;
  out.cov = with_theta(spec.cov, theta);
  out.intercept = out.booster.base;
  if (x.cols() == 0) {
    for (const auto& s : out.booster.stages) out.intercept += s.leaf_value.front();
  }
  out.refresh_cache();
  return out;
}

}  // namespace

void GpModelSpec::validate() const {
  if (cov.family == CovFamily::Matern && !cov.smoothness)
    throw ValidationError("gp: Matern covariance needs a smoothness");
  if (!data_init) cov.validate();
  if (!(noise_variance >= 0.0)) throw ValidationError("gp: noise_variance must be >= 0");
  if (vecchia && (vecchia->m_fit < 1 || vecchia->m_predict < 1))
    throw ValidationError("gp: vecchia m_fit and m_predict must be >= 1");
  if (boosting.rounds < 1) throw ValidationError("gp: boosting.rounds must be >= 1");
  if (!(boosting.learning_rate > 0.0 && boosting.learning_rate <= 1.0))
    throw ValidationError("gp: boosting.learning_rate must lie in (0, 1]");
  if (boosting.num_leaves < 1 || boosting.max_depth < 1 || boosting.min_data_in_leaf < 1)
    throw ValidationError("gp: tree limits must be positive");
}

double gp_nll(const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Theta& theta,
              std::span<const Location> pts, const CovarianceSpec& spec, Eigen::Vector3d* grad) {
  return nll_exact(y, f, theta, distance_matrix(pts, spec.metric), spec, grad);
}

std::vector<std::vector<std::int32_t>> vecchia_neighbours(std::span<const Location> pts, int m,
                                                          DistanceMetric metric) {
  if (m < 1) throw ValidationError("vecchia neighbour count must be >= 1");
  std::vector<std::vector<std::int32_t>> out(pts.size());
  std::vector<std::pair<double, std::int32_t>> cand;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    cand.clear();
    for (std::size_t j = 0; j < i; ++j)
      cand.emplace_back(distance(pts[i], pts[j], metric), static_cast<std::int32_t>(j));
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(m), cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    auto& ni = out[i];
    for (std::size_t p = 0; p < k; ++p) ni.push_back(cand[p].second);
    std::sort(ni.begin(), ni.end());
  }
  return out;
}

double gp_nll_vecchia(const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Theta& theta,
                      std::span<const Location> pts, const CovarianceSpec& spec, int m_fit) {
  const auto nb = vecchia_neighbours(pts, m_fit, spec.metric);
  return gp_nll_vecchia(y, f, theta, pts, spec, nb);
}

double gp_nll_vecchia(const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Theta& theta,
                      std::span<const Location> pts, const CovarianceSpec& spec,
                      const std::vector<std::vector<std::int32_t>>& neighbours) {
  const VecchiaFactor vf(pts, with_theta(spec, theta), theta, neighbours);
  return vf.nll(y - f);
}

double Booster::eval(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double v = base;
  for (const auto& s : stages) {
    const auto leaf = s.tree.leaf_of([&](std::int32_t j) { return x[j]; });
    v += s.leaf_value[static_cast<std::size_t>(leaf)];
  }
  return v;
}

Eigen::VectorXd Booster::eval(const Eigen::MatrixXd& x, Eigen::Index n) const {
  Eigen::VectorXd out(n);
  if (x.cols() == 0) {
    double c = base;
    for (const auto& s : stages) c += s.leaf_value.front();
    out.setConstant(c);
    return out;
  }
  for (Eigen::Index i = 0; i < n; ++i) out[i] = eval(x.row(i));
  return out;
}

void GpFit::refresh_cache() {
  if (vecchia) {
    chol.reset();
    alpha.resize(0);
    return;
  }
  const Eigen::VectorXd f = booster.eval(covariates, y.size());
  auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(
      checked_cholesky(psi_matrix(train_pts, cov, theta), "gp prediction cache"));
  alpha = llt->solve(y - f);
  chol = std::move(llt);
}

GpFit fit(std::span<const SurveyRecord> records, const GpModelSpec& spec) {
  return fit_impl(records, Eigen::MatrixXd(static_cast<Eigen::Index>(records.size()), 0), spec);
}

GpFit fit(std::span<const SurveyRecord> records, const Eigen::MatrixXd& covariates,
          const GpModelSpec& spec) {
  return fit_impl(records, covariates, spec);
}

std::vector<GpPrediction> predict(const GpFit& fit, std::span<const Location> pts) {
  return predict(fit, pts, Eigen::MatrixXd(static_cast<Eigen::Index>(pts.size()), 0));
}

std::vector<GpPrediction> predict(const GpFit& fit, std::span<const Location> pts,
                                  const Eigen::MatrixXd& covariates) {
  if (covariates.cols() != fit.covariates.cols()) {
    throw ValidationError("gp predict: covariate columns differ from the fit");
  }
  const Eigen::VectorXd f_new = fit.booster.eval(covariates, static_cast<Eigen::Index>(pts.size()));
  const double prior_var = fit.theta.sigma2 + nugget(fit.theta);
  const double var_cap = fit.theta.sigma2 + fit.theta.tau2;
  std::vector<GpPrediction> out(pts.size());
  auto finish = [&](std::size_t i, double mean, double var) {
    out[i].raw_mean = mean;
    out[i].mean = std::clamp(mean, 0.0, 1.0);
    out[i].sd = std::sqrt(std::clamp(var, 0.0, var_cap));
  };

  if (!fit.vecchia) {
    if (!fit.chol) throw Error("gp predict: fit has no prediction cache");
    constexpr std::size_t kChunk = 512;
    for (std::size_t begin = 0; begin < pts.size(); begin += kChunk) {
      const std::size_t len = std::min(kChunk, pts.size() - begin);
      const Eigen::MatrixXd k = cov_cross(pts.subspan(begin, len), fit.train_pts, fit.cov);
      const Eigen::VectorXd mean = k * fit.alpha;
      const Eigen::MatrixXd v = fit.chol->matrixL().solve(k.transpose());
      for (std::size_t i = 0; i < len; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        finish(begin + i, f_new[static_cast<Eigen::Index>(begin + i)] + mean[ii],
               prior_var - v.col(ii).squaredNorm());
      }
    }
    return out;
  }

  // Vecchia prediction: condition on the m_predict nearest training points.
  const Eigen::VectorXd f_train = fit.booster.eval(fit.covariates, fit.y.size());
  const Eigen::VectorXd resid = fit.y - f_train;
  const std::size_t n = fit.train_pts.size();
  const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(fit.vecchia->m_predict), n);
  std::vector<std::pair<double, std::int32_t>> cand(n);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j)
      cand[j] = {distance(pts[i], fit.train_pts[j], fit.cov.metric), static_cast<std::int32_t>(j)};
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(m), cand.end());
    const auto mm = static_cast<Eigen::Index>(m);
    Eigen::MatrixXd c(mm, mm);
    Eigen::VectorXd k(mm), r(mm);
    for (Eigen::Index p = 0; p < mm; ++p) {
      const auto jp = static_cast<std::size_t>(cand[static_cast<std::size_t>(p)].second);
      k[p] = cov_value(fit.cov, cand[static_cast<std::size_t>(p)].first);
      r[p] = resid[static_cast<Eigen::Index>(jp)];
      c(p, p) = prior_var;
      for (Eigen::Index q = p + 1; q < mm; ++q) {
        const auto jq = static_cast<std::size_t>(cand[static_cast<std::size_t>(q)].second);
        const double v = cov_value(fit.cov, distance(fit.train_pts[jp], fit.train_pts[jq], fit.cov.metric));
        c(p, q) = v;
        c(q, p) = v;
      }
    }
    const auto llt = checked_cholesky(c, "Vecchia prediction");
    const Eigen::VectorXd w = llt.solve(k);
    finish(i, f_new[static_cast<Eigen::Index>(i)] + w.dot(r), prior_var - k.dot(w));
  }
  return out;
}

}  // namespace geoprev::gp
