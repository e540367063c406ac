#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "geoprev/frk.hpp"

namespace geoprev::testutil {

/// Closed-form Gaussian FRK: y = beta0 + C (Phi eta + xi) + e with
/// eta ~ N(0, Q^{-1}), xi ~ N(0, s2_xi I), e ~ N(0, s2 I). Built from scratch:
/// BAU numbering, design and covariance are all recomputed here.
struct FrkGaussianOracle {
  Eigen::MatrixXd a;  // n x (r + m) design for (eta, xi)
  Eigen::MatrixXd prior_cov;
  Eigen::MatrixXd prior_prec;
  Eigen::VectorXd y;
  double beta0 = 0.0;
  double noise = 0.0;
  std::size_t r = 0, m = 0;

  FrkGaussianOracle(std::span<const SurveyRecord> recs, const frk::BasisSet& basis, const frk::FrkSpec& spec,
                    const frk::Hyper& h) {
    beta0 = h.beta0;
    noise = spec.gaussian_noise_var;
    r = basis.size();
    std::map<std::pair<long long, long long>, std::size_t> idx;
    std::vector<std::size_t> cell(recs.size());
    std::vector<Location> cent;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const auto key = std::make_pair(static_cast<long long>(std::floor(recs[i].loc.lon / spec.bau_cell_size)),
                                      static_cast<long long>(std::floor(recs[i].loc.lat / spec.bau_cell_size)));
      auto [it, ins] = idx.try_emplace(key, cent.size());
      if (ins)
        cent.push_back({(key.first + 0.5) * spec.bau_cell_size, (key.second + 0.5) * spec.bau_cell_size});
      cell[i] = it->second;
    }
    m = spec.fine_scale ? cent.size() : 0;
    const auto n = static_cast<Eigen::Index>(recs.size());
    a = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(r + m));
    y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& c = cent[cell[i]];
      for (std::size_t l = 0; l < r; ++l) {
        const double dx = c.lon - basis.centres[l].lon, dy = c.lat - basis.centres[l].lat;
        a(i, static_cast<Eigen::Index>(l)) = std::exp(-(dx * dx + dy * dy) / (2.0 * basis.apertures[l] * basis.apertures[l]));
      }
      if (m) a(i, static_cast<Eigen::Index>(r + cell[i])) = 1.0;
      y[i] = recs[i].prevalence();
    }
    // Coefficient precision: tau_k (rho_k (D - W) + (1 - rho_k) I) on each layer's 4-neighbour grid.
    const auto dim = static_cast<Eigen::Index>(r + m);
    prior_prec = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t k = 0; k < basis.layers.size(); ++k) {
      const auto& L = basis.layers[k];
      auto id = [&](std::size_t ix, std::size_t iy) { return static_cast<Eigen::Index>(L.offset + iy * L.nx + ix); };
      for (std::size_t iy = 0; iy < L.ny; ++iy)
        for (std::size_t ix = 0; ix < L.nx; ++ix) {
          const auto me = id(ix, iy);
          prior_prec(me, me) += h.tau[k] * (1.0 - h.rho[k]);
          const std::pair<long, long> nbrs[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
          for (auto [ox, oy] : nbrs) {
            const long jx = static_cast<long>(ix) + ox, jy = static_cast<long>(iy) + oy;
            if (jx < 0 || jy < 0 || jx >= static_cast<long>(L.nx) || jy >= static_cast<long>(L.ny)) continue;
            prior_prec(me, me) += h.tau[k] * h.rho[k];
            prior_prec(me, id(static_cast<std::size_t>(jx), static_cast<std::size_t>(jy))) -= h.tau[k] * h.rho[k];
          }
        }
    }
    for (std::size_t j = 0; j < m; ++j) prior_prec(static_cast<Eigen::Index>(r + j), static_cast<Eigen::Index>(r + j)) = 1.0 / h.sigma2_xi;
    prior_cov = prior_prec.inverse();
  }

  double log_marginal() const {
    const auto n = y.size();
    Eigen::MatrixXd cov = a * prior_cov * a.transpose();
    cov.diagonal().array() += noise;
    const Eigen::VectorXd res = y.array() - beta0;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    return -0.5 * res.dot(ldlt.solve(res)) - 0.5 * ldlt.vectorD().array().log().sum() -
           0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  }

  Eigen::VectorXd posterior_mode() const {
    const Eigen::MatrixXd p = prior_prec + a.transpose() * a / noise;
    return p.ldlt().solve(a.transpose() * (y.array() - beta0).matrix() / noise);
  }
};

}  // namespace geoprev::testutil
