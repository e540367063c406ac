#include "geoprev/sprf.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "geoprev/errors.hpp"
#include "geoprev/parallel.hpp"

namespace geoprev::sprf {

void SprfSpec::validate() const {
  if (num_trees < 1) throw ValidationError("sprf: num_trees must be >= 1");
  if (mtry && *mtry < 1) throw ValidationError("sprf: mtry must be >= 1");
  if (min_node_size < 1) throw ValidationError("sprf: min_node_size must be >= 1");
}

Eigen::MatrixXd build_features(std::span<const Location> train_pts,
                               std::span<const Location> query_pts, DistanceMetric metric) {
  if (train_pts.empty()) throw ValidationError("sprf: no training anchors");
  return cross_distances(query_pts, train_pts, metric);
}

SprfFit fit(std::span<const SurveyRecord> records, const SprfSpec& spec) {
  spec.validate();
  if (records.size() < 2) throw ValidationError("sprf fit needs at least 2 records");
  SprfFit out;
  out.anchors = locations_of(records);
  out.metric = spec.metric;
  out.y.reserve(records.size());
  for (const auto& r : records) out.y.push_back(r.prevalence());

  const std::size_t n = records.size();
  const Eigen::MatrixXd x = distance_matrix(out.anchors, spec.metric);
  const std::size_t mtry =
      spec.mtry ? static_cast<std::size_t>(*spec.mtry)
                : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n)))));
  if (mtry > n) throw ValidationError("sprf: mtry exceeds the number of distance features");

  cart::TreeParams params;
  params.mtry = mtry;
  params.min_split_size = static_cast<std::size_t>(spec.min_node_size) + 1;
  params.min_leaf_size = 1;

  out.trees.resize(static_cast<std::size_t>(spec.num_trees));
  parallel::parallel_for(out.trees.size(), spec.threads, [&](std::size_t t) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(n) - 1);
    std::vector<std::int32_t> boot(n);
    for (auto& b : boot) b = pick(rng);
    cart::Tree tree = cart::grow_tree(x, out.y, std::move(boot), params, rng);
    for (auto& leaf : tree.leaves) leaf.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const auto leaf = tree.leaf_of([&](std::int32_t j) { return x(static_cast<Eigen::Index>(i), j); });
      tree.leaves[static_cast<std::size_t>(leaf)].push_back(static_cast<std::int32_t>(i));
    }
    out.trees[t] = std::move(tree);
  });
  return out;
}

std::vector<std::pair<std::int32_t, double>> leaf_weights(const SprfFit& fit, const Location& q) {
  std::vector<std::pair<std::int32_t, double>> raw;
  const double per_tree = 1.0 / static_cast<double>(fit.trees.size());
  for (const auto& tree : fit.trees) {
    const auto leaf = tree.leaf_of([&](std::int32_t j) {
      return distance(q, fit.anchors[static_cast<std::size_t>(j)], fit.metric);
    });
    const auto& members = tree.leaves[static_cast<std::size_t>(leaf)];
    const double w = per_tree / static_cast<double>(members.size());
    for (auto m : members) raw.emplace_back(m, w);
  }
  std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<std::int32_t, double>> out;
  for (const auto& [idx, w] : raw) {
    if (!out.empty() && out.back().first == idx) {
      out.back().second += w;
    } else {
      out.emplace_back(idx, w);
    }
  }
  return out;
}

namespace {

struct Pooled {
  std::vector<std::pair<double, double>> dist;  // (value, weight) sorted by value
  double mean = 0.0;
};

Pooled pooled_distribution(const SprfFit& fit, const Location& q) {
  Pooled p;
  for (const auto& [idx, w] : leaf_weights(fit, q)) {
    const double v = fit.y[static_cast<std::size_t>(idx)];
    p.dist.emplace_back(v, w);
    p.mean += w * v;
  }
  std::sort(p.dist.begin(), p.dist.end());
  return p;
}

double quantile_of(const Pooled& p, double prob) {
  double cum = 0.0;
  for (const auto& [v, w] : p.dist) {
    cum += w;
    if (cum >= prob - 1e-12) return v;
  }
  return p.dist.back().first;
}

}  // namespace

std::vector<std::vector<double>> predict_quantiles(const SprfFit& fit,
                                                   std::span<const Location> pts,
                                                   std::span<const double> probs) {
  if (probs.empty()) throw ValidationError("sprf: empty probability list");
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] > 0.0 && probs[i] < 1.0)) throw ValidationError("sprf: probabilities must lie in (0, 1)");
    if (i > 0 && probs[i] < probs[i - 1]) throw ValidationError("sprf: probabilities must be sorted");
  }
  std::vector<std::vector<double>> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Pooled pooled = pooled_distribution(fit, pts[i]);
    out[i].reserve(probs.size());
    for (double pr : probs) out[i].push_back(quantile_of(pooled, pr));
  }
  return out;
}

double sd_from_iqr(double q25, double q75) {
  if (q75 < q25) throw ValidationError("sd_from_iqr: q75 < q25");
  return (q75 - q25) / 1.34898;
}

std::vector<SprfPrediction> predict(const SprfFit& fit, std::span<const Location> pts) {
  std::vector<SprfPrediction> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Pooled pooled = pooled_distribution(fit, pts[i]);
    auto& o = out[i];
    o.q25 = quantile_of(pooled, 0.25);
    o.median = quantile_of(pooled, 0.5);
    o.q75 = quantile_of(pooled, 0.75);
    o.mean = pooled.mean;
    o.sd = sd_from_iqr(o.q25, o.q75);
  }
  return out;
}

}  // namespace geoprev::sprf
