#include "geoprev/cart.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <utility>

namespace geoprev::cart {

namespace {

struct Pending {
  std::int32_t node;
  std::size_t depth;
  std::vector<std::int32_t> rows;
};

struct Split {
  std::int32_t feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

std::vector<std::int32_t> draw_features(std::size_t p, std::size_t mtry, std::mt19937_64& rng) {
  std::vector<std::int32_t> out;
  if (mtry == 0 || mtry >= p) {
    out.resize(p);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  if (2 * mtry > p) {
    std::vector<std::int32_t> all(p);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < mtry; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, p - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(mtry));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, p - 1);
    while (out.size() < mtry) {
      const auto f = static_cast<std::int32_t>(pick(rng));
      if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Split best_split(const Eigen::MatrixXd& x, std::span<const double> y,
                 const std::vector<std::int32_t>& rows, const std::vector<std::int32_t>& features,
                 std::size_t min_leaf) {
  const std::size_t n = rows.size();
  double total = 0.0;
  for (auto r : rows) total += y[static_cast<std::size_t>(r)];
  const double parent = total * total / static_cast<double>(n);

  Split best;
  std::vector<std::pair<double, double>> col(n);
  for (auto f : features) {
    const double* xf = x.col(f).data();
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<std::size_t>(rows[i]);
      col[i] = {xf[r], y[r]};
    }
    std::sort(col.begin(), col.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (col.front().first == col.back().first) continue;
    double left = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left += col[i].second;
      if (col[i].first == col[i + 1].first) continue;
      const std::size_t nl = i + 1;
      const std::size_t nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double right = total - left;
      const double gain = left * left / static_cast<double>(nl) +
                          right * right / static_cast<double>(nr) - parent;
      if (gain > best.gain * (1.0 + 1e-12) + 1e-14) {
        best.gain = gain;
        best.feature = f;
        best.threshold = 0.5 * (col[i].first + col[i + 1].first);
      }
    }
  }
  return best;
}

}  // namespace

Tree grow_tree(const Eigen::MatrixXd& x, std::span<const double> y,
               std::vector<std::int32_t> sample, const TreeParams& params, std::mt19937_64& rng) {
  Tree tree;
  tree.nodes.emplace_back();
  std::deque<Pending> queue;
  queue.push_back({0, 0, std::move(sample)});
  std::size_t open_leaves = 1;
  const auto p = static_cast<std::size_t>(x.cols());

  auto make_leaf = [&tree](std::int32_t node, std::vector<std::int32_t> rows) {
    tree.nodes[static_cast<std::size_t>(node)].leaf = static_cast<std::int32_t>(tree.leaves.size());
    tree.leaves.push_back(std::move(rows));
  };

  while (!queue.empty()) {
    Pending cur = std::move(queue.front());
    queue.pop_front();
    const std::size_t n = cur.rows.size();
    bool can_split = n >= params.min_split_size && n >= 2 * params.min_leaf_size &&
                     (params.max_depth == 0 || cur.depth < params.max_depth) &&
                     (params.max_leaves == 0 || open_leaves < params.max_leaves);
    if (can_split) {
      const double y0 = y[static_cast<std::size_t>(cur.rows.front())];
      can_split = std::any_of(cur.rows.begin(), cur.rows.end(),
                              [&](std::int32_t r) { return y[static_cast<std::size_t>(r)] != y0; });
    }
    Split split;
    if (can_split) {
      const auto features = draw_features(p, params.mtry, rng);
      split = best_split(x, y, cur.rows, features, std::max<std::size_t>(1, params.min_leaf_size));
    }
    if (split.feature < 0) {
      make_leaf(cur.node, std::move(cur.rows));
      continue;
    }
    std::vector<std::int32_t> left, right;
    const double* xf = x.col(split.feature).data();
    for (auto r : cur.rows) (xf[r] <= split.threshold ? left : right).push_back(r);

    const auto l = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    const auto rt = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    Node& nd = tree.nodes[static_cast<std::size_t>(cur.node)];
    nd.feature = split.feature;
    nd.threshold = split.threshold;
    nd.left = l;
    nd.right = rt;
    ++open_leaves;
    queue.push_back({l, cur.depth + 1, std::move(left)});
    queue.push_back({rt, cur.depth + 1, std::move(right)});
  }
  return tree;
}

}  // namespace geoprev::cart
