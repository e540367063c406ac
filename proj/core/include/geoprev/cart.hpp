#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace geoprev::cart {

/// Growth limits for a single regression tree. Zero means "no limit" for the
/// depth, leaf count and mtry (all features).
struct TreeParams {
  std::size_t max_depth = 0;
  std::size_t max_leaves = 0;
  std::size_t min_split_size = 2;  // nodes with fewer samples become leaves
  std::size_t min_leaf_size = 1;   // both children of a split need this many
  std::size_t mtry = 0;            // candidate features drawn per node
};

struct Node {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf = -1;     // index into Tree::leaves for leaf nodes
};

/// Regression tree grown by variance reduction. Every leaf keeps the list of
/// training rows (with bootstrap multiplicity) that reached it.
struct Tree {
  std::vector<Node> nodes;
  std::vector<std::vector<std::int32_t>> leaves;

  /// Leaf index reached by a sample whose feature j is `feature(j)`.
  template <typename FeatureFn>
  std::int32_t leaf_of(FeatureFn&& feature) const {
    std::int32_t at = 0;
    while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
      const Node& nd = nodes[static_cast<std::size_t>(at)];
      at = feature(nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(at)].leaf;
  }
};

/// Grows a tree on the rows `sample` (duplicates allowed) of the column-major
/// design `x` against targets `y`. Candidate features are drawn from `rng`;
/// equal-gain splits resolve to the lowest feature index.
Tree grow_tree(const Eigen::MatrixXd& x, std::span<const double> y,
               std::vector<std::int32_t> sample, const TreeParams& params, std::mt19937_64& rng);

}  // namespace geoprev::cart
