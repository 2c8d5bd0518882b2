#pragma once

// Exact Euclidean minimum spanning trees and the Friedman-Rafsky cross-edge
// count over two labeled samples.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fimest/error.hpp"

namespace fimest {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n x K sample matrix, one observation per row. Rows are checked for
/// finiteness on construction; duplicate rows are caught by build_emst.
class PointCloud {
 public:
  PointCloud() = default;

  explicit PointCloud(RowMatrix points) : points_(std::move(points)) {
    if (points_.rows() < 1 || points_.cols() < 1) {
      throw Error(ErrorCode::ShapeError, "point cloud needs at least one row and one column");
    }
    if (!points_.allFinite()) {
      for (Eigen::Index i = 0; i < points_.rows(); ++i) {
        if (!points_.row(i).allFinite()) {
          throw Error(ErrorCode::NonFiniteInput, "row " + std::to_string(i) + " has a NaN or Inf");
        }
      }
    }
  }

  /// Build from a plain list of rows (handy in tests and the CLI).
  static PointCloud from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw Error(ErrorCode::ShapeError, "point cloud needs at least one row");
    const std::size_t k = rows.front().size();
    RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != k) {
        throw Error(ErrorCode::ShapeError, "row " + std::to_string(i) + " has " +
                                               std::to_string(rows[i].size()) + " columns, expected " +
                                               std::to_string(k));
      }
      for (std::size_t j = 0; j < k; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return PointCloud(std::move(m));
  }

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }
  const RowMatrix& points() const { return points_; }

 private:
  RowMatrix points_;
};

enum class Origin : std::uint8_t { P, Q };

/// Concatenation Xp ∪ Xq with per-row origin tags (P rows first).
struct LabeledSampleSet {
  PointCloud cloud;
  std::vector<Origin> labels;
  std::size_t n_p = 0;
  std::size_t n_q = 0;

  static LabeledSampleSet concat(const PointCloud& xp, const PointCloud& xq) {
    if (xp.dim() != xq.dim()) {
      throw Error(ErrorCode::DimensionMismatch, "samples have " + std::to_string(xp.dim()) + " and " +
                                                    std::to_string(xq.dim()) + " columns");
    }
    RowMatrix joined(static_cast<Eigen::Index>(xp.size() + xq.size()), static_cast<Eigen::Index>(xp.dim()));
    joined.topRows(static_cast<Eigen::Index>(xp.size())) = xp.points();
    joined.bottomRows(static_cast<Eigen::Index>(xq.size())) = xq.points();
    LabeledSampleSet out{PointCloud(std::move(joined)), {}, xp.size(), xq.size()};
    out.labels.assign(xp.size(), Origin::P);
    out.labels.insert(out.labels.end(), xq.size(), Origin::Q);
    return out;
  }
};

struct TreeEdge {
  std::size_t a = 0;  // a < b
  std::size_t b = 0;
  double weight = 0.0;

  friend bool operator==(const TreeEdge&, const TreeEdge&) = default;
};

struct SpanningTree {
  std::vector<TreeEdge> edges;
  std::size_t node_count = 0;

  /// Sum of edge weights, accumulated in ascending weight order so that two
  /// trees with the same edge set report bit-identical totals.
  double total_weight() const {
    std::vector<double> w;
    w.reserve(edges.size());
    for (const auto& e : edges) w.push_back(e.weight);
    std::sort(w.begin(), w.end());
    return std::accumulate(w.begin(), w.end(), 0.0);
  }

  /// Edges sorted by (a, b); canonical form for set comparisons.
  std::vector<TreeEdge> sorted_edges() const {
    auto out = edges;
    std::sort(out.begin(), out.end(), [](const TreeEdge& x, const TreeEdge& y) {
      return std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });
    return out;
  }
};

namespace detail {

inline double squared_distance(const RowMatrix& pts, std::size_t i, std::size_t j) {
  const double* x = pts.data() + i * static_cast<std::size_t>(pts.cols());
  const double* y = pts.data() + j * static_cast<std::size_t>(pts.cols());
  double s = 0.0;
  for (Eigen::Index c = 0; c < pts.cols(); ++c) {
    const double t = x[c] - y[c];
    s += t * t;
  }
  return s;
}

// Strict total order on edges: squared length, then (min index, max index).
struct EdgeKey {
  double dist2 = std::numeric_limits<double>::infinity();
  std::size_t lo = std::numeric_limits<std::size_t>::max();
  std::size_t hi = std::numeric_limits<std::size_t>::max();

  static EdgeKey of(double d2, std::size_t u, std::size_t v) {
    return {d2, std::min(u, v), std::max(u, v)};
  }
  bool operator<(const EdgeKey& o) const { return std::tie(dist2, lo, hi) < std::tie(o.dist2, o.lo, o.hi); }
};

[[noreturn]] inline void throw_duplicate(std::size_t u, std::size_t v) {
  throw Error(ErrorCode::DuplicatePoints,
              "rows " + std::to_string(std::min(u, v)) + " and " + std::to_string(std::max(u, v)) + " are identical");
}

}  // namespace detail

/// Exact EMST by dense Prim: O(n^2 K) time, O(n K) memory, no distance matrix.
/// Edges are ordered by (length, min index, max index), which makes the tree
/// unique even when lengths tie.
inline SpanningTree build_emst(const PointCloud& cloud) {
  const std::size_t n = cloud.size();
  if (n < 2) throw Error(ErrorCode::ShapeError, "an EMST needs at least two points");
  const std::size_t k = cloud.dim();
  const RowMatrix& pts = cloud.points();

  // Vertices outside the tree live in slots [0, remaining) of these arrays,
  // coordinates included, so the inner loop streams through memory.
  std::size_t remaining = n - 1;
  std::vector<double> coords(pts.data() + k, pts.data() + n * k);
  std::vector<std::size_t> id(remaining);
  std::iota(id.begin(), id.end(), std::size_t{1});
  std::vector<double> best(remaining, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> parent(remaining, 0);

  // (d2, u, v) < (best_d2, best_u, best_v) under the edge order.
  auto less = [](double d2, std::size_t u, std::size_t v, double bd2, std::size_t bu, std::size_t bv) {
    if (d2 != bd2) return d2 < bd2;
    return std::make_pair(std::min(u, v), std::max(u, v)) < std::make_pair(std::min(bu, bv), std::max(bu, bv));
  };

  SpanningTree tree;
  tree.node_count = n;
  tree.edges.reserve(n - 1);

  std::vector<double> current(pts.data(), pts.data() + k);
  std::size_t added = 0;
  while (remaining > 0) {
    std::size_t pick = 0;
    const double* x = current.data();
    for (std::size_t s = 0; s < remaining; ++s) {
      const double* y = coords.data() + s * k;
      double d2 = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double t = x[c] - y[c];
        d2 += t * t;
      }
      if (d2 == 0.0) detail::throw_duplicate(added, id[s]);
      if (d2 <= best[s] && less(d2, added, id[s], best[s], parent[s], id[s])) {
        best[s] = d2;
        parent[s] = added;
      }
      if (best[s] <= best[pick] && s != pick &&
          less(best[s], parent[s], id[s], best[pick], parent[pick], id[pick])) {
        pick = s;
      }
    }
    const std::size_t v = id[pick];
    tree.edges.push_back({std::min(v, parent[pick]), std::max(v, parent[pick]), std::sqrt(best[pick])});
    std::copy_n(coords.data() + pick * k, k, current.data());
    added = v;
    --remaining;
    if (pick != remaining) {
      std::copy_n(coords.data() + remaining * k, k, coords.data() + pick * k);
      id[pick] = id[remaining];
      best[pick] = best[remaining];
      parent[pick] = parent[remaining];
    }
  }
  return tree;
}

/// Kruskal over all n(n-1)/2 edges with the same edge order as build_emst.
/// O(n^2 log n) time and O(n^2) memory; a cross-check, not the default path.
inline SpanningTree build_emst_kruskal(const PointCloud& cloud) {
  const std::size_t n = cloud.size();
  if (n < 2) throw Error(ErrorCode::ShapeError, "an EMST needs at least two points");
  const RowMatrix& pts = cloud.points();

  std::vector<detail::EdgeKey> all;
  all.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d2 = detail::squared_distance(pts, i, j);
      if (d2 == 0.0) detail::throw_duplicate(i, j);
      all.push_back({d2, i, j});
    }
  }
  std::sort(all.begin(), all.end());

  std::vector<std::size_t> root(n);
  std::iota(root.begin(), root.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (root[x] != x) {
      root[x] = root[root[x]];
      x = root[x];
    }
    return x;
  };

  SpanningTree tree;
  tree.node_count = n;
  for (const auto& e : all) {
    const std::size_t ra = find(e.lo);
    const std::size_t rb = find(e.hi);
    if (ra == rb) continue;
    root[ra] = rb;
    tree.edges.push_back({e.lo, e.hi, std::sqrt(e.dist2)});
    if (tree.edges.size() == n - 1) break;
  }
  return tree;
}

/// Number of tree edges whose endpoints carry different origins.
inline std::size_t count_cross_edges(const SpanningTree& tree, std::span<const Origin> labels) {
  if (labels.size() != tree.node_count) {
    throw Error(ErrorCode::LabelMismatch, std::to_string(labels.size()) + " labels for " +
                                              std::to_string(tree.node_count) + " nodes");
  }
  std::size_t c = 0;
  for (const auto& e : tree.edges) {
    if (labels[e.a] != labels[e.b]) ++c;
  }
  return c;
}

struct FrStatistic {
  std::size_t c = 0;
  std::size_t n_p = 0;
  std::size_t n_q = 0;
};

inline FrStatistic fr_statistic(const PointCloud& xp, const PointCloud& xq) {
  const auto set = LabeledSampleSet::concat(xp, xq);
  const auto tree = build_emst(set.cloud);
  return {count_cross_edges(tree, set.labels), set.n_p, set.n_q};
}

}  // namespace fimest
