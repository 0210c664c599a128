#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "conforest/calibration.hpp"

namespace conforest {

// Symmetrized localizer weights over the calibration points:
// a_ij = (w(X_i, X_j) + w(X_j, X_i)) / 2 for i != j, positive edges only.
struct WeightedGraph {
  struct Edge {
    std::uint32_t a, b;  // a < b
    double weight;       // > 0
  };
  std::size_t n_nodes = 0;
  std::vector<Edge> edges;
};

// From explicit rows (test slots ignored).
WeightedGraph build_graph(const std::vector<WeightVector>& rows);

// From the model's test-free localizer rows.
WeightedGraph build_calibration_graph(const LcpModel& model);

enum class ClusterKind { kComponents, kCommunities };

struct ClusterAssignment {
  std::vector<std::uint32_t> labels;  // one per node, contiguous from 0
  std::uint32_t n_groups = 0;
  ClusterKind kind = ClusterKind::kComponents;
  double modularity = 0.0;                  // communities only
  std::vector<double> modularity_history;  // one entry per local-move pass
};

// Union-find over the edges; labels ordered by smallest contained node.
ClusterAssignment connected_components(const WeightedGraph& g);

// Greedy modularity maximization (local moves + graph aggregation repeated
// to a fixed point). Deterministic given the seed (node visit order is the
// seeded shuffle); modularity never decreases across passes.
ClusterAssignment louvain(const WeightedGraph& g, double resolution,
                          std::uint64_t seed);

inline constexpr std::int32_t kUndecidedRegion = -1;

// Region of a test point: the cluster holding the largest share of its
// localizer mass; kUndecidedRegion when the top two shares are within tol.
std::int32_t assign_region(std::span<const double> test_weights,
                           const ClusterAssignment& clusters, double tol = 1e-9);

struct GroupwiseResult {
  double threshold = 0.0;
  std::int32_t region = kUndecidedRegion;
  bool pooled_fallback = false;  // undecided or empty region: full-calibration search
};

// Groupwise LCP threshold: assign the region, then run the acceptance sweep
// with the coverage sum restricted to the region members (denominator
// |region| + 1, candidate order statistics from the region). Undecided test
// points are calibrated against the pooled set.
GroupwiseResult groupwise_threshold(const LcpModel& model,
                                    const ClusterAssignment& clusters,
                                    const TestPointContext& ctx, double tol = 1e-9);
GroupwiseResult groupwise_threshold(const LcpModel& model,
                                    const ClusterAssignment& clusters,
                                    std::span<const double> x, double tol = 1e-9);

// Split-conformal by group: the plain split threshold over the region's
// residuals with denominator |region| + 1.
GroupwiseResult groupwise_split_threshold(const LcpModel& model,
                                          const ClusterAssignment& clusters,
                                          std::span<const double> x, double tol = 1e-9);

}  // namespace conforest
