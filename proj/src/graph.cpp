#include "conforest/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace conforest {

WeightedGraph build_graph(const std::vector<WeightVector>& rows) {
  WeightedGraph g;
  const std::size_t n = rows.size();
  g.n_nodes = n;
  for (const WeightVector& row : rows)
    if (row.weights.size() < n) throw DataError("weight row shorter than the node set");
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j : rows[i].support) {
      if (j == i || j >= n) continue;
      if (j > i) {
        const double w = (rows[i].weights[j] + rows[j].weights[i]) / 2.0;
        if (w > 0.0) g.edges.push_back({i, j, w});
      } else if (rows[j].weights[i] == 0.0) {
        // pair not emitted while scanning j; i's weight alone carries it
        const double w = rows[i].weights[j] / 2.0;
        if (w > 0.0) g.edges.push_back({j, i, w});
      }
    }
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const auto& a, const auto& b) {
    return a.a != b.a ? a.a < b.a : a.b < b.b;
  });
  return g;
}

WeightedGraph build_calibration_graph(const LcpModel& model) {
  const std::size_t n = model.n();
  std::vector<WeightVector> rows(n);
  parallel_for(n, [&](std::size_t i) { rows[i] = model.localizer.base_row(i); });
  return build_graph(rows);
}

namespace {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), 0u);
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::uint32_t> parent_;
};

}  // namespace

ClusterAssignment connected_components(const WeightedGraph& g) {
  UnionFind uf(g.n_nodes);
  for (const auto& e : g.edges) uf.unite(e.a, e.b);
  ClusterAssignment out;
  out.kind = ClusterKind::kComponents;
  out.labels.assign(g.n_nodes, 0);
  std::vector<std::int64_t> label_of_root(g.n_nodes, -1);
  std::uint32_t next = 0;
  for (std::uint32_t i = 0; i < g.n_nodes; ++i) {
    const std::uint32_t r = uf.find(i);
    if (label_of_root[r] < 0) label_of_root[r] = next++;
    out.labels[i] = static_cast<std::uint32_t>(label_of_root[r]);
  }
  out.n_groups = next;
  return out;
}

namespace {

// Aggregated graph for the Louvain passes: adjacency lists plus self-loop
// weight per node (internal weight collapsed by aggregation). A self loop
// counts twice in the node degree, as usual for modularity.
struct LouvainGraph {
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj;
  std::vector<double> self_weight;
  std::vector<double> degree;
  double m2 = 0.0;  // total degree

  std::size_t size() const { return adj.size(); }

  static LouvainGraph from(const WeightedGraph& g) {
    LouvainGraph lg;
    lg.adj.resize(g.n_nodes);
    lg.self_weight.assign(g.n_nodes, 0.0);
    for (const auto& e : g.edges) {
      lg.adj[e.a].emplace_back(e.b, e.weight);
      lg.adj[e.b].emplace_back(e.a, e.weight);
    }
    lg.finish();
    return lg;
  }

  void finish() {
    const std::size_t n = adj.size();
    for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
    degree.assign(n, 0.0);
    m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = 2.0 * self_weight[i];
      for (const auto& [j, w] : adj[i]) d += w;
      degree[i] = d;
      m2 += d;
    }
  }
};

double modularity_of(const LouvainGraph& g, const std::vector<std::uint32_t>& comm,
                     std::uint32_t n_comm, double resolution) {
  if (g.m2 <= 0.0) return 0.0;
  std::vector<double> internal(n_comm, 0.0);
  std::vector<double> total(n_comm, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    total[comm[i]] += g.degree[i];
    internal[comm[i]] += 2.0 * g.self_weight[i];
    for (const auto& [j, w] : g.adj[i])
      if (comm[j] == comm[i]) internal[comm[i]] += w;  // each edge seen twice
  }
  double q = 0.0;
  for (std::uint32_t c = 0; c < n_comm; ++c) {
    const double frac = total[c] / g.m2;
    q += internal[c] / g.m2 - resolution * frac * frac;
  }
  return q;
}

}  // namespace

ClusterAssignment louvain(const WeightedGraph& g, double resolution,
                          std::uint64_t seed) {
  if (!(resolution > 0.0)) throw ConfigError("louvain resolution must be positive");
  ClusterAssignment out;
  out.kind = ClusterKind::kCommunities;
  out.labels.resize(g.n_nodes);
  std::iota(out.labels.begin(), out.labels.end(), 0u);
  if (g.n_nodes == 0) return out;

  LouvainGraph lg = LouvainGraph::from(g);
  CounterRng rng(seed, Stream::kClustering);

  // node -> community at the finest level, refined across aggregations
  std::vector<std::uint32_t> global_comm(g.n_nodes);
  std::iota(global_comm.begin(), global_comm.end(), 0u);

  double last_q = modularity_of(lg, global_comm, static_cast<std::uint32_t>(g.n_nodes),
                                resolution);
  out.modularity_history.push_back(last_q);

  for (int level = 0; level < 64; ++level) {
    const std::size_t n = lg.size();
    std::vector<std::uint32_t> comm(n);
    std::iota(comm.begin(), comm.end(), 0u);
    std::vector<double> comm_tot = lg.degree;

    std::vector<std::uint32_t> visit(n);
    std::iota(visit.begin(), visit.end(), 0u);
    shuffle_indices(visit, rng);

    std::vector<double> to_comm(n, 0.0);
    std::vector<std::uint32_t> seen;
    bool any_move = false;
    for (bool improved = true; improved;) {
      improved = false;
      for (std::uint32_t u : visit) {
        const std::uint32_t old_c = comm[u];
        comm_tot[old_c] -= lg.degree[u];
        seen.clear();
        to_comm[old_c] = 0.0;
        seen.push_back(old_c);
        for (const auto& [v, w] : lg.adj[u]) {
          const std::uint32_t c = comm[v];
          if (to_comm[c] == 0.0 && c != old_c) seen.push_back(c);
          to_comm[c] += w;
        }
        const double scale = resolution * lg.degree[u] / lg.m2;
        std::uint32_t best_c = old_c;
        double best_gain = to_comm[old_c] - scale * comm_tot[old_c];
        for (std::uint32_t c : seen) {
          const double gain = to_comm[c] - scale * comm_tot[c];
          if (gain > best_gain) {
            best_gain = gain;
            best_c = c;
          }
        }
        for (std::uint32_t c : seen) to_comm[c] = 0.0;
        comm[u] = best_c;
        comm_tot[best_c] += lg.degree[u];
        if (best_c != old_c) {
          improved = true;
          any_move = true;
        }
      }
    }

    // contiguous community ids
    std::vector<std::int64_t> remap(n, -1);
    std::uint32_t n_comm = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (remap[comm[i]] < 0) remap[comm[i]] = n_comm++;
      comm[i] = static_cast<std::uint32_t>(remap[comm[i]]);
    }
    for (auto& c : global_comm) c = comm[c];

    const double q = modularity_of(lg, comm, n_comm, resolution);
    if (q + 1e-12 < last_q)
      throw NumericError("louvain: modularity decreased across a pass");
    out.modularity_history.push_back(q);
    last_q = q;

    if (!any_move || n_comm == n) break;

    // aggregate communities into super-nodes
    LouvainGraph next;
    next.adj.resize(n_comm);
    next.self_weight.assign(n_comm, 0.0);
    std::vector<double> acc(n_comm, 0.0);
    std::vector<std::uint32_t> acc_seen;
    std::vector<std::vector<std::uint32_t>> members(n_comm);
    for (std::uint32_t i = 0; i < n; ++i) members[comm[i]].push_back(i);
    for (std::uint32_t c = 0; c < n_comm; ++c) {
      acc_seen.clear();
      double self = 0.0;
      for (std::uint32_t i : members[c]) {
        self += lg.self_weight[i];
        for (const auto& [j, w] : lg.adj[i]) {
          const std::uint32_t cj = comm[j];
          if (cj == c) {
            self += w / 2.0;  // each internal edge visited from both ends
          } else {
            if (acc[cj] == 0.0) acc_seen.push_back(cj);
            acc[cj] += w;
          }
        }
      }
      next.self_weight[c] = self;
      std::sort(acc_seen.begin(), acc_seen.end());
      for (std::uint32_t cj : acc_seen) {
        next.adj[c].emplace_back(cj, acc[cj]);
        acc[cj] = 0.0;
      }
    }
    next.finish();
    lg = std::move(next);
  }

  // final labels contiguous by smallest node index
  std::vector<std::int64_t> remap(g.n_nodes, -1);
  std::uint32_t next_label = 0;
  for (std::size_t i = 0; i < g.n_nodes; ++i) {
    if (remap[global_comm[i]] < 0) remap[global_comm[i]] = next_label++;
    out.labels[i] = static_cast<std::uint32_t>(remap[global_comm[i]]);
  }
  out.n_groups = next_label;
  out.modularity = last_q;
  return out;
}

std::int32_t assign_region(std::span<const double> test_weights,
                           const ClusterAssignment& clusters, double tol) {
  if (test_weights.size() < clusters.labels.size())
    throw DataError("test weight vector shorter than the calibration set");
  std::vector<double> mass(clusters.n_groups, 0.0);
  for (std::size_t j = 0; j < clusters.labels.size(); ++j)
    mass[clusters.labels[j]] += test_weights[j];
  std::uint32_t best = 0;
  for (std::uint32_t c = 1; c < clusters.n_groups; ++c)
    if (mass[c] > mass[best]) best = c;
  double second = -kInf;
  for (std::uint32_t c = 0; c < clusters.n_groups; ++c)
    if (c != best && mass[c] > second) second = mass[c];
  if (clusters.n_groups > 1 && mass[best] - second <= tol) return kUndecidedRegion;
  return static_cast<std::int32_t>(best);
}

GroupwiseResult groupwise_threshold(const LcpModel& model,
                                    const ClusterAssignment& clusters,
                                    const TestPointContext& ctx, double tol) {
  if (clusters.labels.size() != model.n())
    throw DataError("cluster assignment does not match the calibration set");
  GroupwiseResult out;
  out.region = assign_region(
      std::span<const double>(ctx.test_row().weights.data(), model.n()), clusters, tol);

  std::vector<std::uint32_t> scan_order;
  if (out.region >= 0) {
    for (std::uint32_t r = 0; r < model.n(); ++r) {
      const std::uint32_t i = model.order[r];
      if (clusters.labels[i] == static_cast<std::uint32_t>(out.region))
        scan_order.push_back(i);
    }
  }
  if (scan_order.empty()) {
    out.pooled_fallback = true;
    out.threshold = lcp_threshold(ctx);
    return out;
  }
  out.threshold = detail::lcp_sweep(ctx.below(), ctx.test_slot(), ctx.supmax(),
                                    model.residuals, scan_order, model.alpha,
                                    ctx.test_cdf());
  return out;
}

GroupwiseResult groupwise_threshold(const LcpModel& model,
                                    const ClusterAssignment& clusters,
                                    std::span<const double> x, double tol) {
  TestPointContext ctx(model, x);
  return groupwise_threshold(model, clusters, ctx, tol);
}

GroupwiseResult groupwise_split_threshold(const LcpModel& model,
                                          const ClusterAssignment& clusters,
                                          std::span<const double> x, double tol) {
  if (clusters.labels.size() != model.n())
    throw DataError("cluster assignment does not match the calibration set");
  WeightVector row = model.localizer.localizer_row_at(x, x);
  GroupwiseResult out;
  out.region =
      assign_region(std::span<const double>(row.weights.data(), model.n()), clusters, tol);
  std::vector<double> region_residuals;
  if (out.region >= 0) {
    for (std::size_t i = 0; i < model.n(); ++i)
      if (clusters.labels[i] == static_cast<std::uint32_t>(out.region))
        region_residuals.push_back(model.residuals[i]);
  }
  if (region_residuals.empty()) {
    out.pooled_fallback = true;
    out.threshold = split_threshold(model.residuals, model.alpha);
    return out;
  }
  out.threshold = split_threshold(region_residuals, model.alpha);
  return out;
}

}  // namespace conforest
