#pragma once

// Communication graphs, projection-based error estimation, W-MSR trimming,
// the element-wise trimmed mean and the graph robustness analyzer.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rcac/mmdp.hpp"

namespace rcac {

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  double weight = 1.0;
};

/// Directed graph stored by in-neighborhoods. Every node lists itself; each
/// row of weights is normalized to sum to one.
class CommGraph {
 public:
  CommGraph() = default;
  CommGraph(std::size_t n_nodes, const std::vector<Edge>& edges);

  static CommGraph complete(std::size_t n);
  /// i receives from i-1 (mod n) and itself.
  static CommGraph directed_ring(std::size_t n);

  std::size_t n_nodes() const { return in_.size(); }
  const std::vector<std::size_t>& in_neighbors(std::size_t i) const { return in_.at(i); }
  const std::vector<double>& weights(std::size_t i) const { return w_.at(i); }
  bool has_edge(std::size_t src, std::size_t dst) const;
  /// Smallest retained weight (the nu bound).
  double min_weight() const;
  /// In-neighbors of i as a bitmask, self excluded. Requires n <= 64.
  std::uint64_t in_mask(std::size_t i) const;

 private:
  std::vector<std::vector<std::size_t>> in_;
  std::vector<std::vector<double>> w_;
};

/// `src dst [weight]` per line, 0-based ids, '#' starts a comment. The node
/// count is the largest id + 1 unless `n_nodes` is larger.
CommGraph load_edge_list(const std::filesystem::path& path, std::size_t n_nodes = 0);
CommGraph parse_edge_list(const std::string& text, std::size_t n_nodes = 0);

struct TrimConfig {
  std::size_t H = 0;
};

struct NodeValue {
  std::size_t node = 0;
  double value = 0.0;
};

/// feature' (received - own) / (alpha |feature|^2). Throws
/// DegenerateFeatureError for a zero feature vector.
double project_error(const Vec& received, const Vec& own, const Vec& feature, double alpha);

/// W-MSR rule: drop up to H values strictly above the own value (largest
/// first) and up to H strictly below (smallest first). Equal values are never
/// dropped; among equal extremes the lower node id goes first. Returns the
/// retained node ids in ascending order.
std::vector<std::size_t> trim_select(std::span<const NodeValue> errors, std::size_t own_id, std::size_t H);

/// sum_j w_j e_j over the retained nodes; `weights` is aligned with `retained`.
double aggregate(std::span<const NodeValue> errors, std::span<const std::size_t> retained,
                 std::span<const double> weights);
/// Uniform 1/|retained| weights.
double aggregate_uniform(std::span<const NodeValue> errors, std::span<const std::size_t> retained);

Vec consensus_apply(const Vec& x, double alpha, double error, const Vec& feature);

/// Per coordinate, drop the H largest and H smallest values and average the
/// rest. Needs more than 2H vectors.
Vec elementwise_trimmed_mean(std::span<const Vec> vectors, std::size_t H);

bool is_zeta_reachable(const CommGraph& graph, std::span<const std::size_t> subset, std::size_t zeta);

inline constexpr std::size_t kRobustnessNodeCap = 16;

/// Exhaustive check over all pairs of nonempty disjoint subsets (3^n pairs),
/// parallelized over the first subset with OpenMP.
bool is_zeta_robust(const CommGraph& graph, std::size_t zeta);
/// Single-threaded reference for the same enumeration.
bool is_zeta_robust_serial(const CommGraph& graph, std::size_t zeta);
/// Largest zeta for which the graph is zeta-robust.
std::size_t max_robustness(const CommGraph& graph);

/// |x - 1 (x) mean(x)|_2 over the stacked agent vectors.
double disagreement_norm(std::span<const Vec> params);

}  // namespace rcac
