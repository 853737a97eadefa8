#include "rcac/consensus.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "rcac/error.hpp"

namespace rcac {

// ---------------------------------------------------------------------------
// CommGraph

CommGraph::CommGraph(std::size_t n_nodes, const std::vector<Edge>& edges)
    : in_(n_nodes), w_(n_nodes) {
  std::vector<std::vector<double>> raw(n_nodes, std::vector<double>(n_nodes, 0.0));
  for (std::size_t i = 0; i < n_nodes; ++i) raw[i][i] = 1.0;
  for (const auto& e : edges) {
    if (e.src >= n_nodes || e.dst >= n_nodes) throw InputError("edge endpoint out of range");
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) throw InputError("edge weights must be positive");
    raw[e.dst][e.src] = e.weight;
  }
  for (std::size_t i = 0; i < n_nodes; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < n_nodes; ++j) {
      if (raw[i][j] > 0.0) {
        in_[i].push_back(j);
        total += raw[i][j];
      }
    }
    for (std::size_t j : in_[i]) w_[i].push_back(raw[i][j] / total);
  }
}

CommGraph CommGraph::complete(std::size_t n) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) edges.push_back({i, j, 1.0});
  return CommGraph(n, edges);
}

CommGraph CommGraph::directed_ring(std::size_t n) {
  std::vector<Edge> edges;
  if (n > 1)
    for (std::size_t i = 0; i < n; ++i) edges.push_back({(i + n - 1) % n, i, 1.0});
  return CommGraph(n, edges);
}

bool CommGraph::has_edge(std::size_t src, std::size_t dst) const {
  const auto& in = in_.at(dst);
  return std::binary_search(in.begin(), in.end(), src);
}

double CommGraph::min_weight() const {
  double m = 1.0;
  for (const auto& row : w_)
    for (double w : row) m = std::min(m, w);
  return m;
}

std::uint64_t CommGraph::in_mask(std::size_t i) const {
  if (n_nodes() > 64) throw CapacityError("bitmask view needs at most 64 nodes");
  std::uint64_t m = 0;
  for (std::size_t j : in_.at(i))
    if (j != i) m |= std::uint64_t{1} << j;
  return m;
}

CommGraph parse_edge_list(const std::string& text, std::size_t n_nodes) {
  std::istringstream in(text);
  std::string line;
  std::vector<Edge> edges;
  std::size_t max_id = 0;
  bool any = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    long long src = 0;
    long long dst = 0;
    if (!(ls >> src)) continue;  // blank line
    if (!(ls >> dst) || src < 0 || dst < 0)
      throw InputError("edge list line " + std::to_string(lineno) + ": expected 'src dst [weight]'");
    Edge e{static_cast<std::size_t>(src), static_cast<std::size_t>(dst), 1.0};
    if (double w; ls >> w) e.weight = w;
    std::string rest;
    if (ls >> rest) throw InputError("edge list line " + std::to_string(lineno) + ": trailing tokens");
    max_id = std::max({max_id, e.src, e.dst});
    any = true;
    edges.push_back(e);
  }
  const std::size_t n = std::max(n_nodes, any ? max_id + 1 : std::size_t{0});
  return CommGraph(n, edges);
}

CommGraph load_edge_list(const std::filesystem::path& path, std::size_t n_nodes) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open edge list " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_edge_list(ss.str(), n_nodes);
}

// ---------------------------------------------------------------------------
// Projection and trimming

double project_error(const Vec& received, const Vec& own, const Vec& feature, double alpha) {
  if (received.size() != own.size() || own.size() != feature.size())
    throw InputError("dimension mismatch in projection");
  if (!(alpha > 0.0)) throw InputError("step size must be positive");
  const double norm2 = feature.squaredNorm();
  if (norm2 == 0.0) throw DegenerateFeatureError("zero feature vector in projection");
  return feature.dot(received - own) / (alpha * norm2);
}

std::vector<std::size_t> trim_select(std::span<const NodeValue> errors, std::size_t own_id, std::size_t H) {
  const auto own_it = std::find_if(errors.begin(), errors.end(), [&](const NodeValue& e) { return e.node == own_id; });
  if (own_it == errors.end()) throw InputError("own node missing from error set");
  const double own = own_it->value;

  std::vector<NodeValue> above;
  std::vector<NodeValue> below;
  for (const auto& e : errors) {
    if (e.value > own) above.push_back(e);
    else if (e.value < own) below.push_back(e);
  }
  std::sort(above.begin(), above.end(), [](const NodeValue& a, const NodeValue& b) {
    return a.value != b.value ? a.value > b.value : a.node < b.node;
  });
  std::sort(below.begin(), below.end(), [](const NodeValue& a, const NodeValue& b) {
    return a.value != b.value ? a.value < b.value : a.node < b.node;
  });

  std::vector<std::size_t> dropped;
  for (std::size_t k = 0; k < std::min(H, above.size()); ++k) dropped.push_back(above[k].node);
  for (std::size_t k = 0; k < std::min(H, below.size()); ++k) dropped.push_back(below[k].node);

  std::vector<std::size_t> retained;
  for (const auto& e : errors)
    if (std::find(dropped.begin(), dropped.end(), e.node) == dropped.end()) retained.push_back(e.node);
  std::sort(retained.begin(), retained.end());
  return retained;
}

namespace {

double value_of(std::span<const NodeValue> errors, std::size_t node) {
  for (const auto& e : errors)
    if (e.node == node) return e.value;
  throw InputError("retained node has no error value");
}

}  // namespace

double aggregate(std::span<const NodeValue> errors, std::span<const std::size_t> retained,
                 std::span<const double> weights) {
  if (retained.empty()) throw InputError("retained set is empty");
  if (weights.size() != retained.size()) throw InputError("one weight per retained node required");
  double acc = 0.0;
  for (std::size_t k = 0; k < retained.size(); ++k) acc += weights[k] * value_of(errors, retained[k]);
  return acc;
}

double aggregate_uniform(std::span<const NodeValue> errors, std::span<const std::size_t> retained) {
  const std::vector<double> w(retained.size(), 1.0 / static_cast<double>(retained.size()));
  return aggregate(errors, retained, w);
}

Vec consensus_apply(const Vec& x, double alpha, double error, const Vec& feature) {
  if (x.size() != feature.size()) throw InputError("dimension mismatch in consensus update");
  return x + (alpha * error) * feature;
}

Vec elementwise_trimmed_mean(std::span<const Vec> vectors, std::size_t H) {
  const std::size_t n = vectors.size();
  if (n <= 2 * H) throw InputError("trimmed mean needs more than 2H vectors");
  const Eigen::Index dim = vectors.front().size();
  for (const auto& v : vectors)
    if (v.size() != dim) throw InputError("dimension mismatch in trimmed mean");

  Vec out(dim);
  if (H == 0) {
    out.setZero();
    for (const auto& v : vectors) out += v;
    out /= static_cast<double>(n);
    return out;
  }
  std::vector<double> column(n);
  const double kept = static_cast<double>(n - 2 * H);
  for (Eigen::Index c = 0; c < dim; ++c) {
    for (std::size_t k = 0; k < n; ++k) column[k] = vectors[k](c);
    std::sort(column.begin(), column.end());
    double acc = 0.0;
    for (std::size_t k = H; k < n - H; ++k) acc += column[k];
    out(c) = acc / kept;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Robustness

bool is_zeta_reachable(const CommGraph& graph, std::span<const std::size_t> subset, std::size_t zeta) {
  if (subset.empty()) throw InputError("subset must be nonempty");
  std::vector<bool> member(graph.n_nodes(), false);
  for (std::size_t i : subset) member.at(i) = true;
  for (std::size_t i : subset) {
    std::size_t outside = 0;
    for (std::size_t j : graph.in_neighbors(i))
      if (j != i && !member[j]) ++outside;
    if (outside >= zeta) return true;
  }
  return false;
}

namespace {

void check_robustness_input(const CommGraph& graph) {
  if (graph.n_nodes() < 2) throw InputError("robustness is defined for graphs with at least 2 nodes");
  if (graph.n_nodes() > kRobustnessNodeCap)
    throw CapacityError("exhaustive robustness check is limited to 16 nodes");
}

// reachable[S] for every subset mask S.
std::vector<std::uint8_t> reachable_table(const CommGraph& graph, std::size_t zeta) {
  const std::size_t n = graph.n_nodes();
  std::vector<std::uint64_t> in(n);
  for (std::size_t i = 0; i < n; ++i) in[i] = graph.in_mask(i);
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;
  std::vector<std::uint8_t> table(full + 1, 0);
  for (std::uint64_t S = 1; S <= full; ++S) {
    for (std::uint64_t rest = S; rest; rest &= rest - 1) {
      const auto i = static_cast<std::size_t>(std::countr_zero(rest));
      if (static_cast<std::size_t>(std::popcount(in[i] & ~S)) >= zeta) {
        table[S] = 1;
        break;
      }
    }
  }
  return table;
}

// True when some nonempty T inside the complement of S is also unreachable.
bool has_unreachable_partner(const std::vector<std::uint8_t>& reach, std::uint64_t S, std::uint64_t full) {
  const std::uint64_t comp = full & ~S;
  for (std::uint64_t T = comp; T; T = (T - 1) & comp)
    if (!reach[T]) return true;
  return false;
}

}  // namespace

bool is_zeta_robust_serial(const CommGraph& graph, std::size_t zeta) {
  check_robustness_input(graph);
  const auto reach = reachable_table(graph, zeta);
  const std::uint64_t full = (std::uint64_t{1} << graph.n_nodes()) - 1;
  for (std::uint64_t S = 1; S < full; ++S)
    if (!reach[S] && has_unreachable_partner(reach, S, full)) return false;
  return true;
}

bool is_zeta_robust(const CommGraph& graph, std::size_t zeta) {
  check_robustness_input(graph);
  const auto reach = reachable_table(graph, zeta);
  const std::uint64_t full = (std::uint64_t{1} << graph.n_nodes()) - 1;
  std::atomic<bool> violated{false};
  const auto last = static_cast<long long>(full);
#pragma omp parallel for schedule(dynamic, 64)
  for (long long S = 1; S < last; ++S) {
    if (violated.load(std::memory_order_relaxed)) continue;
    const auto mask = static_cast<std::uint64_t>(S);
    if (!reach[mask] && has_unreachable_partner(reach, mask, full)) violated.store(true, std::memory_order_relaxed);
  }
  return !violated.load();
}

std::size_t max_robustness(const CommGraph& graph) {
  std::size_t zeta = 0;
  while (zeta < graph.n_nodes() && is_zeta_robust(graph, zeta + 1)) ++zeta;
  return zeta;
}

double disagreement_norm(std::span<const Vec> params) {
  if (params.empty()) return 0.0;
  const Eigen::Index dim = params.front().size();
  Vec mean = Vec::Zero(dim);
  for (const auto& p : params) {
    if (p.size() != dim) throw InputError("dimension mismatch in disagreement norm");
    mean += p;
  }
  mean /= static_cast<double>(params.size());
  double acc = 0.0;
  for (const auto& p : params) acc += (p - mean).squaredNorm();
  return std::sqrt(acc);
}

}  // namespace rcac
