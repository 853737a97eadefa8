#include "rcac/mmdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rcac/error.hpp"

namespace rcac {

namespace {

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

// Inverse-CDF draw from a probability row; the last positive entry absorbs
// rounding so the result is always a valid index.
template <class Row>
std::size_t sample_row(const Row& row, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  Eigen::Index last = 0;
  for (Eigen::Index k = 0; k < row.size(); ++k) {
    if (row(k) <= 0.0) continue;
    last = k;
    acc += row(k);
    if (u < acc) return static_cast<std::size_t>(k);
  }
  return static_cast<std::size_t>(last);
}

}  // namespace

// ---------------------------------------------------------------------------
// TabularMMDP

std::size_t TabularMMDP::n_joint_actions() const {
  std::size_t n = 1;
  for (int k : local_actions) n *= static_cast<std::size_t>(k);
  return n;
}

std::size_t TabularMMDP::joint_index(const JointAction& a) const {
  if (a.size() != local_actions.size()) throw InputError("joint action has wrong number of agents");
  std::size_t idx = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || a[i] >= local_actions[i])
      throw InputError("action index out of range for agent " + std::to_string(i));
    idx = idx * static_cast<std::size_t>(local_actions[i]) + static_cast<std::size_t>(a[i]);
  }
  return idx;
}

JointAction TabularMMDP::decode_joint(std::size_t index) const {
  JointAction a(local_actions.size());
  for (std::size_t k = local_actions.size(); k-- > 0;) {
    a[k] = static_cast<int>(index % static_cast<std::size_t>(local_actions[k]));
    index /= static_cast<std::size_t>(local_actions[k]);
  }
  return a;
}

void TabularMMDP::validate() const {
  if (n_states < 1) throw InputError("tabular MMDP needs at least one state");
  if (local_actions.empty()) throw InputError("tabular MMDP needs at least one agent");
  for (int k : local_actions)
    if (k < 1) throw InputError("every agent needs at least one action");
  if (!(discount >= 0.0 && discount < 1.0)) throw InputError("discount must lie in [0, 1)");
  const auto nA = n_joint_actions();
  if (transition.rows() != static_cast<Eigen::Index>(n_states * nA) ||
      transition.cols() != static_cast<Eigen::Index>(n_states))
    throw InputError("transition table has wrong shape");
  for (Eigen::Index r = 0; r < transition.rows(); ++r) {
    if ((transition.row(r).array() < 0.0).any() || !transition.row(r).allFinite())
      throw InputError("transition probabilities must be finite and non-negative");
    if (std::abs(transition.row(r).sum() - 1.0) > 1e-12)
      throw InputError("transition row " + std::to_string(r) + " does not sum to 1");
  }
  if (rewards.size() != local_actions.size()) throw InputError("need one reward table per agent");
  for (const auto& R : rewards) {
    if (R.rows() != static_cast<Eigen::Index>(n_states) || R.cols() != static_cast<Eigen::Index>(nA))
      throw InputError("reward table has wrong shape");
    if (!R.allFinite()) throw InputError("rewards must be finite");
  }
}

StepOutcome<StateIndex> tabular_step(const TabularMMDP& mdp, StateIndex state,
                                     const JointAction& action, Rng& rng) {
  if (state >= mdp.n_states) throw InputError("state index out of range");
  const std::size_t a = mdp.joint_index(action);
  StepOutcome<StateIndex> out;
  out.next_state = sample_row(mdp.transition_row(state, a), rng);
  out.rewards.reserve(mdp.n_agents());
  for (const auto& R : mdp.rewards) out.rewards.push_back(R(static_cast<Eigen::Index>(state), static_cast<Eigen::Index>(a)));
  return out;
}

TabularMMDP example1_mdp(double p, double discount) {
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("p must lie in [0, 1]");
  TabularMMDP mdp;
  mdp.n_states = 2;
  mdp.local_actions = {1, 1, 1};
  mdp.discount = discount;
  mdp.transition.resize(2, 2);
  mdp.transition << p, 1.0 - p, p, 1.0 - p;
  for (int i = 1; i <= 3; ++i) {
    Mat R(2, 1);
    R << i, i - 4;
    mdp.rewards.push_back(R);
  }
  mdp.validate();
  return mdp;
}

TabularMMDP random_tabular_mdp(std::size_t n_states, std::vector<int> local_actions,
                               std::uint64_t seed, double discount) {
  Rng rng(seed);
  TabularMMDP mdp;
  mdp.n_states = n_states;
  mdp.local_actions = std::move(local_actions);
  mdp.discount = discount;
  const auto nA = mdp.n_joint_actions();
  mdp.transition.resize(static_cast<Eigen::Index>(n_states * nA), static_cast<Eigen::Index>(n_states));
  std::uniform_real_distribution<double> pos(0.05, 1.0);
  for (Eigen::Index r = 0; r < mdp.transition.rows(); ++r) {
    for (Eigen::Index c = 0; c < mdp.transition.cols(); ++c) mdp.transition(r, c) = pos(rng);
    mdp.transition.row(r) /= mdp.transition.row(r).sum();
  }
  std::uniform_real_distribution<double> rew(-1.0, 1.0);
  for (std::size_t i = 0; i < mdp.n_agents(); ++i) {
    Mat R(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(nA));
    for (Eigen::Index k = 0; k < R.size(); ++k) R(k) = rew(rng);
    mdp.rewards.push_back(std::move(R));
  }
  mdp.validate();
  return mdp;
}

std::vector<StateIndex> enumerate_states(const TabularMMDP& mdp, std::size_t cap) {
  if (mdp.n_states > cap) throw CapacityError("state space exceeds enumeration cap");
  std::vector<StateIndex> out(mdp.n_states);
  std::iota(out.begin(), out.end(), StateIndex{0});
  return out;
}

// ---------------------------------------------------------------------------
// Grid world

void GridWorldSpec::validate() const {
  if (width < 1 || height < 1) throw InputError("grid dimensions must be positive");
  if (n_agents < 1) throw InputError("grid world needs at least one agent");
  if (static_cast<std::size_t>(n_agents) > n_cells()) throw InputError("more agents than grid cells");
  if (targets.size() != static_cast<std::size_t>(n_agents) || starts.size() != static_cast<std::size_t>(n_agents))
    throw InputError("need one target and one start per agent");
  for (const auto& c : targets)
    if (!contains(c)) throw InputError("target outside grid");
  for (const auto& c : starts)
    if (!contains(c)) throw InputError("start outside grid");
  if (collision_penalty < 0.0) throw InputError("collision penalty must be non-negative");
  if (episode_len < 0) throw InputError("episode length must be non-negative");
}

GridWorldSpec make_grid_world(int width, int height, int n_agents, int episode_len,
                              double collision_penalty, std::uint64_t layout_seed) {
  GridWorldSpec spec;
  spec.width = width;
  spec.height = height;
  spec.n_agents = n_agents;
  spec.episode_len = episode_len;
  spec.collision_penalty = collision_penalty;
  if (width < 1 || height < 1 || n_agents < 1 ||
      static_cast<std::size_t>(n_agents) > spec.n_cells())
    throw InputError("invalid grid dimensions or agent count");

  Rng rng(layout_seed);
  auto draw = [&] {
    std::vector<int> cells(spec.n_cells());
    std::iota(cells.begin(), cells.end(), 0);
    std::shuffle(cells.begin(), cells.end(), rng);
    std::vector<Cell> out;
    for (int i = 0; i < n_agents; ++i) out.push_back({cells[i] % width, cells[i] / width});
    return out;
  };
  spec.starts = draw();
  spec.targets = draw();
  spec.validate();
  return spec;
}

StepOutcome<GlobalState> grid_step(const GridWorldSpec& spec, const GlobalState& state,
                                   const JointAction& action) {
  const auto n = static_cast<std::size_t>(spec.n_agents);
  if (state.positions.size() != n || action.size() != n)
    throw InputError("state/action size does not match agent count");
  StepOutcome<GlobalState> out;
  out.next_state.positions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Cell c = state.positions[i];
    if (!spec.contains(c)) throw InputError("agent position outside grid");
    Cell next = c;
    switch (action[i]) {
      case static_cast<int>(GridAction::Stay): break;
      case static_cast<int>(GridAction::North): next.y -= 1; break;
      case static_cast<int>(GridAction::South): next.y += 1; break;
      case static_cast<int>(GridAction::East): next.x += 1; break;
      case static_cast<int>(GridAction::West): next.x -= 1; break;
      default: throw InputError("invalid grid action index " + std::to_string(action[i]));
    }
    out.next_state.positions[i] = spec.contains(next) ? next : c;
  }
  out.rewards.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Cell p = out.next_state.positions[i];
    const Cell d = spec.targets[i];
    double r = -static_cast<double>(std::abs(p.x - d.x) + std::abs(p.y - d.y));
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && out.next_state.positions[j] == p) {
        r -= spec.collision_penalty;
        break;
      }
    }
    out.rewards[i] = r;
  }
  return out;
}

std::size_t grid_state_count(const GridWorldSpec& spec) {
  const std::size_t cells = spec.n_cells();
  std::size_t total = 1;
  for (int i = 0; i < spec.n_agents; ++i) {
    if (total > std::numeric_limits<std::size_t>::max() / cells) return std::numeric_limits<std::size_t>::max();
    total *= cells;
  }
  return total;
}

StateIndex encode_state(const GridWorldSpec& spec, const GlobalState& state) {
  if (grid_state_count(spec) == std::numeric_limits<std::size_t>::max())
    throw CapacityError("grid state space does not fit an index");
  StateIndex idx = 0;
  for (const auto& c : state.positions) {
    if (!spec.contains(c)) throw InputError("agent position outside grid");
    idx = idx * spec.n_cells() + static_cast<std::size_t>(c.y * spec.width + c.x);
  }
  return idx;
}

GlobalState decode_state(const GridWorldSpec& spec, StateIndex index) {
  GlobalState s;
  s.positions.resize(static_cast<std::size_t>(spec.n_agents));
  const std::size_t cells = spec.n_cells();
  for (std::size_t k = s.positions.size(); k-- > 0;) {
    const auto cell = static_cast<int>(index % cells);
    index /= cells;
    s.positions[k] = {cell % spec.width, cell / spec.width};
  }
  return s;
}

std::vector<GlobalState> enumerate_states(const GridWorldSpec& spec, std::size_t cap) {
  const std::size_t count = grid_state_count(spec);
  if (count > cap) throw CapacityError("grid state space exceeds enumeration cap");
  std::vector<GlobalState> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(decode_state(spec, k));
  return out;
}

// ---------------------------------------------------------------------------
// Environment adapters

TabularEnvironment::TabularEnvironment(TabularMMDP mdp, StateIndex initial_state)
    : mdp_(std::move(mdp)), initial_(initial_state) {
  mdp_.validate();
  if (initial_ >= mdp_.n_states) throw InputError("initial state out of range");
}

StepOutcome<StateIndex> TabularEnvironment::step(StateIndex s, const JointAction& a, Rng& rng) const {
  return tabular_step(mdp_, s, a, rng);
}

Eigen::Index TabularEnvironment::state_input_dim() const { return static_cast<Eigen::Index>(mdp_.n_states); }

Eigen::Index TabularEnvironment::state_action_input_dim() const {
  return static_cast<Eigen::Index>(mdp_.n_states * mdp_.n_joint_actions());
}

Vec TabularEnvironment::state_input(StateIndex s) const {
  Vec x = Vec::Zero(state_input_dim());
  x(static_cast<Eigen::Index>(s)) = 1.0;
  return x;
}

Vec TabularEnvironment::state_action_input(StateIndex s, const JointAction& a) const {
  Vec x = Vec::Zero(state_action_input_dim());
  x(static_cast<Eigen::Index>(s * mdp_.n_joint_actions() + mdp_.joint_index(a))) = 1.0;
  return x;
}

GridEnvironment::GridEnvironment(GridWorldSpec spec, InputEncoding encoding)
    : spec_(std::move(spec)), encoding_(encoding) {
  spec_.validate();
  if (grid_state_count(spec_) == std::numeric_limits<std::size_t>::max())
    throw CapacityError("grid state space does not fit an index");
}

StateIndex GridEnvironment::reset() const { return encode_state(spec_, GlobalState{spec_.starts}); }

StepOutcome<StateIndex> GridEnvironment::step(StateIndex s, const JointAction& a, Rng&) const {
  auto out = grid_step(spec_, decode_state(spec_, s), a);
  return {encode_state(spec_, out.next_state), std::move(out.rewards)};
}

Eigen::Index GridEnvironment::state_input_dim() const {
  const auto n = static_cast<Eigen::Index>(spec_.n_agents);
  return encoding_ == InputEncoding::OneHot ? n * static_cast<Eigen::Index>(spec_.n_cells()) : 2 * n;
}

Eigen::Index GridEnvironment::state_action_input_dim() const {
  const auto n = static_cast<Eigen::Index>(spec_.n_agents);
  return encoding_ == InputEncoding::OneHot ? n * static_cast<Eigen::Index>(spec_.n_cells()) * kGridActions
                                            : 2 * n + n * kGridActions;
}

Vec GridEnvironment::state_input(StateIndex s) const {
  const GlobalState g = decode_state(spec_, s);
  Vec x = Vec::Zero(state_input_dim());
  const auto cells = static_cast<Eigen::Index>(spec_.n_cells());
  for (std::size_t i = 0; i < g.positions.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const Cell c = g.positions[i];
    if (encoding_ == InputEncoding::OneHot) {
      x(ii * cells + c.y * spec_.width + c.x) = 1.0;
    } else {
      x(2 * ii) = spec_.width > 1 ? 2.0 * c.x / (spec_.width - 1) - 1.0 : 0.0;
      x(2 * ii + 1) = spec_.height > 1 ? 2.0 * c.y / (spec_.height - 1) - 1.0 : 0.0;
    }
  }
  return x;
}

Vec GridEnvironment::state_action_input(StateIndex s, const JointAction& a) const {
  const GlobalState g = decode_state(spec_, s);
  if (a.size() != g.positions.size()) throw InputError("joint action has wrong number of agents");
  Vec x = Vec::Zero(state_action_input_dim());
  const auto cells = static_cast<Eigen::Index>(spec_.n_cells());
  const auto n = static_cast<Eigen::Index>(g.positions.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int act = a[static_cast<std::size_t>(i)];
    if (act < 0 || act >= kGridActions) throw InputError("invalid grid action index");
    const Cell c = g.positions[static_cast<std::size_t>(i)];
    if (encoding_ == InputEncoding::OneHot) {
      x((i * cells + c.y * spec_.width + c.x) * kGridActions + act) = 1.0;
    } else {
      x(2 * i) = spec_.width > 1 ? 2.0 * c.x / (spec_.width - 1) - 1.0 : 0.0;
      x(2 * i + 1) = spec_.height > 1 ? 2.0 * c.y / (spec_.height - 1) - 1.0 : 0.0;
      x(2 * n + i * kGridActions + act) = 1.0;
    }
  }
  return x;
}

}  // namespace rcac
