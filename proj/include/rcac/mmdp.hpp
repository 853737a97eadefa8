#pragma once

// Networked multi-agent MDP environments: a generic tabular model and the
// cooperative-navigation grid world.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace rcac {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;
using StateIndex = std::size_t;
using JointAction = std::vector<int>;

inline constexpr std::size_t kDefaultStateCap = 1'000'000;

template <class State>
struct StepOutcome {
  State next_state;
  std::vector<double> rewards;  // one per agent
};

// ---------------------------------------------------------------------------
// Tabular MMDP

/// Joint actions are mixed-radix encoded with agent 0 as the most significant
/// digit. `transition` has one row per (s, a) pair at index s * n_joint + a.
struct TabularMMDP {
  std::size_t n_states = 0;
  std::vector<int> local_actions;  // action-set size per agent
  Mat transition;                  // (n_states * n_joint) x n_states
  std::vector<Mat> rewards;        // per agent, n_states x n_joint
  double discount = 0.9;

  std::size_t n_agents() const { return local_actions.size(); }
  std::size_t n_joint_actions() const;
  std::size_t joint_index(const JointAction& a) const;
  JointAction decode_joint(std::size_t index) const;
  auto transition_row(StateIndex s, std::size_t a) const { return transition.row(s * n_joint_actions() + a); }

  /// Throws InputError when an invariant is broken (row sums, finiteness, shapes).
  void validate() const;
};

StepOutcome<StateIndex> tabular_step(const TabularMMDP& mdp, StateIndex state,
                                     const JointAction& action, Rng& rng);

/// Two-state chain where every transition lands in state 0 with probability p.
/// Three agents with a single dummy action and rewards r^i(s) = i - 4s, i = 1..3.
TabularMMDP example1_mdp(double p, double discount = 0.9);

/// Dense random MDP: strictly positive transitions (irreducible, aperiodic),
/// rewards uniform in [-1, 1].
TabularMMDP random_tabular_mdp(std::size_t n_states, std::vector<int> local_actions,
                               std::uint64_t seed, double discount = 0.9);

std::vector<StateIndex> enumerate_states(const TabularMMDP& mdp,
                                         std::size_t cap = kDefaultStateCap);

// ---------------------------------------------------------------------------
// Grid world

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class GridAction : int { Stay = 0, North = 1, South = 2, East = 3, West = 4 };
inline constexpr int kGridActions = 5;

struct GridWorldSpec {
  int width = 6;
  int height = 6;
  int n_agents = 5;
  std::vector<Cell> targets;  // d^i
  std::vector<Cell> starts;   // positions at every episode reset
  int episode_len = 20;
  double collision_penalty = 1.0;

  std::size_t n_cells() const { return static_cast<std::size_t>(width) * height; }
  bool contains(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  void validate() const;
};

/// Starts and targets are each drawn uniformly without replacement from the grid
/// cells using `layout_seed`.
GridWorldSpec make_grid_world(int width, int height, int n_agents, int episode_len,
                              double collision_penalty, std::uint64_t layout_seed);

struct GlobalState {
  std::vector<Cell> positions;
  friend bool operator==(const GlobalState&, const GlobalState&) = default;
};

/// Deterministic move; off-grid moves leave the agent in place. Reward is
/// -|s'^i - d^i|_1 minus the collision penalty when another agent shares s'^i.
StepOutcome<GlobalState> grid_step(const GridWorldSpec& spec, const GlobalState& state,
                                   const JointAction& action);

/// Row-major cell index per agent, agent 0 most significant.
StateIndex encode_state(const GridWorldSpec& spec, const GlobalState& state);
GlobalState decode_state(const GridWorldSpec& spec, StateIndex index);
std::size_t grid_state_count(const GridWorldSpec& spec);  // saturates at SIZE_MAX

std::vector<GlobalState> enumerate_states(const GridWorldSpec& spec,
                                          std::size_t cap = kDefaultStateCap);

// ---------------------------------------------------------------------------
// Uniform environment view used by the training loops. States are carried as
// indices; encoders turn them into the inputs of the approximators.

enum class InputEncoding { OneHot, Coords };

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::size_t n_agents() const = 0;
  virtual int local_actions(std::size_t agent) const = 0;
  virtual StateIndex reset() const = 0;
  virtual StepOutcome<StateIndex> step(StateIndex s, const JointAction& a, Rng& rng) const = 0;

  virtual Eigen::Index state_input_dim() const = 0;
  virtual Eigen::Index state_action_input_dim() const = 0;
  virtual Vec state_input(StateIndex s) const = 0;
  virtual Vec state_action_input(StateIndex s, const JointAction& a) const = 0;
};

class TabularEnvironment final : public Environment {
 public:
  explicit TabularEnvironment(TabularMMDP mdp, StateIndex initial_state = 0);

  const TabularMMDP& mdp() const { return mdp_; }
  std::size_t n_agents() const override { return mdp_.n_agents(); }
  int local_actions(std::size_t agent) const override { return mdp_.local_actions.at(agent); }
  StateIndex reset() const override { return initial_; }
  StepOutcome<StateIndex> step(StateIndex s, const JointAction& a, Rng& rng) const override;

  Eigen::Index state_input_dim() const override;
  Eigen::Index state_action_input_dim() const override;
  Vec state_input(StateIndex s) const override;
  Vec state_action_input(StateIndex s, const JointAction& a) const override;

 private:
  TabularMMDP mdp_;
  StateIndex initial_;
};

/// OneHot: per-agent cell indicators (state) and per-agent (cell, action)
/// indicators (state-action). Coords: per-agent coordinates scaled to [-1, 1],
/// plus per-agent action indicators for the state-action input.
class GridEnvironment final : public Environment {
 public:
  GridEnvironment(GridWorldSpec spec, InputEncoding encoding);

  const GridWorldSpec& spec() const { return spec_; }
  std::size_t n_agents() const override { return static_cast<std::size_t>(spec_.n_agents); }
  int local_actions(std::size_t) const override { return kGridActions; }
  StateIndex reset() const override;
  StepOutcome<StateIndex> step(StateIndex s, const JointAction& a, Rng& rng) const override;

  Eigen::Index state_input_dim() const override;
  Eigen::Index state_action_input_dim() const override;
  Vec state_input(StateIndex s) const override;
  Vec state_action_input(StateIndex s, const JointAction& a) const override;

 private:
  GridWorldSpec spec_;
  InputEncoding encoding_;
};

}  // namespace rcac
