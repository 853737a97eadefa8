#pragma once

// Training configuration, step-size schedules and JSON loading. The file
// format is documented in README.md; unknown keys are rejected.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rcac/deep.hpp"
#include "rcac/consensus.hpp"
#include "rcac/mmdp.hpp"

namespace rcac {

struct Schedule {
  enum class Kind { Constant, Diminishing };
  Kind kind = Kind::Constant;
  double a = 0.01;
  double b = 1.0;
  double p = 1.0;

  static Schedule constant(double a) { return {Kind::Constant, a, 1.0, 1.0}; }
  static Schedule diminishing(double a, double b, double p) { return {Kind::Diminishing, a, b, p}; }
  /// Rejects non-positive a or b and exponents outside (0.5, 1].
  void validate(const std::string& field) const;
};

/// Constant: a. Diminishing: a / (1 + t/b)^p.
double step_schedule(const Schedule& s, std::size_t t);

/// The actor must run on the slower timescale when the critic-side steps
/// diminish: larger exponent, or equal exponent and smaller scale.
void validate_timescales(const Schedule& actor, const Schedule& critic, const Schedule& reward);

enum class Algorithm { Alg1, Alg2, Alg3 };
enum class ConsensusPer { Epoch, Sample };
enum class ActorOrder { BeforeEpochs, AfterEpochs };

struct EnvironmentConfig {
  enum class Kind { Grid, TabularRandom, TabularFile, Example1 };
  Kind kind = Kind::Grid;
  // grid
  int width = 6;
  int height = 6;
  int n_agents = 5;
  double collision_penalty = 1.0;
  std::uint64_t layout_seed = 0;
  std::vector<Cell> targets;  // empty: drawn from layout_seed
  std::vector<Cell> starts;
  std::optional<InputEncoding> encoding;  // default: one-hot for alg1/2, coordinates for alg3
  // tabular
  std::size_t n_states = 5;
  std::vector<int> local_actions;
  std::uint64_t mdp_seed = 0;
  std::filesystem::path path;
  StateIndex initial_state = 0;
  double example1_p = 0.5;
};

struct GraphConfig {
  enum class Kind { Complete, Ring, File };
  Kind kind = Kind::Complete;
  std::filesystem::path path;
};

struct AdversaryConfig {
  std::size_t node = 0;
  AdversaryKind kind = AdversaryKind::Greedy;
  std::optional<LinearParams> payload;  // faulty, linear algorithms only
};

struct NetworkConfig {
  std::vector<int> hidden{30, 30};
  double slope = 0.01;
  bool zero_init = false;
  bool shared_init = false;
  double grad_clip = 1.0;  // cap on the local SGD gradient norm, 0 disables
};

struct EarlyStopConfig {
  std::size_t window = 0;  // 0 disables
  double disagreement_tol = 1e-6;
  double return_tol = 1e-3;
};

struct TrainConfig {
  Algorithm algorithm = Algorithm::Alg2;
  EnvironmentConfig environment;
  GraphConfig graph;
  std::size_t n_agents = 5;
  std::vector<AdversaryConfig> adversaries;
  std::size_t H = 0;
  double gamma = 0.9;
  Schedule alpha_v = Schedule::constant(0.01);
  Schedule alpha_lambda = Schedule::constant(0.01);
  Schedule alpha_theta = Schedule::constant(0.002);
  std::size_t episodes = 100;
  std::size_t steps_per_episode = 20;
  std::size_t epochs_per_episode = 1;
  std::size_t batch_size = 0;  // 0: one batch per episode
  std::size_t eval_every = 100;
  std::size_t eval_rollouts = 10;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // sweep; empty: single run with `seed`
  bool train_actor = true;
  bool feature_bias = false;
  double policy_init_scale = 0.0;  // theta ~ U[-scale, scale]
  double actor_bound = 50.0;
  NetworkConfig network;
  ConsensusPer consensus_per = ConsensusPer::Epoch;
  BatchReduction actor_reduction = BatchReduction::Mean;
  ActorOrder actor_order = ActorOrder::AfterEpochs;
  EarlyStopConfig early_stop;
  bool parallel_agents = false;
  bool record_rounds = true;

  /// Throws ConfigError naming the first offending field.
  void validate() const;
};

TrainConfig parse_config(const nlohmann::json& j);
TrainConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const TrainConfig& c);

std::string to_string(Algorithm a);

/// MDP file: {"n_states", "local_actions", "transition", "rewards", "discount",
/// optional "policy"}; see README.md.
struct MdpFile {
  TabularMMDP mdp;
  std::vector<Mat> policy;  // per agent |S| x |A^i|; uniform when absent
};
MdpFile parse_mdp_json(const nlohmann::json& j);
MdpFile load_mdp_file(const std::filesystem::path& path);

}  // namespace rcac
