#pragma once

// Training loops and the metrics they export.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rcac/config.hpp"
#include "rcac/deep.hpp"

namespace rcac {

struct EpisodeRecord {
  std::size_t episode = 0;
  std::vector<double> returns;  // per agent, undiscounted
  double disagreement_v = 0.0;
  double disagreement_lambda = 0.0;
};

struct EvalRecord {
  std::size_t episode = 0;
  double mean_team_return = 0.0;
  double stddev = 0.0;
};

struct RunMetrics {
  std::vector<bool> cooperative;  // per agent
  std::vector<EpisodeRecord> episodes;
  std::vector<double> round_disagreement_v;
  std::vector<double> round_disagreement_lambda;
  std::vector<EvalRecord> evaluations;
  std::size_t rounds = 0;
  std::size_t containment_checks = 0;
  std::size_t containment_violations = 0;
  std::size_t degenerate_events = 0;
  bool robustness_checked = false;
  bool robustness_ok = true;
  bool stopped_early = false;
  // Final models: linear vectors, or flattened network parameters.
  std::vector<Vec> final_v;
  std::vector<Vec> final_lambda;
  std::vector<Vec> final_theta;
  std::vector<Mlp> final_critic_nets;  // alg3 only
  std::vector<Mlp> final_reward_nets;
  std::vector<Mlp> final_actor_nets;

  std::vector<std::size_t> cooperative_ids() const;
  /// Mean over cooperative agents and over the last `window` episodes.
  double final_team_return(std::size_t window) const;
};

/// Optional code-level extensions of a run.
struct TrainHooks {
  AttackHook linear_attack;  // drives every `custom` adversary of alg1/alg2
  DeepAttackHook deep_attack;
  /// Extra adversaries with custom behavior: node ids.
  std::vector<std::size_t> custom_nodes;
};

struct BuiltEnvironment {
  std::unique_ptr<Environment> env;
  std::optional<TabularMMDP> mdp;  // tabular kinds only
};
BuiltEnvironment build_environment(const TrainConfig& config);
CommGraph build_graph(const TrainConfig& config);

RunMetrics run_training(const TrainConfig& config, const TrainHooks& hooks = {});

struct SweepResult {
  std::vector<std::uint64_t> seeds;
  std::vector<RunMetrics> runs;
  std::vector<EvalRecord> evaluations;  // mean and stddev across seeds
};
/// Independent seeds run in parallel; each run is identical to a serial one.
SweepResult run_sweep(const TrainConfig& config, const std::vector<std::uint64_t>& seeds, bool parallel = true);

// ---------------------------------------------------------------------------

/// Action probabilities of `agent` in state `s`.
using PolicyFn = std::function<Vec(std::size_t agent, StateIndex s)>;

struct PolicyEvaluation {
  Vec mean_return;  // per agent
  Mat returns;      // rollouts x agents
};
/// Monte-Carlo rollouts from env.reset(), sum_t gamma^t r_{t+1} per agent.
PolicyEvaluation evaluate_policy(const Environment& env, const PolicyFn& policy, std::size_t rollouts,
                                 std::size_t steps, std::uint64_t seed, double gamma = 1.0);

// ---------------------------------------------------------------------------

enum class EstimateMethod { Projection, TrimmedMean };

struct Example1Options {
  double p = 0.5;
  double alpha = 0.05;
  EstimateMethod method = EstimateMethod::Projection;
  std::size_t H = 1;
  std::size_t steps = 20000;
  std::uint64_t seed = 0;
  bool adversary = true;
  Vec payload = (Vec(2) << 5.0, -10.0).finished();
};

struct Example1Row {
  std::size_t step = 0;
  std::size_t agent = 0;
  double rhat_s0 = 0.0;
  double rhat_s1 = 0.0;
};

struct Example1Result {
  std::vector<Example1Row> rows;  // cooperative agents, every step
  std::vector<Vec> final_lambda;
  std::size_t containment_checks = 0;
  std::size_t containment_violations = 0;
};

Example1Result run_example1(const Example1Options& opt);

// ---------------------------------------------------------------------------
// CSV export, 17 significant digits.

void write_training_csv(const RunMetrics& m, const std::filesystem::path& path);
void write_evaluation_csv(const std::vector<EvalRecord>& evals, const std::filesystem::path& path);
void write_example1_csv(const Example1Result& r, const std::filesystem::path& path);
/// training.csv and evaluation.csv inside `dir`.
void export_csv(const RunMetrics& m, const std::filesystem::path& dir);

}  // namespace rcac
