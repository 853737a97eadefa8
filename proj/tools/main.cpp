// Command-line front end: train, estimate, robustness, oracle.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rcac/config.hpp"
#include "rcac/error.hpp"
#include "rcac/harness.hpp"
#include "rcac/linear.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericError = 3;

std::vector<double> to_std(const rcac::Vec& v) { return {v.data(), v.data() + v.size()}; }

void write_checkpoints(const rcac::RunMetrics& m, std::uint64_t seed, const fs::path& dir) {
  for (std::size_t i = 0; i < m.final_critic_nets.size(); ++i) {
    const std::string stem = "agent" + std::to_string(i);
    rcac::save_checkpoint(m.final_critic_nets[i], seed, dir / (stem + "_critic.ckpt"));
    rcac::save_checkpoint(m.final_reward_nets[i], seed, dir / (stem + "_reward.ckpt"));
    rcac::save_checkpoint(m.final_actor_nets[i], seed, dir / (stem + "_actor.ckpt"));
  }
}

void write_run(const rcac::RunMetrics& m, std::uint64_t seed, const fs::path& dir) {
  rcac::export_csv(m, dir);
  write_checkpoints(m, seed, dir);
}

void summarize(const rcac::RunMetrics& m, std::uint64_t seed) {
  std::printf("seed %llu: %zu episodes, final team return %.6g, containment %zu/%zu violations, %zu degenerate\n",
              static_cast<unsigned long long>(seed), m.episodes.size(), m.final_team_return(100),
              m.containment_violations, m.containment_checks, m.degenerate_events);
}

int cmd_train(const fs::path& config_path, const fs::path& out, std::optional<std::uint64_t> seed) {
  rcac::TrainConfig cfg = rcac::load_config(config_path);
  if (seed) {
    cfg.seed = *seed;
    cfg.seeds.clear();
  }
  fs::create_directories(out);
  {
    std::ofstream f(out / "config.json");
    f << rcac::to_json(cfg).dump(2) << '\n';
  }
  if (cfg.seeds.empty()) {
    const auto m = rcac::run_training(cfg);
    write_run(m, cfg.seed, out);
    summarize(m, cfg.seed);
    return kOk;
  }
  const auto sweep = rcac::run_sweep(cfg, cfg.seeds);
  for (std::size_t k = 0; k < sweep.runs.size(); ++k) {
    const auto dir = out / ("seed_" + std::to_string(sweep.seeds[k]));
    write_run(sweep.runs[k], sweep.seeds[k], dir);
    summarize(sweep.runs[k], sweep.seeds[k]);
  }
  rcac::write_evaluation_csv(sweep.evaluations, out / "evaluation.csv");
  return kOk;
}

int cmd_estimate(const std::string& method, std::size_t H, std::size_t steps, double p, double alpha,
                 std::uint64_t seed, bool no_adversary, const fs::path& out) {
  rcac::Example1Options opt;
  opt.method = method == "projection" ? rcac::EstimateMethod::Projection : rcac::EstimateMethod::TrimmedMean;
  opt.H = H;
  opt.steps = steps;
  opt.p = p;
  opt.alpha = alpha;
  opt.seed = seed;
  opt.adversary = !no_adversary;
  const auto res = rcac::run_example1(opt);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  rcac::write_example1_csv(res, out);
  for (std::size_t i = 0; i < res.final_lambda.size(); ++i) {
    const auto& l = res.final_lambda[i];
    std::printf("agent %zu: rhat(0) = %.6f, rhat(1) = %.6f\n", i, l(0), l(0) + l(1));
  }
  if (opt.method == rcac::EstimateMethod::Projection)
    std::printf("containment violations: %zu of %zu\n", res.containment_violations, res.containment_checks);
  return kOk;
}

int cmd_robustness(const fs::path& graph_path, std::size_t zeta) {
  const auto g = rcac::load_edge_list(graph_path);
  const bool robust = rcac::is_zeta_robust(g, zeta);
  std::printf("nodes: %zu\n%zu-robust: %s\nmax robustness: %zu\n", g.n_nodes(), zeta, robust ? "yes" : "no",
              rcac::max_robustness(g));
  return kOk;
}

int cmd_oracle(const fs::path& mdp_path, std::optional<double> gamma) {
  auto file = rcac::load_mdp_file(mdp_path);
  const double g = gamma.value_or(file.mdp.discount);
  if (!(g >= 0.0 && g < 1.0)) throw rcac::ConfigError("gamma", "must lie in [0, 1)");
  const auto features = rcac::FeatureMap::one_hot(file.mdp);
  const auto policy = rcac::joint_policy(file.mdp, file.policy);
  const auto oracle = rcac::build_oracle(file.mdp, features, policy);
  const auto v = rcac::solve_critic_fixed_point(oracle, g);
  const auto lambda = rcac::solve_reward_fixed_point(oracle);
  json out = {{"gamma", g},
              {"stationary_distribution", to_std(oracle.d_state)},
              {"v", to_std(v)},
              {"lambda", to_std(lambda)},
              {"critic_residual", rcac::critic_fixed_point_residual(oracle, g, v).lpNorm<Eigen::Infinity>()},
              {"reward_residual", rcac::reward_fixed_point_residual(oracle, lambda).lpNorm<Eigen::Infinity>()}};
  std::cout << out.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resilient consensus actor-critic simulator"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train agents from a JSON config");
  fs::path config_path, out_dir;
  std::optional<std::uint64_t> seed;
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--seed", seed, "override the config seed");

  auto* estimate = app.add_subcommand("estimate", "two-state team-reward estimation benchmark");
  std::string method;
  std::size_t H = 1;
  std::size_t steps = 20000;
  double p = 0.5;
  double alpha = 0.05;
  std::uint64_t est_seed = 0;
  bool no_adversary = false;
  fs::path est_out;
  estimate->add_option("--method", method, "aggregation")->required()->check(CLI::IsMember({"projection", "trimmed"}));
  estimate->add_option("--H", H, "trimming parameter")->required();
  estimate->add_option("--steps", steps, "number of steps")->required();
  estimate->add_option("--p", p, "probability of state 0")->required();
  estimate->add_option("--alpha", alpha, "step size")->required();
  estimate->add_option("--out", est_out, "CSV output file")->required();
  estimate->add_option("--seed", est_seed, "random seed");
  estimate->add_flag("--no-adversary", no_adversary, "omit the faulty agent");

  auto* robustness = app.add_subcommand("robustness", "exhaustive graph robustness check");
  fs::path graph_path;
  std::size_t zeta = 1;
  robustness->add_option("--graph", graph_path, "edge-list file")->required();
  robustness->add_option("--zeta", zeta, "robustness parameter")->required();

  auto* oracle = app.add_subcommand("oracle", "closed-form critic and reward fixed points");
  fs::path mdp_path;
  std::optional<double> gamma;
  oracle->add_option("--mdp", mdp_path, "MDP JSON file")->required();
  oracle->add_option("--gamma", gamma, "discount factor (defaults to the file's)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*train) return cmd_train(config_path, out_dir, seed);
    if (*estimate) return cmd_estimate(method, H, steps, p, alpha, est_seed, no_adversary, est_out);
    if (*robustness) return cmd_robustness(graph_path, zeta);
    if (*oracle) return cmd_oracle(mdp_path, gamma);
  } catch (const rcac::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumericError;
  } catch (const rcac::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const rcac::InputError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kConfigError;
  } catch (const rcac::CapacityError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kConfigError;
  } catch (const rcac::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kOk;
}
