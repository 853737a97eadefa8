// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. `acceptance 3 4` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "rcac/error.hpp"
#include "rcac/harness.hpp"

using namespace rcac;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vec random_vec(Eigen::Index n, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec x(n);
  for (auto& v : x) v = u(rng);
  return x;
}

// ---------------------------------------------------------------------------
// 1, 2: two-state estimation

Outcome example1_containment() {
  const auto t0 = std::chrono::steady_clock::now();
  Example1Options opt;
  opt.method = EstimateMethod::Projection;
  opt.H = 1;
  const auto attacked = run_example1(opt);
  opt.adversary = false;
  const auto clean = run_example1(opt);
  const double secs = seconds_since(t0);

  bool ok = attacked.containment_violations == 0;
  double worst_box = 0.0;
  for (const auto& l : attacked.final_lambda) {
    const double r0 = l(0);
    const double r1 = l(0) + l(1);
    ok = ok && r0 >= 1.0 && r0 <= 3.0 && r1 >= -3.0 && r1 <= -1.0;
    worst_box = std::max({worst_box, std::abs(r0 - 2.0), std::abs(r1 + 2.0)});
  }
  double worst_clean = 0.0;
  for (const auto& l : clean.final_lambda)
    worst_clean = std::max({worst_clean, std::abs(l(0) - 2.0), std::abs(l(1) + 4.0)});
  ok = ok && worst_clean <= 0.1 && secs < 5.0;
  return {ok, fmt("attacked max |rbar - team mean| = %.3g (box half-width 1), clean max |lambda - [2,-4]| = %.3g, "
                  "%zu containment violations, %.2f s",
                  worst_box, worst_clean, attacked.containment_violations, secs)};
}

Outcome example1_overestimation() {
  const auto t0 = std::chrono::steady_clock::now();
  Example1Options opt;
  opt.method = EstimateMethod::TrimmedMean;
  opt.H = 1;
  const auto res = run_example1(opt);
  const double secs = seconds_since(t0);
  // Steady state: mean over the last quarter of the run.
  std::vector<double> acc(res.final_lambda.size(), 0.0);
  std::size_t count = 0;
  for (const auto& row : res.rows)
    if (row.step >= 3 * opt.steps / 4) {
      acc[row.agent] += row.rhat_s0;
      count += row.agent == 0 ? 1 : 0;
    }
  double best = -INFINITY;
  for (double a : acc) best = std::max(best, a / static_cast<double>(count));
  return {best > 3.0 && secs < 5.0, fmt("largest steady-state rbar(0) = %.4g (threshold 3), %.2f s", best, secs)};
}

// ---------------------------------------------------------------------------
// 3, 4: tabular fixed points and consensus

struct TabularRun {
  double err_v = 0.0;
  double err_lambda = 0.0;
  double disagreement_v = 0.0;
  double disagreement_lambda = 0.0;
};

/// Each node hears itself and its two predecessors; uniform weights make the
/// mixing matrix doubly stochastic without the graph being complete.
std::filesystem::path circulant_edge_list(std::size_t n) {
  const auto path = std::filesystem::temp_directory_path() / ("rcac_acceptance_circulant_" + std::to_string(n) + ".txt");
  std::ofstream out(path);
  for (std::size_t i = 0; i < n; ++i) out << (i + n - 1) % n << ' ' << i << '\n' << (i + n - 2) % n << ' ' << i << '\n';
  return path;
}

TrainConfig tabular_base(std::size_t n_states, std::vector<int> actions, std::uint64_t seed) {
  TrainConfig c;
  c.algorithm = Algorithm::Alg1;
  c.environment.kind = EnvironmentConfig::Kind::TabularRandom;
  c.environment.n_states = n_states;
  c.environment.local_actions = std::move(actions);
  c.environment.mdp_seed = seed;
  c.n_agents = c.environment.local_actions.size();
  c.graph.kind = GraphConfig::Kind::File;
  c.graph.path = circulant_edge_list(c.n_agents);
  c.gamma = 0.7;
  c.alpha_v = Schedule::diminishing(1.0, 75.0, 1.0);
  c.alpha_lambda = Schedule::diminishing(1.0, 75.0, 1.0);
  c.alpha_theta = Schedule::diminishing(0.01, 75.0, 1.0);
  c.train_actor = false;
  c.policy_init_scale = 0.0;
  c.episodes = 1;
  c.steps_per_episode = 500000;
  c.eval_every = 0;
  c.record_rounds = false;
  c.seed = seed + 1000;
  return c;
}

/// Product policy the agents actually followed, rebuilt from their parameters.
Mat followed_policy(const TabularMMDP& mdp, const RunMetrics& m) {
  std::vector<Mat> local;
  for (std::size_t i = 0; i < mdp.n_agents(); ++i) {
    const int A = mdp.local_actions[i];
    auto pol = SoftmaxPolicy::zeros(m.final_theta[i].size());
    pol.theta = m.final_theta[i];
    Mat pi(static_cast<Eigen::Index>(mdp.n_states), A);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      const Vec u = Vec::Unit(static_cast<Eigen::Index>(mdp.n_states), static_cast<Eigen::Index>(s));
      pi.row(static_cast<Eigen::Index>(s)) = policy_probs(pol, action_block_features(u, A, false)).transpose();
    }
    local.push_back(pi);
  }
  return joint_policy(mdp, local);
}

std::optional<std::vector<TabularRun>> g_tabular;
double g_tabular_secs = 0.0;

const std::vector<TabularRun>& tabular_runs() {
  if (g_tabular) return *g_tabular;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::vector<int>> actions{{2, 2, 1, 1}, {4, 1, 1, 1}, {2, 1, 1, 1}, {1, 1, 1, 1}, {1, 2, 1, 2}};
  std::vector<TabularRun> runs(10);
  std::vector<std::exception_ptr> errors(10);
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < 10; ++k) {
    try {
      const TrainConfig cfg = tabular_base(5 + static_cast<std::size_t>(k) * 15 / 9, actions[k % 5], 7 + k);
      const auto built = build_environment(cfg);
      const auto m = run_training(cfg);
      const TabularMMDP& mdp = *built.mdp;
      const auto fm = FeatureMap::one_hot(mdp);
      const auto oracle = build_oracle(mdp, fm, followed_policy(mdp, m));
      const Vec v_star = solve_critic_fixed_point(oracle, cfg.gamma);
      const Vec l_star = solve_reward_fixed_point(oracle);
      TabularRun r;
      for (std::size_t i = 0; i < m.final_v.size(); ++i) {
        r.err_v = std::max(r.err_v, (m.final_v[i] - v_star).lpNorm<Eigen::Infinity>());
        r.err_lambda = std::max(r.err_lambda, (m.final_lambda[i] - l_star).lpNorm<Eigen::Infinity>());
      }
      r.disagreement_v = m.episodes.back().disagreement_v;
      r.disagreement_lambda = m.episodes.back().disagreement_lambda;
      std::fprintf(stderr, "  mdp %d: |S|=%zu |A|=%zu  error v %.3g lambda %.3g  disagreement v %.3g lambda %.3g  min d(s,a) %.2g\n", k,
                   mdp.n_states, mdp.n_joint_actions(), r.err_v, r.err_lambda, r.disagreement_v, r.disagreement_lambda,
                   oracle.d_pair.minCoeff());
      runs[k] = r;
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  g_tabular_secs = seconds_since(t0);
  g_tabular = runs;
  return *g_tabular;
}

Outcome fixed_points() {
  const auto& runs = tabular_runs();
  double ev = 0.0;
  double el = 0.0;
  for (const auto& r : runs) {
    ev = std::max(ev, r.err_v);
    el = std::max(el, r.err_lambda);
  }
  return {ev <= 1e-2 && el <= 1e-2 && g_tabular_secs < 120.0,
          fmt("10 MDPs, max inf-norm error v %.3g, lambda %.3g (tolerance 1e-2), %.1f s", ev, el, g_tabular_secs)};
}

Outcome consensus() {
  const auto& runs = tabular_runs();
  double dv = 0.0;
  double dl = 0.0;
  for (const auto& r : runs) {
    dv = std::max(dv, r.disagreement_v);
    dl = std::max(dl, r.disagreement_lambda);
  }

  TrainConfig c = tabular_base(8, {2, 1, 1, 1, 2}, 3);
  c.algorithm = Algorithm::Alg2;
  c.graph.kind = GraphConfig::Kind::Complete;
  c.H = 1;
  const auto built = build_environment(c);
  const auto& mdp = *built.mdp;
  const Eigen::Index L = static_cast<Eigen::Index>(mdp.n_states);
  const Eigen::Index M = L * static_cast<Eigen::Index>(mdp.n_joint_actions());
  c.adversaries.push_back({4, AdversaryKind::Faulty, LinearParams{Vec::Constant(L, 5.0), Vec::Constant(M, -5.0)}});
  const bool robust = is_zeta_robust(build_graph(c), 3);
  const auto m = run_training(c);
  const double bv = m.episodes.back().disagreement_v;
  const double bl = m.episodes.back().disagreement_lambda;
  return {dv < 1e-3 && dl < 1e-3 && robust && bv < 1e-2 && bl < 1e-2,
          fmt("clean max disagreement v %.3g, lambda %.3g (< 1e-3); with a faulty node on a %s3-robust graph: "
              "v %.3g, lambda %.3g (< 1e-2)",
              dv, dl, robust ? "" : "NOT ", bv, bl)};
}

// ---------------------------------------------------------------------------
// 5: containment in full grid runs

Outcome containment() {
  TrainConfig base;
  base.algorithm = Algorithm::Alg2;
  base.environment.layout_seed = 4;
  base.n_agents = 5;
  base.H = 1;
  base.episodes = 200;
  base.steps_per_episode = 20;
  base.eval_every = 0;
  base.alpha_v = Schedule::constant(0.05);
  base.alpha_lambda = Schedule::constant(0.05);
  base.alpha_theta = Schedule::constant(0.01);

  TrainHooks hooks;
  hooks.linear_attack = [](const AttackContext& ctx) {
    std::vector<Message> out;
    for (std::size_t k = 0; k < ctx.recipients.size(); ++k) {
      const double sign = (ctx.recipients[k] + ctx.round) % 2 == 0 ? 1.0 : -1.0;
      out.push_back({ctx.sender, ctx.honest->v.array() + sign * 1e3 * static_cast<double>(k + 1),
                     ctx.honest->lambda.array() - sign * 1e3});
    }
    return out;
  };

  struct Scenario {
    const char* name;
    std::vector<AdversaryConfig> adversaries;
    bool custom;
    std::size_t H;
  };
  const std::vector<Scenario> scenarios{
      {"greedy", {{4, AdversaryKind::Greedy, {}}}, false, 1},
      {"faulty", {{4, AdversaryKind::Faulty, {}}}, false, 1},
      {"strategic", {{4, AdversaryKind::Strategic, {}}}, false, 1},
      {"custom", {}, true, 1},
      {"strategic+custom", {{3, AdversaryKind::Strategic, {}}}, true, 2},
  };
  std::size_t checks = 0;
  std::size_t violations = 0;
  std::size_t degenerate = 0;
  for (const auto& sc : scenarios) {
    TrainConfig c = base;
    c.H = sc.H;
    c.adversaries = sc.adversaries;
    TrainHooks h = hooks;
    if (sc.custom) h.custom_nodes = {4};
    const auto m = run_training(c, sc.custom ? h : TrainHooks{});
    checks += m.containment_checks;
    violations += m.containment_violations;
    degenerate += m.degenerate_events;
  }
  return {checks > 0 && violations == 0,
          fmt("%zu scenarios, %zu of %zu aggregated errors outside the cooperative hull, %zu skipped",
              scenarios.size(), violations, checks, degenerate)};
}

// ---------------------------------------------------------------------------
// 6: robustness analyzer

Outcome robustness() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto k5 = CommGraph::complete(5);
  const auto ring = CommGraph::directed_ring(4);
  bool ok = is_zeta_robust(k5, 3) && is_zeta_robust(ring, 1) && !is_zeta_robust(ring, 2);
  std::size_t graphs = 0;
  std::size_t mismatches = 0;
  for (std::size_t n = 2; n <= 4; ++n)
    for (const auto& adj : oracle::nonisomorphic_digraphs(n)) {
      ++graphs;
      const auto g = oracle::graph_of(adj);
      for (std::size_t z = 1; z <= n; ++z)
        if (is_zeta_robust(g, z) != oracle::robust_by_definition(adj, z)) ++mismatches;
    }
  const double secs = seconds_since(t0);
  ok = ok && mismatches == 0 && secs < 60.0;
  return {ok, fmt("K5 3-robust, directed 4-cycle 1- but not 2-robust; %zu digraphs, %zu mismatches, %.2f s", graphs,
                  mismatches, secs)};
}

// ---------------------------------------------------------------------------
// 7: gradients

Outcome gradients() {
  Rng rng(77);
  double worst_softmax = 0.0;
  for (int c = 0; c < 100; ++c) {
    const int A = 2 + c % 4;
    const int d = 1 + c % 7;
    Mat x(A, d);
    for (int a = 0; a < A; ++a) x.row(a) = random_vec(d, rng).transpose();
    auto pol = SoftmaxPolicy::zeros(d);
    pol.theta = random_vec(d, rng, 2.0);
    const int action = c % A;
    auto logp = [&](const Vec& th) {
      auto p = pol;
      p.theta = th;
      return std::log(policy_probs(p, x)(action));
    };
    worst_softmax = std::max(worst_softmax, oracle::max_relative_error(log_policy_grad(pol, x, action),
                                                                       oracle::numeric_gradient(logp, pol.theta, 1e-5), 1e-6));
  }
  double worst_mlp = 0.0;
  std::uniform_int_distribution<int> width(1, 6);
  for (int c = 0; c < 100; ++c) {
    std::vector<int> sizes{width(rng)};
    for (int l = 0; l < c % 3; ++l) sizes.push_back(width(rng));
    sizes.push_back(1 + c % 3);
    const Mlp net = Mlp::uniform_init(sizes, rng);
    const Vec x = random_vec(sizes.front(), rng);
    const int k = c % net.output_dim();
    auto f = [&](const Vec& p) {
      Mlp copy = net;
      copy.params() = p;
      return copy.forward(x)(k);
    };
    worst_mlp = std::max(worst_mlp, oracle::max_relative_error(net.backward(x, k),
                                                               oracle::numeric_gradient(f, net.params(), 1e-5), 1e-6));
  }
  return {worst_softmax <= 1e-5 && worst_mlp <= 1e-5,
          fmt("max relative error softmax %.3g, MLP %.3g (tolerance 1e-5)", worst_softmax, worst_mlp)};
}

// ---------------------------------------------------------------------------
// 8: degenerate cases

bool identical(const RunMetrics& a, const RunMetrics& b) {
  if (a.episodes.size() != b.episodes.size() || a.final_v.size() != b.final_v.size()) return false;
  for (std::size_t k = 0; k < a.episodes.size(); ++k)
    if (a.episodes[k].returns != b.episodes[k].returns) return false;
  for (std::size_t i = 0; i < a.final_v.size(); ++i)
    if (a.final_v[i] != b.final_v[i] || a.final_lambda[i] != b.final_lambda[i] || a.final_theta[i] != b.final_theta[i])
      return false;
  return true;
}

double rel_diff(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

Outcome degeneracy() {
  TrainConfig tab = tabular_base(9, {2, 2, 1}, 5);
  tab.train_actor = true;
  tab.policy_init_scale = 0.0;
  tab.steps_per_episode = 50;
  tab.episodes = 40;
  tab.eval_every = 20;
  TrainConfig grid;
  grid.environment.layout_seed = 3;
  grid.n_agents = 5;
  grid.episodes = 20;
  grid.eval_every = 10;

  bool same12 = true;
  for (TrainConfig c : {tab, grid}) {
    c.algorithm = Algorithm::Alg1;
    const auto a1 = run_training(c);
    c.algorithm = Algorithm::Alg2;
    c.H = 0;
    same12 = same12 && identical(a1, run_training(c));
  }

  // A network without hidden layers is [W b]: the linear model on [u; 1].
  double worst = 0.0;
  bool same_returns = true;
  for (TrainConfig c : {tab, grid}) {
    c.algorithm = Algorithm::Alg2;
    c.H = 0;
    c.feature_bias = true;
    c.environment.encoding = InputEncoding::OneHot;
    const auto lin = run_training(c);
    c.algorithm = Algorithm::Alg3;
    c.network.hidden = {};
    c.network.zero_init = true;
    c.network.grad_clip = 0.0;
    c.batch_size = 1;
    c.epochs_per_episode = 1;
    c.actor_order = ActorOrder::BeforeEpochs;
    const auto deep = run_training(c);
    for (std::size_t k = 0; k < lin.episodes.size(); ++k)
      same_returns = same_returns && k < deep.episodes.size() && lin.episodes[k].returns == deep.episodes[k].returns;
    for (std::size_t i = 0; i < lin.final_v.size(); ++i) {
      worst = std::max(worst, rel_diff(deep.final_v[i], lin.final_v[i]));
      worst = std::max(worst, rel_diff(deep.final_lambda[i], lin.final_lambda[i]));
      const Mlp& actor = deep.final_actor_nets[i];
      const Eigen::Index A = actor.output_dim();
      const Eigen::Index d = actor.input_dim();
      Vec theta(A * (d + 1));
      for (Eigen::Index a = 0; a < A; ++a) {
        theta.segment(a * (d + 1), d) = actor.params().segment(a * d, d);
        theta(a * (d + 1) + d) = actor.params()(A * d + a);
      }
      worst = std::max(worst, rel_diff(theta, lin.final_theta[i]));
    }
  }
  return {same12 && same_returns && worst <= 1e-9,
          fmt("alg2(H=0) %s alg1; alg3 without hidden layers: returns %s, max relative parameter gap %.3g",
              same12 ? "bit-identical to" : "DIFFERS from", same_returns ? "identical" : "differ", worst)};
}

// ---------------------------------------------------------------------------
// 9: grid scenarios with neural approximators

TrainConfig scenario_config(std::size_t H, std::optional<AdversaryKind> attack) {
  TrainConfig c;
  c.algorithm = Algorithm::Alg3;
  c.environment.width = 6;
  c.environment.height = 6;
  c.environment.layout_seed = 1;
  c.n_agents = 5;
  c.H = H;
  c.gamma = 0.9;
  c.alpha_v = Schedule::constant(0.01);
  c.alpha_lambda = Schedule::constant(0.01);
  c.alpha_theta = Schedule::constant(0.002);
  c.episodes = 3000;
  c.steps_per_episode = 20;
  c.epochs_per_episode = 20;
  c.eval_every = 0;
  c.record_rounds = false;
  if (attack) c.adversaries.push_back({4, *attack, {}});
  return c;
}

Outcome scenarios() {
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  std::map<std::string, double> score;
  double worst_secs = 0.0;
  auto run = [&](const std::string& name, std::size_t H, std::optional<AdversaryKind> attack) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sweep = run_sweep(scenario_config(H, attack), seeds, true);
    worst_secs = std::max(worst_secs, seconds_since(t0) / static_cast<double>(seeds.size()));
    double acc = 0.0;
    for (const auto& r : sweep.runs) acc += r.final_team_return(500);
    score[name + "/H" + std::to_string(H)] = acc / static_cast<double>(seeds.size());
    std::fprintf(stderr, "  %-10s H=%zu  %.3f\n", name.c_str(), H, acc / static_cast<double>(seeds.size()));
  };
  for (std::size_t H : {0, 1}) run("coop", H, std::nullopt);
  const std::vector<std::pair<std::string, AdversaryKind>> attacks{
      {"greedy", AdversaryKind::Greedy}, {"faulty", AdversaryKind::Faulty}, {"strategic", AdversaryKind::Strategic}};
  for (const auto& [name, kind] : attacks)
    for (std::size_t H : {0, 1}) run(name, H, kind);

  const double c0 = score["coop/H0"];
  const double c1 = score["coop/H1"];
  const double gap = std::abs(c0 - c1) / std::max(std::abs(c0), std::abs(c1));
  bool ok = gap <= 0.15;
  std::ostringstream d;
  d << fmt("coop H0 %.2f vs H1 %.2f (gap %.1f%%)", c0, c1, 100.0 * gap);
  for (const auto& [name, kind] : attacks) {
    const double h0 = score[name + "/H0"];
    const double h1 = score[name + "/H1"];
    ok = ok && h1 > h0;
    d << fmt("; %s H0 %.2f H1 %.2f", name.c_str(), h0, h1);
  }
  ok = ok && score["strategic/H0"] < c0;
  d << fmt("; %.0f s per scenario-seed at most", worst_secs);
  return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// 10: exact error recovery

Outcome exact_projection() {
  Rng rng(1010);
  double worst_linear = 0.0;
  double worst_deep = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const Eigen::Index d = 1 + c % 12;
    const Vec own = random_vec(d, rng, 3.0);
    Vec phi = random_vec(d, rng);
    if (phi.norm() < 1e-3) phi(0) = 1.0;
    const double alpha = 1e-3 + std::abs(random_vec(1, rng)(0));
    const double eps = random_vec(1, rng, 10.0)(0);
    const double got = project_error(own + alpha * eps * phi, own, phi, alpha);
    worst_linear = std::max(worst_linear, std::abs(got - eps) / std::max(std::abs(eps), 1e-8));

    const Mlp net = Mlp::uniform_init({3, 1 + c % 8, 1 + c % 5, 1}, rng);
    const Vec x = random_vec(3, rng);
    Mlp::Cache cache;
    net.forward_batch(Mat(x), cache);
    Vec g(net.output_count());
    g << net.last_hidden(cache).col(0), 1.0;
    Mlp received = net;
    received.output_block() += alpha * eps * g;
    const double got_deep = deep_project_error(net, received, x, alpha);
    worst_deep = std::max(worst_deep, std::abs(got_deep - eps) / std::max(std::abs(eps), 1e-8));
  }
  return {worst_linear <= 1e-12 && worst_deep <= 1e-10,
          fmt("max relative error linear %.3g (<= 1e-12), network %.3g (<= 1e-10)", worst_linear, worst_deep)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{
      example1_containment, example1_overestimation, fixed_points, consensus, containment,
      robustness,           gradients,               degeneracy,   scenarios, exact_projection};
  std::set<int> only;
  for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %2d: %s  %s  [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
