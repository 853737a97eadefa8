#include "rcac/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include <spdlog/spdlog.h>

#include "rcac/error.hpp"

namespace rcac {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix(splitmix(seed) ^ stream); }

int sample_action(const Vec& probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    acc += probs(k);
    if (x < acc) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size() - 1);
}

/// f(k) for k in [0, count), optionally across OpenMP threads. Exceptions are
/// rethrown on the calling thread.
template <class F>
void for_each_index(std::size_t count, bool parallel, F&& f) {
  if (!parallel) {
    for (std::size_t k = 0; k < count; ++k) f(k);
    return;
  }
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (long long k = 0; k < static_cast<long long>(count); ++k) {
    try {
      f(static_cast<std::size_t>(k));
    } catch (...) {
#pragma omp critical(rcac_for_each_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

Vec with_bias(const Vec& u, bool bias) {
  if (!bias) return u;
  Vec out(u.size() + 1);
  out << u, 1.0;
  return out;
}

void check_containment(const ErrorTrace& t, const std::vector<bool>& coop, RunMetrics& m) {
  if (t.skipped) {
    ++m.degenerate_events;
    return;
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double scale = 1.0;
  for (const auto& e : t.errors) {
    scale = std::max(scale, std::abs(e.value));
    if (!coop[e.node]) continue;
    lo = std::min(lo, e.value);
    hi = std::max(hi, e.value);
  }
  const double tol = 1e-12 * scale;
  ++m.containment_checks;
  if (t.aggregate < lo - tol || t.aggregate > hi + tol) ++m.containment_violations;
}

void require_finite(const std::vector<Vec>& v, const std::vector<Vec>& lambda, std::size_t episode) {
  for (std::size_t k = 0; k < v.size(); ++k)
    if (!v[k].allFinite() || !lambda[k].allFinite())
      throw NumericError("cooperative parameters became non-finite in episode " + std::to_string(episode));
}

/// Cooperative agents whose in-neighborhood contains `node`.
std::vector<std::size_t> coop_recipients(const CommGraph& g, const std::vector<bool>& coop, std::size_t node) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.n_nodes(); ++i)
    if (coop[i] && i != node && g.has_edge(node, i)) out.push_back(i);
  return out;
}

struct Setup {
  const TrainConfig& cfg;
  const Environment& env;
  CommGraph graph;
  std::vector<bool> coop;
  std::vector<AdversaryKind> kind;  // meaningful for Byzantine nodes
};

double team_mean(const std::vector<double>& returns, const std::vector<bool>& coop) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < returns.size(); ++i)
    if (coop[i]) {
      acc += returns[i];
      ++n;
    }
  return n ? acc / static_cast<double>(n) : 0.0;
}

EvalRecord evaluate_team(const Setup& su, const PolicyFn& policy, std::size_t episode) {
  const auto eval = evaluate_policy(su.env, policy, su.cfg.eval_rollouts, su.cfg.steps_per_episode,
                                    derive_seed(su.cfg.seed, 0x5EED0000ull + episode));
  std::vector<double> team(static_cast<std::size_t>(eval.returns.rows()));
  for (Eigen::Index r = 0; r < eval.returns.rows(); ++r) {
    std::vector<double> row(eval.returns.cols());
    for (Eigen::Index i = 0; i < eval.returns.cols(); ++i) row[i] = eval.returns(r, i);
    team[r] = team_mean(row, su.coop);
  }
  double mean = 0.0;
  for (double x : team) mean += x;
  mean /= static_cast<double>(team.size());
  double var = 0.0;
  for (double x : team) var += (x - mean) * (x - mean);
  const double sd = team.size() > 1 ? std::sqrt(var / static_cast<double>(team.size() - 1)) : 0.0;
  return {episode, mean, sd};
}

bool should_stop(const Setup& su, const RunMetrics& m) {
  const auto W = su.cfg.early_stop.window;
  if (W == 0 || m.episodes.size() < 2 * W) return false;
  const auto& last = m.episodes.back();
  if (last.disagreement_v > su.cfg.early_stop.disagreement_tol ||
      last.disagreement_lambda > su.cfg.early_stop.disagreement_tol)
    return false;
  double now = 0.0;
  double before = 0.0;
  const std::size_t n = m.episodes.size();
  for (std::size_t k = 0; k < W; ++k) {
    now += team_mean(m.episodes[n - 1 - k].returns, su.coop);
    before += team_mean(m.episodes[n - 1 - W - k].returns, su.coop);
  }
  now /= static_cast<double>(W);
  before /= static_cast<double>(W);
  return std::abs(now - before) <= su.cfg.early_stop.return_tol * std::max(1.0, std::abs(before));
}

// ---------------------------------------------------------------------------
// Linear actor-critic (projection consensus, optionally resilient)

RunMetrics run_linear(const Setup& su, const TrainHooks& hooks) {
  const auto& cfg = su.cfg;
  const auto& env = su.env;
  const std::size_t n = env.n_agents();
  const bool bias = cfg.feature_bias;
  const Aggregation rule = cfg.algorithm == Algorithm::Alg1 ? Aggregation::Weighted : Aggregation::Resilient;

  auto phi = [&](StateIndex s) { return with_bias(env.state_input(s), bias); };
  auto fea = [&](StateIndex s, const JointAction& a) { return with_bias(env.state_action_input(s, a), bias); };
  auto scores = [&](std::size_t i, StateIndex s) {
    return action_block_features(env.state_input(s), env.local_actions(i), bias);
  };
  const Eigen::Index L = env.state_input_dim() + (bias ? 1 : 0);
  const Eigen::Index M = env.state_action_input_dim() + (bias ? 1 : 0);

  Rng rng(cfg.seed);
  Rng init_rng(derive_seed(cfg.seed, 1));
  std::vector<SoftmaxPolicy> init_policy;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = SoftmaxPolicy::zeros(env.local_actions(i) * L, -cfg.actor_bound, cfg.actor_bound);
    if (cfg.policy_init_scale > 0.0) {
      std::uniform_real_distribution<double> u(-cfg.policy_init_scale, cfg.policy_init_scale);
      for (Eigen::Index k = 0; k < p.theta.size(); ++k) p.theta(k) = u(init_rng);
    }
    init_policy.push_back(std::move(p));
  }
  const LinearParams zero{Vec::Zero(L), Vec::Zero(M)};

  std::vector<CooperativeAgent> coop_agents;
  std::vector<ByzantineAgent> byz_agents;
  std::vector<std::size_t> slot(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (su.coop[i]) {
      slot[i] = coop_agents.size();
      coop_agents.emplace_back(i, zero, init_policy[i], rule, rule == Aggregation::Weighted ? 0 : cfg.H);
    } else {
      std::optional<LinearParams> payload;
      for (const auto& a : cfg.adversaries)
        if (a.node == i && a.payload) payload = a.payload;
      if (payload && (payload->v.size() != L || payload->lambda.size() != M))
        throw ConfigError("adversaries.payload", "dimensions do not match the features");
      slot[i] = byz_agents.size();
      byz_agents.emplace_back(i, su.kind[i], zero, init_policy[i], payload,
                              su.kind[i] == AdversaryKind::Custom ? hooks.linear_attack : AttackHook{});
    }
  }
  std::vector<std::vector<std::size_t>> recipients(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!su.coop[i]) recipients[i] = coop_recipients(su.graph, su.coop, i);

  auto probs = [&](std::size_t i, StateIndex s) -> Vec {
    const auto& pol = su.coop[i] ? coop_agents[slot[i]].policy() : byz_agents[slot[i]].policy();
    return policy_probs(pol, scores(i, s));
  };

  RunMetrics m;
  m.cooperative = su.coop;
  std::vector<Message> msgs(coop_agents.size());
  std::vector<ByzantineAgent::Outbox> boxes(byz_agents.size());
  std::vector<ConsensusReport> reports(coop_agents.size());
  std::vector<Vec> vs(coop_agents.size());
  std::vector<Vec> ls(coop_agents.size());
  std::size_t t = 0;

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    StateIndex s = env.reset();
    JointAction a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = sample_action(probs(i, s), rng);
    std::vector<double> returns(n, 0.0);
    Vec phi_s = phi(s);

    for (std::size_t step = 0; step < cfg.steps_per_episode; ++step, ++t) {
      const auto out = env.step(s, a, rng);
      const StepSizes alpha{step_schedule(cfg.alpha_v, t), step_schedule(cfg.alpha_lambda, t),
                            step_schedule(cfg.alpha_theta, t)};
      LinearTransition base{phi_s, phi(out.next_state), fea(s, a), {}, 0, 0.0, cfg.gamma};
      for (std::size_t i = 0; i < n; ++i) returns[i] += out.rewards[i];

      auto transition = [&](std::size_t i) {
        LinearTransition tr = base;
        tr.score_features = scores(i, s);
        tr.action = a[i];
        tr.reward = out.rewards[i];
        return tr;
      };

      for_each_index(coop_agents.size(), cfg.parallel_agents, [&](std::size_t k) {
        auto& ag = coop_agents[k];
        msgs[k] = ag.local_phase(transition(ag.id()), alpha, cfg.train_actor);
      });
      std::vector<double> coop_rewards;
      for (std::size_t i = 0; i < n; ++i)
        if (su.coop[i]) coop_rewards.push_back(out.rewards[i]);
      for (std::size_t k = 0; k < byz_agents.size(); ++k) {
        auto& ag = byz_agents[k];
        boxes[k] = ag.act(transition(ag.id()), alpha, cfg.train_actor, coop_rewards, recipients[ag.id()], t);
      }

      auto message_for = [&](std::size_t sender, std::size_t recipient) -> const Message& {
        if (su.coop[sender]) return msgs[slot[sender]];
        const auto& box = boxes[slot[sender]];
        if (box.tailored.empty()) return box.broadcast;
        const auto& rc = recipients[sender];
        const auto pos = std::find(rc.begin(), rc.end(), recipient) - rc.begin();
        return box.tailored[static_cast<std::size_t>(pos)];
      };

      for_each_index(coop_agents.size(), cfg.parallel_agents, [&](std::size_t k) {
        auto& ag = coop_agents[k];
        std::vector<Message> inbox;
        for (std::size_t j : su.graph.in_neighbors(ag.id())) inbox.push_back(message_for(j, ag.id()));
        reports[k] = ag.consensus_phase(inbox, su.graph.weights(ag.id()), transition(ag.id()), alpha);
      });
      for (const auto& r : reports) {
        check_containment(r.v, su.coop, m);
        check_containment(r.lambda, su.coop, m);
      }
      ++m.rounds;

      if (cfg.record_rounds) {
        for (std::size_t k = 0; k < coop_agents.size(); ++k) {
          vs[k] = coop_agents[k].params().v;
          ls[k] = coop_agents[k].params().lambda;
        }
        m.round_disagreement_v.push_back(disagreement_norm(vs));
        m.round_disagreement_lambda.push_back(disagreement_norm(ls));
      }

      s = out.next_state;
      phi_s = std::move(base.phi_next);
      for (std::size_t i = 0; i < n; ++i) a[i] = sample_action(probs(i, s), rng);
    }

    for (std::size_t k = 0; k < coop_agents.size(); ++k) {
      vs[k] = coop_agents[k].params().v;
      ls[k] = coop_agents[k].params().lambda;
    }
    require_finite(vs, ls, ep);
    m.episodes.push_back({ep, std::move(returns), disagreement_norm(vs), disagreement_norm(ls)});

    if (cfg.eval_every > 0 && (ep + 1) % cfg.eval_every == 0) {
      std::vector<SoftmaxPolicy> frozen;
      for (std::size_t i = 0; i < n; ++i)
        frozen.push_back(su.coop[i] ? coop_agents[slot[i]].policy() : byz_agents[slot[i]].policy());
      m.evaluations.push_back(evaluate_team(
          su, [&](std::size_t i, StateIndex st) { return policy_probs(frozen[i], scores(i, st)); }, ep));
    }
    if (should_stop(su, m)) {
      m.stopped_early = true;
      break;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (su.coop[i]) {
      const auto& ag = coop_agents[slot[i]];
      m.final_v.push_back(ag.params().v);
      m.final_lambda.push_back(ag.params().lambda);
      m.final_theta.push_back(ag.policy().theta);
    } else {
      const auto& ag = byz_agents[slot[i]];
      m.final_v.push_back(ag.own_params().v);
      m.final_lambda.push_back(ag.own_params().lambda);
      m.final_theta.push_back(ag.policy().theta);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Deep actor-critic

RunMetrics run_deep(const Setup& su, const TrainHooks& hooks) {
  const auto& cfg = su.cfg;
  const auto& env = su.env;
  const std::size_t n = env.n_agents();
  const int du = static_cast<int>(env.state_input_dim());
  const int dsa = static_cast<int>(env.state_action_input_dim());

  auto sizes = [&](int in, int out) {
    std::vector<int> s{in};
    s.insert(s.end(), cfg.network.hidden.begin(), cfg.network.hidden.end());
    s.push_back(out);
    return s;
  };
  Rng init_rng(derive_seed(cfg.seed, 1));
  auto make_net = [&](int in, int out) {
    if (cfg.network.zero_init) return Mlp(sizes(in, out), cfg.network.slope);
    return Mlp::uniform_init(sizes(in, out), init_rng, cfg.network.slope);
  };
  DeepParams shared{make_net(du, 1), make_net(dsa, 1)};

  std::vector<DeepCooperativeAgent> coop_agents;
  std::vector<DeepByzantineAgent> byz_agents;
  std::vector<std::size_t> slot(n);
  for (std::size_t i = 0; i < n; ++i) {
    DeepParams init = cfg.network.shared_init ? shared : DeepParams{make_net(du, 1), make_net(dsa, 1)};
    Mlp actor = make_net(du, env.local_actions(i));
    if (su.coop[i]) {
      slot[i] = coop_agents.size();
      coop_agents.emplace_back(i, std::move(init), std::move(actor), cfg.actor_bound, cfg.H);
      coop_agents.back().set_grad_clip(cfg.network.grad_clip);
    } else {
      slot[i] = byz_agents.size();
      byz_agents.emplace_back(i, su.kind[i], std::move(init), std::move(actor), cfg.actor_bound,
                              su.kind[i] == AdversaryKind::Custom ? hooks.deep_attack : DeepAttackHook{});
      byz_agents.back().set_grad_clip(cfg.network.grad_clip);
    }
  }
  std::vector<std::vector<std::size_t>> recipients(n);
  std::vector<std::size_t> coop_ids;
  for (std::size_t i = 0; i < n; ++i) {
    if (su.coop[i]) coop_ids.push_back(i);
    else recipients[i] = coop_recipients(su.graph, su.coop, i);
  }

  auto probs = [&](std::size_t i, StateIndex s) -> Vec {
    const Mlp& actor = su.coop[i] ? coop_agents[slot[i]].actor() : byz_agents[slot[i]].actor();
    return softmax(actor.forward(env.state_input(s)));
  };

  RunMetrics m;
  m.cooperative = su.coop;
  std::vector<DeepMessage> msgs(coop_agents.size());
  std::vector<DeepByzantineAgent::Outbox> boxes(byz_agents.size());
  std::vector<DeepConsensusReport> reports(coop_agents.size());
  std::vector<Vec> vs(coop_agents.size());
  std::vector<Vec> ls(coop_agents.size());
  std::size_t round = 0;
  std::size_t actor_t = 0;

  auto disagreement = [&](double& dv, double& dl) {
    for (std::size_t k = 0; k < coop_agents.size(); ++k) {
      vs[k] = coop_agents[k].params().critic.params();
      ls[k] = coop_agents[k].params().reward.params();
    }
    dv = disagreement_norm(vs);
    dl = disagreement_norm(ls);
  };

  auto consensus_round = [&](const DeepBatch& batch) {
    const double av = step_schedule(cfg.alpha_v, round);
    const double al = step_schedule(cfg.alpha_lambda, round);
    for_each_index(coop_agents.size(), cfg.parallel_agents,
                   [&](std::size_t k) { msgs[k] = coop_agents[k].local_phase(batch, av, al); });
    for (std::size_t k = 0; k < byz_agents.size(); ++k)
      boxes[k] = byz_agents[k].act(batch, av, al, coop_ids, recipients[byz_agents[k].id()], round);

    // Head outputs of every broadcast message, evaluated once.
    std::vector<DeepInboxEntry> broadcast(n);
    for_each_index(n, cfg.parallel_agents, [&](std::size_t i) {
      const DeepMessage& msg = su.coop[i] ? msgs[slot[i]] : boxes[slot[i]].broadcast;
      broadcast[i] = make_inbox_entry(msg, batch);
    });

    for_each_index(coop_agents.size(), cfg.parallel_agents, [&](std::size_t k) {
      auto& ag = coop_agents[k];
      std::vector<DeepInboxEntry> inbox;
      for (std::size_t j : su.graph.in_neighbors(ag.id())) {
        if (!su.coop[j] && !boxes[slot[j]].tailored.empty()) {
          const auto& rc = recipients[j];
          const auto pos = static_cast<std::size_t>(std::find(rc.begin(), rc.end(), ag.id()) - rc.begin());
          const auto& msg = boxes[slot[j]].tailored[pos];
          if (msg.critic.sizes() != ag.params().critic.sizes() || msg.reward.sizes() != ag.params().reward.sizes())
            throw InputError("tailored message has the wrong architecture");
          inbox.push_back(make_inbox_entry(msg, batch));
        } else {
          inbox.push_back(broadcast[j]);
        }
      }
      reports[k] = ag.consensus_phase(inbox, batch, av, al);
    });
    for (const auto& r : reports) {
      for (const auto& t : r.v) check_containment(t, su.coop, m);
      for (const auto& t : r.lambda) check_containment(t, su.coop, m);
    }
    ++m.rounds;
    ++round;
    if (cfg.record_rounds) {
      double dv = 0.0;
      double dl = 0.0;
      disagreement(dv, dl);
      m.round_disagreement_v.push_back(dv);
      m.round_disagreement_lambda.push_back(dl);
    }
  };

  auto actor_updates = [&](const DeepBatch& batch) {
    if (!cfg.train_actor) return;
    const double at = step_schedule(cfg.alpha_theta, actor_t++);
    for_each_index(coop_agents.size(), cfg.parallel_agents,
                   [&](std::size_t k) { coop_agents[k].actor_update(batch, at, cfg.actor_reduction); });
    for (auto& b : byz_agents) b.actor_update(batch, at, cfg.actor_reduction);
  };

  auto update = [&](const DeepBatch& batch) {
    if (cfg.actor_order == ActorOrder::BeforeEpochs) actor_updates(batch);
    for (std::size_t e = 0; e < cfg.epochs_per_episode; ++e) {
      if (cfg.consensus_per == ConsensusPer::Epoch) {
        consensus_round(batch);
      } else {
        for (Eigen::Index b = 0; b < batch.size(); ++b) consensus_round(batch.column(b));
      }
    }
    if (cfg.actor_order == ActorOrder::AfterEpochs) actor_updates(batch);
  };

  Rng rng(cfg.seed);
  const std::size_t B = cfg.batch_size == 0 ? cfg.steps_per_episode : cfg.batch_size;
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    StateIndex s = env.reset();
    JointAction a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = sample_action(probs(i, s), rng);
    std::vector<double> returns(n, 0.0);
    std::vector<Vec> cs, cn, csa;
    std::vector<std::vector<double>> rw;
    std::vector<JointAction> acts;

    for (std::size_t step = 0; step < cfg.steps_per_episode; ++step) {
      const auto out = env.step(s, a, rng);
      for (std::size_t i = 0; i < n; ++i) returns[i] += out.rewards[i];
      cs.push_back(env.state_input(s));
      cn.push_back(env.state_input(out.next_state));
      csa.push_back(env.state_action_input(s, a));
      rw.push_back(out.rewards);
      acts.push_back(a);

      if (cs.size() == B || step + 1 == cfg.steps_per_episode) {
        DeepBatch batch;
        const auto cols = static_cast<Eigen::Index>(cs.size());
        batch.state.resize(du, cols);
        batch.next_state.resize(du, cols);
        batch.state_action.resize(dsa, cols);
        batch.rewards.resize(static_cast<Eigen::Index>(n), cols);
        for (Eigen::Index b = 0; b < cols; ++b) {
          batch.state.col(b) = cs[b];
          batch.next_state.col(b) = cn[b];
          batch.state_action.col(b) = csa[b];
          for (std::size_t i = 0; i < n; ++i) batch.rewards(static_cast<Eigen::Index>(i), b) = rw[b][i];
        }
        batch.actions = acts;
        batch.gamma = cfg.gamma;
        update(batch);
        cs.clear();
        cn.clear();
        csa.clear();
        rw.clear();
        acts.clear();
      }
      s = out.next_state;
      for (std::size_t i = 0; i < n; ++i) a[i] = sample_action(probs(i, s), rng);
    }

    double dv = 0.0;
    double dl = 0.0;
    disagreement(dv, dl);
    require_finite(vs, ls, ep);
    m.episodes.push_back({ep, std::move(returns), dv, dl});

    if (cfg.eval_every > 0 && (ep + 1) % cfg.eval_every == 0) {
      std::vector<Mlp> frozen;
      for (std::size_t i = 0; i < n; ++i)
        frozen.push_back(su.coop[i] ? coop_agents[slot[i]].actor() : byz_agents[slot[i]].actor());
      m.evaluations.push_back(evaluate_team(
          su, [&](std::size_t i, StateIndex st) { return softmax(frozen[i].forward(env.state_input(st))); }, ep));
    }
    if (should_stop(su, m)) {
      m.stopped_early = true;
      break;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const DeepParams& p = su.coop[i] ? coop_agents[slot[i]].params() : byz_agents[slot[i]].own_params();
    const Mlp& actor = su.coop[i] ? coop_agents[slot[i]].actor() : byz_agents[slot[i]].actor();
    m.final_critic_nets.push_back(p.critic);
    m.final_reward_nets.push_back(p.reward);
    m.final_actor_nets.push_back(actor);
    m.final_v.push_back(p.critic.params());
    m.final_lambda.push_back(p.reward.params());
    m.final_theta.push_back(actor.params());
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::size_t> RunMetrics::cooperative_ids() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cooperative.size(); ++i)
    if (cooperative[i]) out.push_back(i);
  return out;
}

double RunMetrics::final_team_return(std::size_t window) const {
  if (episodes.empty()) return 0.0;
  const std::size_t w = std::min(window, episodes.size());
  double acc = 0.0;
  for (std::size_t k = episodes.size() - w; k < episodes.size(); ++k) acc += team_mean(episodes[k].returns, cooperative);
  return acc / static_cast<double>(w);
}

BuiltEnvironment build_environment(const TrainConfig& cfg) {
  const auto& e = cfg.environment;
  BuiltEnvironment out;
  const InputEncoding enc =
      e.encoding.value_or(cfg.algorithm == Algorithm::Alg3 ? InputEncoding::Coords : InputEncoding::OneHot);
  switch (e.kind) {
    case EnvironmentConfig::Kind::Grid: {
      auto spec = make_grid_world(e.width, e.height, e.n_agents, static_cast<int>(cfg.steps_per_episode),
                                  e.collision_penalty, e.layout_seed);
      if (!e.targets.empty()) spec.targets = e.targets;
      if (!e.starts.empty()) spec.starts = e.starts;
      try {
        spec.validate();
      } catch (const InputError& ex) {
        throw ConfigError("environment", ex.what());
      }
      out.env = std::make_unique<GridEnvironment>(spec, enc);
      return out;
    }
    case EnvironmentConfig::Kind::TabularRandom:
      out.mdp = random_tabular_mdp(e.n_states, e.local_actions, e.mdp_seed, cfg.gamma);
      break;
    case EnvironmentConfig::Kind::TabularFile:
      out.mdp = load_mdp_file(e.path).mdp;
      break;
    case EnvironmentConfig::Kind::Example1:
      out.mdp = example1_mdp(e.example1_p, cfg.gamma);
      break;
  }
  if (out.mdp->n_agents() != cfg.n_agents) throw ConfigError("n_agents", "does not match the environment");
  if (e.initial_state >= out.mdp->n_states) throw ConfigError("environment.initial_state", "out of range");
  out.env = std::make_unique<TabularEnvironment>(*out.mdp, e.initial_state);
  return out;
}

CommGraph build_graph(const TrainConfig& cfg) {
  switch (cfg.graph.kind) {
    case GraphConfig::Kind::Complete: return CommGraph::complete(cfg.n_agents);
    case GraphConfig::Kind::Ring: return CommGraph::directed_ring(cfg.n_agents);
    case GraphConfig::Kind::File: {
      CommGraph g;
      try {
        g = load_edge_list(cfg.graph.path, cfg.n_agents);
      } catch (const InputError& ex) {
        throw ConfigError("graph.path", ex.what());
      }
      if (g.n_nodes() != cfg.n_agents) throw ConfigError("graph.path", "graph has more nodes than agents");
      return g;
    }
  }
  throw ConfigError("graph.kind", "unsupported");
}

RunMetrics run_training(const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  const auto built = build_environment(config);
  Setup su{config, *built.env, build_graph(config), std::vector<bool>(config.n_agents, true),
           std::vector<AdversaryKind>(config.n_agents, AdversaryKind::Greedy)};
  for (const auto& a : config.adversaries) {
    su.coop[a.node] = false;
    su.kind[a.node] = a.kind;
  }
  for (std::size_t node : hooks.custom_nodes) {
    if (node >= config.n_agents) throw ConfigError("custom_nodes", "not a node of the graph");
    su.coop[node] = false;
    su.kind[node] = AdversaryKind::Custom;
  }
  if (std::none_of(su.coop.begin(), su.coop.end(), [](bool c) { return c; }))
    throw ConfigError("adversaries", "at least one cooperative agent is required");

  bool checked = false;
  bool ok = true;
  if (config.n_agents >= 2 && config.n_agents <= kRobustnessNodeCap) {
    checked = true;
    ok = is_zeta_robust(su.graph, 2 * config.H + 1);
    if (!ok) spdlog::warn("communication graph is not {}-robust; resilience guarantees do not apply", 2 * config.H + 1);
  } else if (config.n_agents > kRobustnessNodeCap) {
    spdlog::warn("graph robustness not checked for {} nodes", config.n_agents);
  }

  RunMetrics m = config.algorithm == Algorithm::Alg3 ? run_deep(su, hooks) : run_linear(su, hooks);
  m.robustness_checked = checked;
  m.robustness_ok = ok;
  if (m.degenerate_events > 0) spdlog::warn("{} consensus steps skipped on zero features", m.degenerate_events);
  return m;
}

SweepResult run_sweep(const TrainConfig& config, const std::vector<std::uint64_t>& seeds, bool parallel) {
  SweepResult out;
  out.seeds = seeds;
  out.runs.resize(seeds.size());
  for_each_index(seeds.size(), parallel, [&](std::size_t k) {
    TrainConfig c = config;
    c.seed = seeds[k];
    c.parallel_agents = false;
    out.runs[k] = run_training(c);
  });

  if (out.runs.empty()) return out;
  std::size_t n_eval = out.runs.front().evaluations.size();
  for (const auto& r : out.runs) n_eval = std::min(n_eval, r.evaluations.size());
  for (std::size_t k = 0; k < n_eval; ++k) {
    double mean = 0.0;
    for (const auto& r : out.runs) mean += r.evaluations[k].mean_team_return;
    mean /= static_cast<double>(out.runs.size());
    double var = 0.0;
    for (const auto& r : out.runs) var += std::pow(r.evaluations[k].mean_team_return - mean, 2);
    const double sd = out.runs.size() > 1 ? std::sqrt(var / static_cast<double>(out.runs.size() - 1)) : 0.0;
    out.evaluations.push_back({out.runs.front().evaluations[k].episode, mean, sd});
  }
  return out;
}

PolicyEvaluation evaluate_policy(const Environment& env, const PolicyFn& policy, std::size_t rollouts,
                                 std::size_t steps, std::uint64_t seed, double gamma) {
  const std::size_t n = env.n_agents();
  PolicyEvaluation out;
  out.returns = Mat::Zero(static_cast<Eigen::Index>(rollouts), static_cast<Eigen::Index>(n));
  Rng rng(seed);
  JointAction a(n);
  for (std::size_t r = 0; r < rollouts; ++r) {
    StateIndex s = env.reset();
    double discount = 1.0;
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t i = 0; i < n; ++i) a[i] = sample_action(policy(i, s), rng);
      const auto step = env.step(s, a, rng);
      for (std::size_t i = 0; i < n; ++i)
        out.returns(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) += discount * step.rewards[i];
      discount *= gamma;
      s = step.next_state;
    }
  }
  out.mean_return = rollouts ? Vec(out.returns.colwise().mean().transpose()) : Vec::Zero(static_cast<Eigen::Index>(n));
  return out;
}

}  // namespace rcac
