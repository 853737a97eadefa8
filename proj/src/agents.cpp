#include "rcac/agents.hpp"

#include <algorithm>

#include "rcac/error.hpp"

namespace rcac {

CooperativeAgent::CooperativeAgent(std::size_t id, LinearParams init, SoftmaxPolicy policy, Aggregation rule,
                                   std::size_t H)
    : id_(id), params_(std::move(init)), policy_(std::move(policy)), rule_(rule), H_(H) {
  policy_.validate();
  if (rule_ == Aggregation::Weighted && H_ != 0) throw InputError("weighted aggregation does not trim");
}

Message CooperativeAgent::local_phase(const LinearTransition& tr, const StepSizes& alpha, bool update_actor) {
  if (update_actor) {
    const double td = estimated_global_td(params_.lambda, params_.v, tr.f, tr.phi, tr.phi_next, tr.gamma);
    const Vec psi = log_policy_grad(policy_, tr.score_features, tr.action);
    policy_ = actor_step(policy_, alpha.theta, td, psi);
  }
  const double dv = local_td_error(tr.reward, params_.v, tr.phi, tr.phi_next, tr.gamma);
  const double dl = local_reward_error(tr.reward, params_.lambda, tr.f);
  return {id_, sgd_critic(params_.v, alpha.v, dv, tr.phi), sgd_reward(params_.lambda, alpha.lambda, dl, tr.f)};
}

ErrorTrace CooperativeAgent::consensus_one(std::span<const Message> inbox, std::span<const double> weights,
                                           bool critic, const Vec& feature, double alpha, Vec& x) const {
  ErrorTrace trace;
  if (feature.squaredNorm() == 0.0) {
    trace.skipped = true;
    return trace;
  }
  trace.errors.reserve(inbox.size());
  for (const auto& m : inbox) trace.errors.push_back({m.sender, project_error(critic ? m.v : m.lambda, x, feature, alpha)});

  if (rule_ == Aggregation::Resilient) {
    trace.retained = trim_select(trace.errors, id_, H_);
    trace.aggregate = aggregate_uniform(trace.errors, trace.retained);
  } else {
    if (weights.size() != inbox.size()) throw InputError("one graph weight per inbox message required");
    for (const auto& m : inbox) trace.retained.push_back(m.sender);
    trace.aggregate = aggregate(trace.errors, trace.retained, weights);
  }
  x = consensus_apply(x, alpha, trace.aggregate, feature);
  return trace;
}

ConsensusReport CooperativeAgent::consensus_phase(std::span<const Message> inbox, std::span<const double> weights,
                                                  const LinearTransition& tr, const StepSizes& alpha) {
  for (const auto& m : inbox) check_delivery(m, params_.v.size(), params_.lambda.size());
  if (std::none_of(inbox.begin(), inbox.end(), [&](const Message& m) { return m.sender == id_; }))
    throw InputError("inbox must contain the agent's own message");
  ConsensusReport report;
  report.v = consensus_one(inbox, weights, true, tr.phi, alpha.v, params_.v);
  report.lambda = consensus_one(inbox, weights, false, tr.f, alpha.lambda, params_.lambda);
  return report;
}

void check_delivery(const Message& m, Eigen::Index dim_v, Eigen::Index dim_lambda) {
  if (m.v.size() != dim_v || m.lambda.size() != dim_lambda)
    throw InputError("message from agent " + std::to_string(m.sender) + " has wrong dimensions");
  if (!m.v.allFinite() || !m.lambda.allFinite())
    throw NumericError("message from agent " + std::to_string(m.sender) + " is not finite");
}

// ---------------------------------------------------------------------------

std::string to_string(AdversaryKind kind) {
  switch (kind) {
    case AdversaryKind::Greedy: return "greedy";
    case AdversaryKind::Faulty: return "faulty";
    case AdversaryKind::Strategic: return "strategic";
    case AdversaryKind::Custom: return "custom";
  }
  return "unknown";
}

AdversaryKind adversary_from_string(const std::string& name) {
  if (name == "greedy") return AdversaryKind::Greedy;
  if (name == "faulty") return AdversaryKind::Faulty;
  if (name == "strategic") return AdversaryKind::Strategic;
  if (name == "custom") return AdversaryKind::Custom;
  throw InputError("unknown adversary kind '" + name + "'");
}

ByzantineAgent::ByzantineAgent(std::size_t id, AdversaryKind kind, LinearParams init, SoftmaxPolicy policy,
                               std::optional<LinearParams> payload, AttackHook hook)
    : id_(id), kind_(kind), own_(init), broadcast_(payload ? *payload : init), policy_(std::move(policy)),
      hook_(std::move(hook)) {
  policy_.validate();
  if (kind_ == AdversaryKind::Custom && !hook_) throw InputError("custom adversary needs an attack hook");
}

void ByzantineAgent::actor_update(const LinearTransition& tr, const Vec& critic, double alpha) {
  const double td = local_td_error(tr.reward, critic, tr.phi, tr.phi_next, tr.gamma);
  policy_ = actor_step(policy_, alpha, td, log_policy_grad(policy_, tr.score_features, tr.action));
}

ByzantineAgent::Outbox ByzantineAgent::act(const LinearTransition& tr, const StepSizes& alpha, bool update_actor,
                                         std::span<const double> coop_rewards,
                                         std::span<const std::size_t> recipients, std::size_t round) {
  auto local_sgd = [&](const LinearParams& p, double reward) {
    const double dv = local_td_error(reward, p.v, tr.phi, tr.phi_next, tr.gamma);
    const double dl = local_reward_error(reward, p.lambda, tr.f);
    return LinearParams{sgd_critic(p.v, alpha.v, dv, tr.phi), sgd_reward(p.lambda, alpha.lambda, dl, tr.f)};
  };

  Message out{id_, {}, {}};
  switch (kind_) {
    case AdversaryKind::Greedy:
    case AdversaryKind::Custom:
      if (update_actor) actor_update(tr, own_.v, alpha.theta);
      own_ = local_sgd(own_, tr.reward);
      out.v = own_.v;
      out.lambda = own_.lambda;
      break;
    case AdversaryKind::Faulty:
      if (update_actor) actor_update(tr, broadcast_.v, alpha.theta);
      out.v = broadcast_.v;
      out.lambda = broadcast_.lambda;
      break;
    case AdversaryKind::Strategic: {
      if (update_actor) actor_update(tr, own_.v, alpha.theta);
      own_ = local_sgd(own_, tr.reward);
      double target = 0.0;
      for (double r : coop_rewards) target += r;
      if (!coop_rewards.empty()) target = -target / static_cast<double>(coop_rewards.size());
      broadcast_ = local_sgd(broadcast_, target);
      out.v = broadcast_.v;
      out.lambda = broadcast_.lambda;
      break;
    }
  }

  Outbox box{std::move(out), {}};
  if (kind_ != AdversaryKind::Custom) return box;
  AttackContext ctx{round, id_, recipients, &box.broadcast, &tr};
  box.tailored = hook_(ctx);
  if (box.tailored.size() != recipients.size()) throw InputError("attack hook must return one message per recipient");
  for (auto& m : box.tailored) m.sender = id_;
  return box;
}

}  // namespace rcac
