#include "rcac/deep.hpp"

#include <algorithm>
#include <cmath>

#include "rcac/error.hpp"

namespace rcac {

double deep_project_error(const Mlp& own, const Mlp& received, const Vec& input, double alpha) {
  if (own.sizes() != received.sizes()) throw InputError("received network has a different architecture");
  if (!(alpha > 0.0)) throw InputError("step size must be positive");
  Mlp::Cache cache;
  const double mine = own.forward_batch(Mat(input), cache)(0, 0);
  const double norm2 = output_gradient_norms(own, cache)(0);
  if (!(norm2 > 0.0)) throw DegenerateFeatureError("vanishing output-layer gradient");
  return (received.forward(input)(0) - mine) / (alpha * norm2);
}

Vec hidden_trimmed_consensus(std::span<const Vec> hidden_blocks, std::size_t H) {
  return elementwise_trimmed_mean(hidden_blocks, H);
}

DeepBatch DeepBatch::column(Eigen::Index b) const {
  DeepBatch one;
  one.state = state.col(b);
  one.next_state = next_state.col(b);
  one.state_action = state_action.col(b);
  one.rewards = rewards.col(b);
  one.actions = {actions.at(static_cast<std::size_t>(b))};
  one.gamma = gamma;
  return one;
}

Mlp deep_local_sgd(const Mlp& net, const Mat& inputs, const Vec& delta, double alpha, double grad_clip) {
  if (delta.size() != inputs.cols()) throw InputError("one error per sample required");
  if (!(grad_clip >= 0.0)) throw InputError("gradient clip must be non-negative");
  Mlp::Cache cache;
  net.forward_batch(inputs, cache);
  Mlp out = net;
  const Mat up = delta.transpose() / static_cast<double>(inputs.cols());
  Vec g = net.backward_batch(cache, up);
  if (grad_clip > 0.0) {
    const double norm = g.norm();
    if (norm > grad_clip) g *= grad_clip / norm;
  }
  out.params() += alpha * g;
  return out;
}

DeepParams deep_local_update(const DeepParams& p, const DeepBatch& batch, const Vec& rewards, double alpha_v,
                             double alpha_lambda, double grad_clip) {
  const Vec now = p.critic.forward_batch(batch.state).row(0).transpose();
  const Vec next = p.critic.forward_batch(batch.next_state).row(0).transpose();
  const Vec dv = rewards + batch.gamma * next - now;
  const Vec dl = rewards - p.reward.forward_batch(batch.state_action).row(0).transpose();
  return {deep_local_sgd(p.critic, batch.state, dv, alpha_v, grad_clip),
          deep_local_sgd(p.reward, batch.state_action, dl, alpha_lambda, grad_clip)};
}

DeepInboxEntry make_inbox_entry(const DeepMessage& m, const DeepBatch& batch) {
  return {&m, m.critic.forward_batch(batch.state).row(0).transpose(),
          m.reward.forward_batch(batch.state_action).row(0).transpose()};
}

namespace {

Mlp consensus_head(std::size_t own_id, const Mlp& own, std::span<const DeepInboxEntry> inbox, bool critic,
                   const Mat& inputs, double alpha, std::size_t H, std::vector<ErrorTrace>* traces) {
  const Eigen::Index B = inputs.cols();
  Mlp::Cache cache;
  const Mat own_vals = own.forward_batch(inputs, cache);
  const Vec norms = output_gradient_norms(own, cache);

  Mlp next = own;
  if (own.hidden_count() > 0) {
    std::vector<Vec> blocks;
    blocks.reserve(inbox.size());
    for (const auto& e : inbox) {
      const Mlp& net = critic ? e.message->critic : e.message->reward;
      if (net.sizes() != own.sizes()) throw InputError("received network has a different architecture");
      blocks.emplace_back(net.hidden_block());
    }
    next.hidden_block() = hidden_trimmed_consensus(blocks, H);
  }

  Vec agg = Vec::Zero(B);
  std::vector<bool> active(static_cast<std::size_t>(B), true);
  for (Eigen::Index b = 0; b < B; ++b) {
    ErrorTrace trace;
    if (!std::isfinite(norms(b))) throw NumericError("non-finite output-layer gradient");
    if (norms(b) == 0.0) {
      trace.skipped = true;
      active[static_cast<std::size_t>(b)] = false;
    } else {
      for (const auto& e : inbox) {
        const Vec& vals = critic ? e.critic_values : e.reward_values;
        trace.errors.push_back({e.message->sender, (vals(b) - own_vals(0, b)) / (alpha * norms(b))});
      }
      trace.retained = trim_select(trace.errors, own_id, H);
      trace.aggregate = aggregate_uniform(trace.errors, trace.retained);
      agg(b) = trace.aggregate;
    }
    if (traces) traces->push_back(std::move(trace));
  }

  // Output-layer gradient [h; 1] at the new hidden parameters.
  Mlp::Cache fresh;
  next.forward_batch(inputs, fresh);
  const Mat& h = next.last_hidden(fresh);
  const Eigen::Index width = h.rows();
  auto out = next.output_block();
  for (Eigen::Index b = 0; b < B; ++b) {
    if (!active[static_cast<std::size_t>(b)]) continue;
    const double step = alpha * agg(b) / static_cast<double>(B);
    out.head(width) += step * h.col(b);
    out(width) += step;
  }
  return next;
}

}  // namespace

DeepParams deep_consensus_round(std::size_t own_id, const DeepParams& own, std::span<const DeepInboxEntry> inbox,
                                const DeepBatch& batch, double alpha_v, double alpha_lambda, std::size_t H,
                                DeepConsensusReport* report) {
  if (std::none_of(inbox.begin(), inbox.end(), [&](const DeepInboxEntry& e) { return e.message->sender == own_id; }))
    throw InputError("inbox must contain the agent's own message");
  for (const auto& e : inbox)
    if (e.critic_values.size() != batch.size() || e.reward_values.size() != batch.size())
      throw InputError("inbox values do not match the batch");
  if (own.critic.output_dim() != 1 || own.reward.output_dim() != 1)
    throw InputError("critic and reward networks must have scalar outputs");
  return {consensus_head(own_id, own.critic, inbox, true, batch.state, alpha_v, H, report ? &report->v : nullptr),
          consensus_head(own_id, own.reward, inbox, false, batch.state_action, alpha_lambda, H,
                         report ? &report->lambda : nullptr)};
}

DeepParams deep_consensus_round(std::size_t own_id, const DeepParams& own, std::span<const DeepMessage> inbox,
                                const DeepBatch& batch, double alpha_v, double alpha_lambda, std::size_t H,
                                DeepConsensusReport* report) {
  std::vector<DeepInboxEntry> entries;
  entries.reserve(inbox.size());
  for (const auto& m : inbox) entries.push_back(make_inbox_entry(m, batch));
  return deep_consensus_round(own_id, own, entries, batch, alpha_v, alpha_lambda, H, report);
}

Vec softmax(const Vec& logits) {
  const Vec e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

void deep_actor_step(Mlp& actor, const Mat& inputs, std::span<const int> actions, const Vec& td, double alpha,
                     double bound, BatchReduction reduction) {
  const Eigen::Index B = inputs.cols();
  if (static_cast<Eigen::Index>(actions.size()) != B || td.size() != B)
    throw InputError("one action and one TD error per sample required");
  Mlp::Cache cache;
  const Mat logits = actor.forward_batch(inputs, cache);
  Mat up(logits.rows(), B);
  const double scale = reduction == BatchReduction::Mean ? 1.0 / static_cast<double>(B) : 1.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const int a = actions[static_cast<std::size_t>(b)];
    if (a < 0 || a >= logits.rows()) throw InputError("action out of range");
    Vec g = -softmax(logits.col(b));
    g(a) += 1.0;
    up.col(b) = (scale * td(b)) * g;
  }
  actor.params() = (actor.params() + alpha * actor.backward_batch(cache, up)).cwiseMax(-bound).cwiseMin(bound);
}

namespace {

std::vector<int> own_actions(const DeepBatch& batch, std::size_t id) {
  std::vector<int> out;
  out.reserve(batch.actions.size());
  for (const auto& a : batch.actions) out.push_back(a.at(id));
  return out;
}

Vec row_of(const Mat& m, std::size_t id) { return m.row(static_cast<Eigen::Index>(id)).transpose(); }

}  // namespace

// ---------------------------------------------------------------------------

DeepCooperativeAgent::DeepCooperativeAgent(std::size_t id, DeepParams init, Mlp actor, double theta_bound,
                                           std::size_t H)
    : id_(id), params_(std::move(init)), actor_(std::move(actor)), bound_(theta_bound), H_(H) {
  if (!(bound_ > 0.0)) throw InputError("actor bound must be positive");
}

void DeepCooperativeAgent::actor_update(const DeepBatch& batch, double alpha_theta, BatchReduction reduction) {
  const Vec now = params_.critic.forward_batch(batch.state).row(0).transpose();
  const Vec next = params_.critic.forward_batch(batch.next_state).row(0).transpose();
  const Vec rbar = params_.reward.forward_batch(batch.state_action).row(0).transpose();
  const Vec td = rbar + batch.gamma * next - now;
  const auto acts = own_actions(batch, id_);
  deep_actor_step(actor_, batch.state, acts, td, alpha_theta, bound_, reduction);
}

DeepMessage DeepCooperativeAgent::local_phase(const DeepBatch& batch, double alpha_v, double alpha_lambda) const {
  auto p = deep_local_update(params_, batch, row_of(batch.rewards, id_), alpha_v, alpha_lambda, clip_);
  return {id_, std::move(p.critic), std::move(p.reward)};
}

void DeepCooperativeAgent::set_grad_clip(double c) {
  if (!(c >= 0.0)) throw InputError("gradient clip must be non-negative");
  clip_ = c;
}

DeepConsensusReport DeepCooperativeAgent::consensus_phase(std::span<const DeepInboxEntry> inbox,
                                                          const DeepBatch& batch, double alpha_v,
                                                          double alpha_lambda) {
  DeepConsensusReport report;
  params_ = deep_consensus_round(id_, params_, inbox, batch, alpha_v, alpha_lambda, H_, &report);
  return report;
}

DeepByzantineAgent::DeepByzantineAgent(std::size_t id, AdversaryKind kind, DeepParams init, Mlp actor,
                                       double theta_bound, DeepAttackHook hook)
    : id_(id), kind_(kind), own_(init), broadcast_(std::move(init)), actor_(std::move(actor)),
      bound_(theta_bound), hook_(std::move(hook)) {
  if (kind_ == AdversaryKind::Custom && !hook_) throw InputError("custom adversary needs an attack hook");
}

void DeepByzantineAgent::set_grad_clip(double c) {
  if (!(c >= 0.0)) throw InputError("gradient clip must be non-negative");
  clip_ = c;
}

void DeepByzantineAgent::actor_update(const DeepBatch& batch, double alpha_theta, BatchReduction reduction) {
  const Mlp& critic = kind_ == AdversaryKind::Faulty ? broadcast_.critic : own_.critic;
  const Vec now = critic.forward_batch(batch.state).row(0).transpose();
  const Vec next = critic.forward_batch(batch.next_state).row(0).transpose();
  const Vec td = row_of(batch.rewards, id_) + batch.gamma * next - now;
  const auto acts = own_actions(batch, id_);
  deep_actor_step(actor_, batch.state, acts, td, alpha_theta, bound_, reduction);
}

DeepByzantineAgent::Outbox DeepByzantineAgent::act(const DeepBatch& batch, double alpha_v, double alpha_lambda,
                                                 std::span<const std::size_t> coop,
                                                 std::span<const std::size_t> recipients, std::size_t round) {
  DeepMessage out{id_, {}, {}};
  switch (kind_) {
    case AdversaryKind::Greedy:
    case AdversaryKind::Custom:
      own_ = deep_local_update(own_, batch, row_of(batch.rewards, id_), alpha_v, alpha_lambda, clip_);
      out.critic = own_.critic;
      out.reward = own_.reward;
      break;
    case AdversaryKind::Faulty:
      out.critic = broadcast_.critic;
      out.reward = broadcast_.reward;
      break;
    case AdversaryKind::Strategic: {
      own_ = deep_local_update(own_, batch, row_of(batch.rewards, id_), alpha_v, alpha_lambda, clip_);
      Vec target = Vec::Zero(batch.size());
      for (std::size_t j : coop) target -= row_of(batch.rewards, j);
      if (!coop.empty()) target /= static_cast<double>(coop.size());
      broadcast_ = deep_local_update(broadcast_, batch, target, alpha_v, alpha_lambda, clip_);
      out.critic = broadcast_.critic;
      out.reward = broadcast_.reward;
      break;
    }
  }
  Outbox box{std::move(out), {}};
  if (kind_ != AdversaryKind::Custom) return box;
  DeepAttackContext ctx{round, id_, recipients, &box.broadcast, &batch};
  box.tailored = hook_(ctx);
  if (box.tailored.size() != recipients.size()) throw InputError("attack hook must return one message per recipient");
  for (auto& m : box.tailored) m.sender = id_;
  return box;
}

}  // namespace rcac
