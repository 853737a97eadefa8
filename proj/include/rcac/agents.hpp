#pragma once

// Cooperative and Byzantine agents for the linear actor-critic algorithms.
// One round is split into a local phase (actor step, then local SGD that
// produces the broadcast message) and a consensus phase (projection of the
// received messages onto the agent's own features, optional trimming,
// aggregation and update).

#include <functional>
#include <optional>
#include <span>

#include "rcac/consensus.hpp"
#include "rcac/linear.hpp"

namespace rcac {

struct Message {
  std::size_t sender = 0;
  Vec v;
  Vec lambda;
};

struct StepSizes {
  double v = 0.0;
  double lambda = 0.0;
  double theta = 0.0;
};

/// Everything an agent sees about one transition.
struct LinearTransition {
  Vec phi;             // phi(s_t)
  Vec phi_next;        // phi(s_{t+1})
  Vec f;               // f(s_t, a_t)
  Mat score_features;  // x(s_t, b), one row per local action b
  int action = 0;      // own local action a_t
  double reward = 0.0; // own reward r_{t+1}
  double gamma = 0.9;
};

/// One projected error, the retained set and the aggregated value.
struct ErrorTrace {
  std::vector<NodeValue> errors;
  std::vector<std::size_t> retained;
  double aggregate = 0.0;
  bool skipped = false;  // zero feature vector
};

struct ConsensusReport {
  ErrorTrace v;
  ErrorTrace lambda;
};

enum class Aggregation {
  Weighted,   // graph weights over every in-neighbor, no trimming
  Resilient,  // W-MSR trimming with parameter H, uniform weights
};

class CooperativeAgent {
 public:
  CooperativeAgent(std::size_t id, LinearParams init, SoftmaxPolicy policy, Aggregation rule, std::size_t H);

  std::size_t id() const { return id_; }
  const LinearParams& params() const { return params_; }
  LinearParams& params() { return params_; }
  const SoftmaxPolicy& policy() const { return policy_; }
  SoftmaxPolicy& policy() { return policy_; }
  Aggregation rule() const { return rule_; }
  std::size_t trim() const { return H_; }

  /// Actor step with the pre-round models (when `update_actor`), then the
  /// local SGD steps. Returns the message to broadcast.
  Message local_phase(const LinearTransition& tr, const StepSizes& alpha, bool update_actor);

  /// `inbox` holds one message per in-neighbor including the agent's own.
  /// `weights` (aligned with `inbox`) is used by the Weighted rule only.
  ConsensusReport consensus_phase(std::span<const Message> inbox, std::span<const double> weights,
                                  const LinearTransition& tr, const StepSizes& alpha);

 private:
  ErrorTrace consensus_one(std::span<const Message> inbox, std::span<const double> weights, bool critic,
                           const Vec& feature, double alpha, Vec& x) const;

  std::size_t id_;
  LinearParams params_;
  SoftmaxPolicy policy_;
  Aggregation rule_;
  std::size_t H_;
};

// ---------------------------------------------------------------------------
// Byzantine agents

enum class AdversaryKind { Greedy, Faulty, Strategic, Custom };

std::string to_string(AdversaryKind kind);
AdversaryKind adversary_from_string(const std::string& name);

/// Input to a custom attack hook.
struct AttackContext {
  std::size_t round = 0;
  std::size_t sender = 0;
  std::span<const std::size_t> recipients;
  /// The message a cooperative agent holding the adversary's models would send.
  const Message* honest = nullptr;
  const LinearTransition* transition = nullptr;
};

/// Returns one message per recipient, aligned with `ctx.recipients`.
using AttackHook = std::function<std::vector<Message>(const AttackContext&)>;

class ByzantineAgent {
 public:
  /// `payload` is what a faulty agent broadcasts for ever; other kinds ignore it.
  ByzantineAgent(std::size_t id, AdversaryKind kind, LinearParams init, SoftmaxPolicy policy,
                 std::optional<LinearParams> payload = std::nullopt, AttackHook hook = {});

  std::size_t id() const { return id_; }
  AdversaryKind kind() const { return kind_; }
  const SoftmaxPolicy& policy() const { return policy_; }
  /// Models it learns for itself (greedy: everything; strategic: private critic).
  const LinearParams& own_params() const { return own_; }
  /// Current broadcast model (strategic and faulty).
  const LinearParams& broadcast_params() const { return broadcast_; }

  struct Outbox {
    Message broadcast;
    std::vector<Message> tailored;  // aligned with recipients; empty means broadcast
  };
  /// Advances the adversary's internal learning and returns its messages.
  /// `coop_rewards` are the cooperative agents' rewards for this transition,
  /// read by the strategic adversary only.
  Outbox act(const LinearTransition& tr, const StepSizes& alpha, bool update_actor,
             std::span<const double> coop_rewards, std::span<const std::size_t> recipients, std::size_t round);

 private:
  void actor_update(const LinearTransition& tr, const Vec& critic, double alpha);

  std::size_t id_;
  AdversaryKind kind_;
  LinearParams own_;
  LinearParams broadcast_;
  SoftmaxPolicy policy_;
  AttackHook hook_;
};

/// Messages addressed to a recipient must match its model dimensions.
void check_delivery(const Message& m, Eigen::Index dim_v, Eigen::Index dim_lambda);

}  // namespace rcac
