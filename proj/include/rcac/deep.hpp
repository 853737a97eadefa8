#pragma once

// Resilient actor-critic with neural approximators: hidden layers agree by a
// coordinate-wise trimmed mean, output layers by projection-based resilient
// consensus on function values.

#include <functional>
#include <span>

#include "rcac/agents.hpp"
#include "rcac/mlp.hpp"

namespace rcac {

struct DeepParams {
  Mlp critic;  // V(u(s); v)
  Mlp reward;  // r̄(w(s, a); λ)
};

struct DeepMessage {
  std::size_t sender = 0;
  Mlp critic;
  Mlp reward;
};

/// [V(x; received) - V(x; own)] / (alpha |grad_out V(x; own)|^2).
double deep_project_error(const Mlp& own, const Mlp& received, const Vec& input, double alpha);

/// Coordinate-wise trimmed mean over hidden blocks (own included), no own-value guard.
Vec hidden_trimmed_consensus(std::span<const Vec> hidden_blocks, std::size_t H);

/// A batch of transitions, one column per sample.
struct DeepBatch {
  Mat state;         // critic input at s_b
  Mat next_state;    // critic input at s_{b+1}
  Mat state_action;  // reward-model input at (s_b, a_b)
  Mat rewards;       // n_agents x B
  std::vector<JointAction> actions;
  double gamma = 0.9;

  Eigen::Index size() const { return state.cols(); }
  DeepBatch column(Eigen::Index b) const;
};

/// net + alpha * mean_b delta_b grad f(x_b). A positive `grad_clip` caps the
/// Euclidean norm of the averaged gradient.
Mlp deep_local_sgd(const Mlp& net, const Mat& inputs, const Vec& delta, double alpha, double grad_clip = 0.0);

/// One inbox entry with the message's head outputs at the batch inputs.
struct DeepInboxEntry {
  const DeepMessage* message = nullptr;
  Vec critic_values;  // V(state_b; message critic)
  Vec reward_values;  // r̄(state_action_b; message reward)
};

DeepInboxEntry make_inbox_entry(const DeepMessage& m, const DeepBatch& batch);

struct DeepConsensusReport {
  std::vector<ErrorTrace> v;       // one per sample
  std::vector<ErrorTrace> lambda;  // one per sample
};

/// Hidden blocks by trimmed mean; output blocks by per-sample projection,
/// W-MSR trimming and uniform aggregation, then one output-layer step
/// averaged over the batch, with the gradient taken at the new hidden
/// parameters.
DeepParams deep_consensus_round(std::size_t own_id, const DeepParams& own, std::span<const DeepInboxEntry> inbox,
                                const DeepBatch& batch, double alpha_v, double alpha_lambda, std::size_t H,
                                DeepConsensusReport* report = nullptr);
DeepParams deep_consensus_round(std::size_t own_id, const DeepParams& own, std::span<const DeepMessage> inbox,
                                const DeepBatch& batch, double alpha_v, double alpha_lambda, std::size_t H,
                                DeepConsensusReport* report = nullptr);

/// Softmax over actor logits.
Vec softmax(const Vec& logits);

enum class BatchReduction { Mean, Sum };

/// theta <- clip(theta + alpha * scale * sum_b td_b grad log pi(a_b | x_b)).
void deep_actor_step(Mlp& actor, const Mat& inputs, std::span<const int> actions, const Vec& td, double alpha,
                     double bound, BatchReduction reduction);

// ---------------------------------------------------------------------------

class DeepCooperativeAgent {
 public:
  DeepCooperativeAgent(std::size_t id, DeepParams init, Mlp actor, double theta_bound, std::size_t H);

  std::size_t id() const { return id_; }
  const DeepParams& params() const { return params_; }
  DeepParams& params() { return params_; }
  const Mlp& actor() const { return actor_; }

  /// Team TD estimated through the agent's own critic and reward model.
  void actor_update(const DeepBatch& batch, double alpha_theta, BatchReduction reduction);
  DeepMessage local_phase(const DeepBatch& batch, double alpha_v, double alpha_lambda) const;
  /// Cap on the local SGD gradient norm, 0 for none.
  void set_grad_clip(double c);
  DeepConsensusReport consensus_phase(std::span<const DeepInboxEntry> inbox, const DeepBatch& batch,
                                      double alpha_v, double alpha_lambda);

 private:
  std::size_t id_;
  DeepParams params_;
  Mlp actor_;
  double bound_;
  std::size_t H_;
  double clip_ = 0.0;
};

struct DeepAttackContext {
  std::size_t round = 0;
  std::size_t sender = 0;
  std::span<const std::size_t> recipients;
  const DeepMessage* honest = nullptr;
  const DeepBatch* batch = nullptr;
};
using DeepAttackHook = std::function<std::vector<DeepMessage>(const DeepAttackContext&)>;

class DeepByzantineAgent {
 public:
  /// Faulty agents broadcast `init` for ever.
  DeepByzantineAgent(std::size_t id, AdversaryKind kind, DeepParams init, Mlp actor, double theta_bound,
                     DeepAttackHook hook = {});

  std::size_t id() const { return id_; }
  AdversaryKind kind() const { return kind_; }
  const Mlp& actor() const { return actor_; }
  const DeepParams& own_params() const { return own_; }
  const DeepParams& broadcast_params() const { return broadcast_; }
  void set_grad_clip(double c);

  /// Actor driven by its own reward through its own (or frozen) critic.
  void actor_update(const DeepBatch& batch, double alpha_theta, BatchReduction reduction);
  struct Outbox {
    DeepMessage broadcast;
    std::vector<DeepMessage> tailored;  // aligned with recipients; empty means broadcast
  };
  /// Local learning for one round; `coop` lists the cooperative agent ids
  /// whose rewards the strategic adversary may read.
  Outbox act(const DeepBatch& batch, double alpha_v, double alpha_lambda,
                               std::span<const std::size_t> coop, std::span<const std::size_t> recipients,
                               std::size_t round);

 private:
  std::size_t id_;
  AdversaryKind kind_;
  DeepParams own_;
  DeepParams broadcast_;
  Mlp actor_;
  double bound_;
  DeepAttackHook hook_;
  double clip_ = 0.0;
};

/// Local SGD on both heads for the reward row `rewards`.
DeepParams deep_local_update(const DeepParams& p, const DeepBatch& batch, const Vec& rewards, double alpha_v,
                             double alpha_lambda, double grad_clip = 0.0);

}  // namespace rcac
