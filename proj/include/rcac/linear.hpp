#pragma once

// Linear critic / team-average reward models, softmax policies and the
// closed-form fixed points that the stochastic updates converge to.

#include <functional>

#include "rcac/mmdp.hpp"

namespace rcac {

struct LinearParams {
  Vec v;       // critic, length L
  Vec lambda;  // team-average reward model, length M
};

double critic_value(const Vec& v, const Vec& phi_s);
double reward_value(const Vec& lambda, const Vec& f_sa);

/// r + gamma * phi_next' v - phi' v
double local_td_error(double reward, const Vec& v, const Vec& phi, const Vec& phi_next, double gamma);
/// r - f' lambda
double local_reward_error(double reward, const Vec& lambda, const Vec& f);

Vec sgd_critic(const Vec& v, double alpha, double delta, const Vec& phi);
Vec sgd_reward(const Vec& lambda, double alpha, double delta, const Vec& f);

/// Team TD error sampled through the agent's own models:
/// f' lambda + gamma * phi_next' v - phi' v.
double estimated_global_td(const Vec& lambda, const Vec& v, const Vec& f, const Vec& phi,
                           const Vec& phi_next, double gamma);

// ---------------------------------------------------------------------------
// Softmax policy over linear scores theta' x(s, a). The score features of a
// state are passed as a matrix with one row per local action.

struct SoftmaxPolicy {
  Vec theta;
  Vec lo;  // per-coordinate box bounds
  Vec hi;

  static SoftmaxPolicy zeros(Eigen::Index dim, double lo = -50.0, double hi = 50.0);
  void validate() const;
};

Vec policy_probs(const SoftmaxPolicy& policy, const Mat& score_features);
Vec log_policy_grad(const SoftmaxPolicy& policy, const Mat& score_features, int action);
/// theta <- clip(theta + alpha * td * psi) onto the box.
SoftmaxPolicy actor_step(const SoftmaxPolicy& policy, double alpha, double td, const Vec& psi);

/// Rows e_a (x) [u, 1?]: each action owns a block of coordinates.
Mat action_block_features(const Vec& u, int n_actions, bool bias);

// ---------------------------------------------------------------------------
// Feature maps over tabular spaces and fixed-point oracles

struct FeatureMap {
  Eigen::Index state_dim = 0;         // L
  Eigen::Index state_action_dim = 0;  // M
  std::function<Vec(StateIndex)> state;
  std::function<Vec(StateIndex, std::size_t)> state_action;  // (s, joint action index)

  static FeatureMap one_hot(const TabularMMDP& mdp);
  Mat state_matrix(const TabularMMDP& mdp) const;         // Phi, |S| x L
  Mat state_action_matrix(const TabularMMDP& mdp) const;  // F, |S||A| x M
};

/// Throws NumericError unless Phi and F have full column rank.
void verify_full_rank(const FeatureMap& features, const TabularMMDP& mdp);

struct FixedPointOracle {
  Mat Phi;         // |S| x L
  Mat F;           // |S||A| x M
  Vec d_state;     // diagonal of D^s
  Vec d_pair;      // diagonal of D^{s,a}
  Mat P;           // state transition matrix under the policy
  Vec reward_pi;   // team-average reward per state under the policy
  Vec reward_sa;   // team-average reward per (s, a)
};

/// Product of per-agent local policies: local[i] is |S| x |A^i|.
Mat joint_policy(const TabularMMDP& mdp, const std::vector<Mat>& local);

/// Team average is taken over `team` (agent indices); empty means all agents.
FixedPointOracle build_oracle(const TabularMMDP& mdp, const FeatureMap& features,
                              const Mat& policy, const std::vector<std::size_t>& team = {});

/// d' P = d', d >= 0, sum 1. Power iteration from two extreme starts; throws
/// NumericError if either fails to settle (periodic chain) or they disagree
/// (several recurrent classes).
Vec stationary_distribution(const Mat& P, double tol = 1e-12, int max_iter = 1'000'000);

Vec solve_critic_fixed_point(const FixedPointOracle& oracle, double gamma);
Vec solve_reward_fixed_point(const FixedPointOracle& oracle);
Vec critic_fixed_point_residual(const FixedPointOracle& oracle, double gamma, const Vec& v);
Vec reward_fixed_point_residual(const FixedPointOracle& oracle, const Vec& lambda);

}  // namespace rcac
