#include "rcac/linear.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rcac/error.hpp"

namespace rcac {

namespace {

void require_same(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) throw InputError(std::string("dimension mismatch: ") + what);
}

}  // namespace

double critic_value(const Vec& v, const Vec& phi_s) {
  require_same(v.size(), phi_s.size(), "critic parameters vs state features");
  return phi_s.dot(v);
}

double reward_value(const Vec& lambda, const Vec& f_sa) {
  require_same(lambda.size(), f_sa.size(), "reward parameters vs state-action features");
  return f_sa.dot(lambda);
}

double local_td_error(double reward, const Vec& v, const Vec& phi, const Vec& phi_next, double gamma) {
  return reward + gamma * critic_value(v, phi_next) - critic_value(v, phi);
}

double local_reward_error(double reward, const Vec& lambda, const Vec& f) {
  return reward - reward_value(lambda, f);
}

Vec sgd_critic(const Vec& v, double alpha, double delta, const Vec& phi) {
  require_same(v.size(), phi.size(), "critic parameters vs state features");
  return v + (alpha * delta) * phi;
}

Vec sgd_reward(const Vec& lambda, double alpha, double delta, const Vec& f) {
  require_same(lambda.size(), f.size(), "reward parameters vs state-action features");
  return lambda + (alpha * delta) * f;
}

double estimated_global_td(const Vec& lambda, const Vec& v, const Vec& f, const Vec& phi,
                           const Vec& phi_next, double gamma) {
  return reward_value(lambda, f) + gamma * critic_value(v, phi_next) - critic_value(v, phi);
}

// ---------------------------------------------------------------------------

SoftmaxPolicy SoftmaxPolicy::zeros(Eigen::Index dim, double lo, double hi) {
  return {Vec::Zero(dim), Vec::Constant(dim, lo), Vec::Constant(dim, hi)};
}

void SoftmaxPolicy::validate() const {
  if (lo.size() != theta.size() || hi.size() != theta.size())
    throw InputError("policy bounds must match parameter dimension");
  if ((lo.array() >= hi.array()).any()) throw InputError("policy bounds need lo < hi");
  if ((theta.array() < lo.array()).any() || (theta.array() > hi.array()).any())
    throw InputError("policy parameters outside their box");
}

Vec policy_probs(const SoftmaxPolicy& policy, const Mat& score_features) {
  require_same(score_features.cols(), policy.theta.size(), "policy parameters vs score features");
  Vec scores = score_features * policy.theta;
  const double m = scores.maxCoeff();
  Vec p = (scores.array() - m).exp();
  p /= p.sum();
  return p;
}

Vec log_policy_grad(const SoftmaxPolicy& policy, const Mat& score_features, int action) {
  if (action < 0 || action >= score_features.rows()) throw InputError("action index out of range");
  const Vec p = policy_probs(policy, score_features);
  return score_features.row(action).transpose() - score_features.transpose() * p;
}

SoftmaxPolicy actor_step(const SoftmaxPolicy& policy, double alpha, double td, const Vec& psi) {
  require_same(policy.theta.size(), psi.size(), "policy parameters vs score gradient");
  SoftmaxPolicy out = policy;
  out.theta = (policy.theta + (alpha * td) * psi).cwiseMax(policy.lo).cwiseMin(policy.hi);
  return out;
}

Mat action_block_features(const Vec& u, int n_actions, bool bias) {
  const Eigen::Index block = u.size() + (bias ? 1 : 0);
  Mat X = Mat::Zero(n_actions, block * n_actions);
  for (int a = 0; a < n_actions; ++a) {
    X.row(a).segment(a * block, u.size()) = u.transpose();
    if (bias) X(a, a * block + u.size()) = 1.0;
  }
  return X;
}

// ---------------------------------------------------------------------------

FeatureMap FeatureMap::one_hot(const TabularMMDP& mdp) {
  FeatureMap fm;
  const auto nS = static_cast<Eigen::Index>(mdp.n_states);
  const auto nA = static_cast<Eigen::Index>(mdp.n_joint_actions());
  fm.state_dim = nS;
  fm.state_action_dim = nS * nA;
  fm.state = [nS](StateIndex s) {
    Vec x = Vec::Zero(nS);
    x(static_cast<Eigen::Index>(s)) = 1.0;
    return x;
  };
  fm.state_action = [nS, nA](StateIndex s, std::size_t a) {
    Vec x = Vec::Zero(nS * nA);
    x(static_cast<Eigen::Index>(s) * nA + static_cast<Eigen::Index>(a)) = 1.0;
    return x;
  };
  return fm;
}

Mat FeatureMap::state_matrix(const TabularMMDP& mdp) const {
  Mat Phi(static_cast<Eigen::Index>(mdp.n_states), state_dim);
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    const Vec x = state(s);
    require_same(x.size(), state_dim, "state feature length");
    Phi.row(static_cast<Eigen::Index>(s)) = x.transpose();
  }
  return Phi;
}

Mat FeatureMap::state_action_matrix(const TabularMMDP& mdp) const {
  const std::size_t nA = mdp.n_joint_actions();
  Mat F(static_cast<Eigen::Index>(mdp.n_states * nA), state_action_dim);
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < nA; ++a) {
      const Vec x = state_action(s, a);
      require_same(x.size(), state_action_dim, "state-action feature length");
      F.row(static_cast<Eigen::Index>(s * nA + a)) = x.transpose();
    }
  }
  return F;
}

void verify_full_rank(const FeatureMap& features, const TabularMMDP& mdp) {
  const Mat Phi = features.state_matrix(mdp);
  const Mat F = features.state_action_matrix(mdp);
  if (Eigen::FullPivLU<Mat>(Phi).rank() != Phi.cols())
    throw NumericError("state feature matrix is not full column rank");
  if (Eigen::FullPivLU<Mat>(F).rank() != F.cols())
    throw NumericError("state-action feature matrix is not full column rank");
}

Mat joint_policy(const TabularMMDP& mdp, const std::vector<Mat>& local) {
  if (local.size() != mdp.n_agents()) throw InputError("need one local policy per agent");
  const std::size_t nA = mdp.n_joint_actions();
  Mat pi(static_cast<Eigen::Index>(mdp.n_states), static_cast<Eigen::Index>(nA));
  for (std::size_t i = 0; i < local.size(); ++i) {
    if (local[i].rows() != static_cast<Eigen::Index>(mdp.n_states) || local[i].cols() != mdp.local_actions[i])
      throw InputError("local policy table has wrong shape");
  }
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < nA; ++a) {
      const JointAction ja = mdp.decode_joint(a);
      double prob = 1.0;
      for (std::size_t i = 0; i < local.size(); ++i) prob *= local[i](static_cast<Eigen::Index>(s), ja[i]);
      pi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = prob;
    }
  }
  return pi;
}

FixedPointOracle build_oracle(const TabularMMDP& mdp, const FeatureMap& features, const Mat& policy,
                              const std::vector<std::size_t>& team) {
  mdp.validate();
  const auto nS = static_cast<Eigen::Index>(mdp.n_states);
  const auto nA = static_cast<Eigen::Index>(mdp.n_joint_actions());
  if (policy.rows() != nS || policy.cols() != nA) throw InputError("joint policy has wrong shape");

  std::vector<std::size_t> members = team;
  if (members.empty())
    for (std::size_t i = 0; i < mdp.n_agents(); ++i) members.push_back(i);

  FixedPointOracle o;
  o.Phi = features.state_matrix(mdp);
  o.F = features.state_action_matrix(mdp);

  Mat rbar = Mat::Zero(nS, nA);
  for (std::size_t i : members) rbar += mdp.rewards.at(i);
  rbar /= static_cast<double>(members.size());

  o.P = Mat::Zero(nS, nS);
  o.reward_pi = Vec::Zero(nS);
  o.reward_sa = Vec(nS * nA);
  for (Eigen::Index s = 0; s < nS; ++s) {
    for (Eigen::Index a = 0; a < nA; ++a) {
      o.P.row(s) += policy(s, a) * mdp.transition.row(s * nA + a);
      o.reward_pi(s) += policy(s, a) * rbar(s, a);
      o.reward_sa(s * nA + a) = rbar(s, a);
    }
  }
  o.d_state = stationary_distribution(o.P);
  o.d_pair = Vec(nS * nA);
  for (Eigen::Index s = 0; s < nS; ++s)
    for (Eigen::Index a = 0; a < nA; ++a) o.d_pair(s * nA + a) = o.d_state(s) * policy(s, a);
  return o;
}

Vec stationary_distribution(const Mat& P, double tol, int max_iter) {
  const Eigen::Index n = P.rows();
  if (n == 0 || P.cols() != n) throw InputError("transition matrix must be square and nonempty");
  for (Eigen::Index r = 0; r < n; ++r)
    if (std::abs(P.row(r).sum() - 1.0) > 1e-10 || (P.row(r).array() < 0.0).any())
      throw InputError("transition matrix must be row-stochastic");

  const Mat Pt = P.transpose();
  auto iterate = [&](Eigen::Index start) {
    Vec d = Vec::Zero(n);
    d(start) = 1.0;
    for (int it = 0; it < max_iter; ++it) {
      Vec next = Pt * d;
      next /= next.sum();
      const double change = (next - d).cwiseAbs().maxCoeff();
      d = std::move(next);
      if (change <= tol) return d;
    }
    throw NumericError("stationary distribution did not converge (periodic chain?)");
  };
  Vec a = iterate(0);
  if (n > 1) {
    const Vec b = iterate(n - 1);
    if ((a - b).cwiseAbs().maxCoeff() > 1e-9)
      throw NumericError("chain has more than one stationary distribution");
  }
  return a;
}

namespace {

Vec solve_checked(const Mat& A, const Vec& rhs, const char* what) {
  Eigen::ColPivHouseholderQR<Mat> qr(A);
  if (qr.rank() < A.cols()) throw NumericError(std::string(what) + ": singular system");
  Vec x = qr.solve(rhs);
  // one step of iterative refinement
  x += qr.solve(rhs - A * x);
  return x;
}

}  // namespace

Vec critic_fixed_point_residual(const FixedPointOracle& o, double gamma, const Vec& v) {
  const Vec Phiv = o.Phi * v;
  return o.Phi.transpose() * o.d_state.asDiagonal() * (o.reward_pi + gamma * (o.P * Phiv) - Phiv);
}

Vec reward_fixed_point_residual(const FixedPointOracle& o, const Vec& lambda) {
  return o.F.transpose() * o.d_pair.asDiagonal() * (o.reward_sa - o.F * lambda);
}

Vec solve_critic_fixed_point(const FixedPointOracle& o, double gamma) {
  const Mat DPhi = o.d_state.asDiagonal() * o.Phi;
  const Mat A = DPhi.transpose() * (o.Phi - gamma * o.P * o.Phi);
  const Vec b = DPhi.transpose() * o.reward_pi;
  Vec v = solve_checked(A, b, "critic fixed point");
  if (critic_fixed_point_residual(o, gamma, v).cwiseAbs().maxCoeff() > 1e-10)
    throw NumericError("critic fixed point residual above 1e-10");
  return v;
}

Vec solve_reward_fixed_point(const FixedPointOracle& o) {
  const Mat DF = o.d_pair.asDiagonal() * o.F;
  const Mat A = DF.transpose() * o.F;
  const Vec b = DF.transpose() * o.reward_sa;
  Vec lambda = solve_checked(A, b, "reward fixed point");
  if (reward_fixed_point_residual(o, lambda).cwiseAbs().maxCoeff() > 1e-10)
    throw NumericError("reward fixed point residual above 1e-10");
  return lambda;
}

}  // namespace rcac
