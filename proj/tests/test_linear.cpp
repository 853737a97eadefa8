#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "rcac/error.hpp"
#include "rcac/linear.hpp"

using namespace rcac;

namespace {

Vec random_vec(Eigen::Index n, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double dot_loop(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) s += a(k) * b(k);
  return s;
}

// log-sum-exp softmax written out independently.
Vec reference_softmax(const Vec& scores) {
  const double m = scores.maxCoeff();
  double z = 0.0;
  for (auto s : scores) z += std::exp(s - m);
  Vec p(scores.size());
  for (Eigen::Index k = 0; k < scores.size(); ++k) p(k) = std::exp(scores(k) - m - std::log(z));
  return p;
}

Mat random_scores(int n_actions, Eigen::Index dim, Rng& rng) {
  Mat X(n_actions, dim);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index r = 0; r < X.rows(); ++r)
    for (Eigen::Index c = 0; c < X.cols(); ++c) X(r, c) = u(rng);
  return X;
}

Vec one_hot(Eigen::Index n, Eigen::Index k) {
  Vec e = Vec::Zero(n);
  e(k) = 1.0;
  return e;
}

}  // namespace

TEST_CASE("values are inner products") {
  CHECK(critic_value(Vec::Zero(4), Vec::Ones(4)) == 0.0);
  CHECK(reward_value((Vec(2) << 2.0, -4.0).finished(), (Vec(2) << 1.0, 1.0).finished()) == -2.0);
  Rng rng(1);
  for (int k = 0; k < 20; ++k) {
    const Vec v = random_vec(7, rng);
    const Vec phi = random_vec(7, rng);
    CHECK(critic_value(v, phi) == doctest::Approx(dot_loop(v, phi)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(critic_value(Vec::Zero(3), Vec::Zero(4)), InputError);
}

TEST_CASE("local TD and reward errors") {
  CHECK(local_td_error(1.5, Vec::Zero(3), one_hot(3, 0), one_hot(3, 1), 0.9) == 1.5);
  Vec v = Vec::Zero(3);
  v(1) = 0.7;
  CHECK(local_td_error(0.7, v, one_hot(3, 1), one_hot(3, 2), 0.0) == 0.0);
  // V_t = 2, V_t+1 = 1.
  const Vec w = (Vec(2) << 2.0, 1.0).finished();
  CHECK(local_td_error(1.0, w, one_hot(2, 0), one_hot(2, 1), 0.9) == doctest::Approx(-0.1).epsilon(1e-14));

  CHECK(local_reward_error(3.0, Vec::Zero(2), Vec::Ones(2)) == 3.0);
  const Vec lam = (Vec(2) << 2.0, -4.0).finished();
  CHECK(local_reward_error(-2.0, lam, Vec::Ones(2)) == 0.0);
  Rng rng(2);
  const Vec l = random_vec(5, rng);
  const Vec f = random_vec(5, rng);
  CHECK(local_reward_error(0.3, l, f) == doctest::Approx(0.3 - dot_loop(l, f)).epsilon(1e-14));
}

TEST_CASE("SGD steps move along the feature") {
  const Vec v = (Vec(2) << 0.4, -1.0).finished();
  CHECK(sgd_critic(v, 0.5, 0.0, Vec::Ones(2)) == v);
  const Vec moved = sgd_critic(Vec::Zero(2), 0.1, 2.0, (Vec(2) << 1.0, 0.0).finished());
  CHECK(moved(0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(moved(1) == 0.0);
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const Vec x = random_vec(6, rng);
    const Vec phi = random_vec(6, rng);
    const Vec d = sgd_reward(x, 0.05, 1.7, phi) - x;
    // d is parallel to phi: |d . phi| = |d| |phi|.
    CHECK(std::abs(d.dot(phi)) == doctest::Approx(d.norm() * phi.norm()).epsilon(1e-12));
  }
}

TEST_CASE("repeated TD on one self-loop pair converges to the scalar limit") {
  // One-hot state that transitions to itself: v = r / (1 - gamma).
  for (bool self : {true, false}) {
    const Vec phi = one_hot(2, 0);
    const Vec next = self ? phi : one_hot(2, 1);
    const double gamma = 0.8;
    const double r = 1.3;
    Vec v = Vec::Zero(2);
    for (int t = 0; t < 5000; ++t) v = sgd_critic(v, 0.1, local_td_error(r, v, phi, next, gamma), phi);
    CHECK(v(0) == doctest::Approx(r / (1.0 - gamma * (self ? 1.0 : 0.0))).epsilon(1e-10));
  }
}

TEST_CASE("softmax probabilities") {
  const auto zero = SoftmaxPolicy::zeros(5 * 3);
  const Mat X = action_block_features(Vec::Ones(3), 5, false);
  const Vec p = policy_probs(zero, X);
  for (auto x : p) CHECK(x == doctest::Approx(0.2).epsilon(1e-15));

  // Scaling theta toward one action increases its probability monotonically.
  const Mat E = Mat::Identity(4, 4);
  SoftmaxPolicy pol = SoftmaxPolicy::zeros(4);
  double last = 0.0;
  for (double c : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    pol.theta = (Vec(4) << c, 0.0, -0.2 * c, 0.1 * c).finished();
    const double p0 = policy_probs(pol, E)(0);
    CHECK(p0 >= last);
    last = p0;
  }
  CHECK(last > 0.99);

  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    SoftmaxPolicy q = SoftmaxPolicy::zeros(6);
    q.theta = random_vec(6, rng, 3.0);
    const Mat S = random_scores(4, 6, rng);
    const Vec probs = policy_probs(q, S);
    const Vec ref = reference_softmax(S * q.theta);
    CHECK(probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(probs.minCoeff() > 0.0);
    for (Eigen::Index a = 0; a < 4; ++a) CHECK(probs(a) == doctest::Approx(ref(a)).epsilon(1e-12));
  }
}

TEST_CASE("log policy gradient") {
  const auto zero = SoftmaxPolicy::zeros(5);
  const Vec psi = log_policy_grad(zero, Mat::Identity(5, 5), 2);
  CHECK(psi(2) == doctest::Approx(1.0 - 0.2).epsilon(1e-15));
  CHECK(psi(0) == doctest::Approx(-0.2).epsilon(1e-15));

  Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    SoftmaxPolicy q = SoftmaxPolicy::zeros(5);
    q.theta = random_vec(5, rng, 2.0);
    const Mat S = random_scores(3, 5, rng);
    const int a = static_cast<int>(k % 3);
    const auto logp = [&](const Vec& th) {
      SoftmaxPolicy t = q;
      t.theta = th;
      return std::log(policy_probs(t, S)(a));
    };
    const Vec g = log_policy_grad(q, S, a);
    const Vec fd = oracle::numeric_gradient(logp, q.theta, 1e-6);
    CHECK(oracle::max_relative_error(g, fd, 1e-6) <= 1e-5);

    // Score identity.
    const Vec p = policy_probs(q, S);
    Vec acc = Vec::Zero(5);
    for (int b = 0; b < 3; ++b) acc += p(b) * log_policy_grad(q, S, b);
    CHECK(acc.lpNorm<Eigen::Infinity>() <= 1e-10);
  }
}

TEST_CASE("actor step clips to the box") {
  auto pol = SoftmaxPolicy::zeros(3, -1.0, 1.0);
  pol.theta << 0.5, 0.0, -0.5;
  CHECK(actor_step(pol, 0.1, 0.0, Vec::Ones(3)).theta == pol.theta);
  const auto up = actor_step(pol, 1.0, 1.0, (Vec(3) << 10.0, 0.2, -10.0).finished());
  CHECK(up.theta(0) == 1.0);
  CHECK(up.theta(1) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(up.theta(2) == -1.0);
  const auto small = actor_step(pol, 0.01, 2.0, (Vec(3) << 1.0, -1.0, 3.0).finished());
  CHECK(small.theta(0) == doctest::Approx(0.52).epsilon(1e-14));
  CHECK(small.theta(1) == doctest::Approx(-0.02).epsilon(1e-14));
  CHECK(small.theta(2) == doctest::Approx(-0.44).epsilon(1e-14));
  Rng rng(6);
  for (int k = 0; k < 100; ++k) {
    const auto next = actor_step(pol, 1.0, 5.0, random_vec(3, rng, 10.0));
    CHECK((next.theta.array() <= next.hi.array()).all());
    CHECK((next.theta.array() >= next.lo.array()).all());
  }
  const SoftmaxPolicy bad{Vec::Zero(2), Vec::Ones(2), Vec::Ones(2)};
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("estimated global TD") {
  CHECK(estimated_global_td(Vec::Zero(2), Vec::Zero(2), Vec::Ones(2), one_hot(2, 0), one_hot(2, 1), 0.9) == 0.0);
  // Exact-fit lambda on the two-state chain reproduces the TD error of the true team reward.
  const Vec lam = (Vec(2) << 2.0, -4.0).finished();
  const Vec v = (Vec(2) << 0.3, -0.8).finished();
  for (int s = 0; s < 2; ++s)
    for (int s2 = 0; s2 < 2; ++s2) {
      const Vec f = (Vec(2) << 1.0, s).finished();
      const double truth = local_td_error(2.0 - 4.0 * s, v, one_hot(2, s), one_hot(2, s2), 0.9);
      CHECK(estimated_global_td(lam, v, f, one_hot(2, s), one_hot(2, s2), 0.9) ==
            doctest::Approx(truth).epsilon(1e-14));
    }
  Rng rng(7);
  const Vec l = random_vec(4, rng), w = random_vec(3, rng), f = random_vec(4, rng);
  const Vec p0 = random_vec(3, rng), p1 = random_vec(3, rng);
  CHECK(estimated_global_td(l, w, f, p0, p1, 0.7) ==
        doctest::Approx(dot_loop(f, l) + 0.7 * dot_loop(p1, w) - dot_loop(p0, w)).epsilon(1e-13));
}

TEST_CASE("stationary distribution") {
  Mat P(2, 2);
  P << 0.5, 0.5, 0.5, 0.5;
  const Vec d = stationary_distribution(P);
  CHECK(d(0) == doctest::Approx(0.5).epsilon(1e-12));
  Mat swap(2, 2);
  swap << 0.0, 1.0, 1.0, 0.0;
  CHECK_THROWS_AS(stationary_distribution(swap), NumericError);

  Rng rng(8);
  Mat Q(3, 3);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (Eigen::Index c = 0; c < 3; ++c) Q(r, c) = u(rng);
    Q.row(r) /= Q.row(r).sum();
  }
  // Direct solve of [P' - I; 1'] d = [0; 1].
  Mat A(4, 3);
  A.topRows(3) = Q.transpose() - Mat::Identity(3, 3);
  A.row(3).setOnes();
  Vec b = Vec::Zero(4);
  b(3) = 1.0;
  const Vec ref = A.colPivHouseholderQr().solve(b);
  const Vec got = stationary_distribution(Q);
  CHECK((got - ref).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("critic fixed point") {
  // Myopic one-hot case: the critic equals the team reward under the policy.
  const auto mdp = random_tabular_mdp(5, {2, 2}, 31);
  const auto fm = FeatureMap::one_hot(mdp);
  const std::vector<Mat> local{Mat::Constant(5, 2, 0.5), Mat::Constant(5, 2, 0.5)};
  const auto oracle = build_oracle(mdp, fm, joint_policy(mdp, local));
  const Vec v0 = solve_critic_fixed_point(oracle, 0.0);
  CHECK((v0 - oracle.reward_pi).lpNorm<Eigen::Infinity>() <= 1e-10);

  // Two-state chain with gamma > 0 against a dense solve of (I - gamma P) v = r.
  const auto ex = example1_mdp(0.3, 0.9);
  const auto exo = build_oracle(ex, FeatureMap::one_hot(ex), joint_policy(ex, {Mat::Ones(2, 1), Mat::Ones(2, 1), Mat::Ones(2, 1)}));
  const Vec vex = solve_critic_fixed_point(exo, 0.9);
  const Vec dense = (Mat::Identity(2, 2) - 0.9 * exo.P).lu().solve(exo.reward_pi);
  CHECK((vex - dense).lpNorm<Eigen::Infinity>() <= 1e-10);

  const auto big = random_tabular_mdp(10, {2, 3}, 77);
  Rng rng(9);
  std::vector<Mat> pol;
  for (int k : big.local_actions) {
    Mat m = (Mat::Random(10, k).array() + 1.5).matrix();
    for (Eigen::Index r = 0; r < 10; ++r) m.row(r) /= m.row(r).sum();
    pol.push_back(m);
  }
  const auto bo = build_oracle(big, FeatureMap::one_hot(big), joint_policy(big, pol));
  const Vec vb = solve_critic_fixed_point(bo, 0.95);
  CHECK(critic_fixed_point_residual(bo, 0.95, vb).lpNorm<Eigen::Infinity>() <= 1e-10);
  const Vec lb = solve_reward_fixed_point(bo);
  CHECK(reward_fixed_point_residual(bo, lb).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("reward fixed point") {
  // Two-state chain with f = [1, s] recovers 2 - 4s exactly.
  const auto ex = example1_mdp(0.5);
  FeatureMap fm;
  fm.state_dim = 2;
  fm.state_action_dim = 2;
  fm.state = [](StateIndex s) { return one_hot(2, static_cast<Eigen::Index>(s)); };
  fm.state_action = [](StateIndex s, std::size_t) { return (Vec(2) << 1.0, static_cast<double>(s)).finished(); };
  const auto o = build_oracle(ex, fm, joint_policy(ex, {Mat::Ones(2, 1), Mat::Ones(2, 1), Mat::Ones(2, 1)}));
  const Vec lam = solve_reward_fixed_point(o);
  CHECK(lam(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(lam(1) == doctest::Approx(-4.0).epsilon(1e-12));

  // One-hot F: the estimate is the team reward table.
  const auto mdp = random_tabular_mdp(4, {2, 2}, 12);
  const auto oh = build_oracle(mdp, FeatureMap::one_hot(mdp),
                               joint_policy(mdp, {Mat::Constant(4, 2, 0.5), Mat::Constant(4, 2, 0.5)}));
  CHECK((solve_reward_fixed_point(oh) - oh.reward_sa).lpNorm<Eigen::Infinity>() <= 1e-10);

  // Over-parameterized random features vs. weighted least squares normal equations.
  FeatureMap rf = FeatureMap::one_hot(mdp);
  Rng rng(10);
  const Mat G = Mat::Random(16, 6);
  rf.state_action_dim = 6;
  rf.state_action = [&](StateIndex s, std::size_t a) { return Vec(G.row(static_cast<Eigen::Index>(s * 4 + a)).transpose()); };
  const auto ro = build_oracle(mdp, rf, joint_policy(mdp, {Mat::Constant(4, 2, 0.5), Mat::Constant(4, 2, 0.5)}));
  const Mat D = ro.d_pair.asDiagonal();
  const Vec wls = (ro.F.transpose() * D * ro.F).ldlt().solve(ro.F.transpose() * D * ro.reward_sa);
  CHECK((solve_reward_fixed_point(ro) - wls).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("feature rank is verified") {
  const auto mdp = random_tabular_mdp(3, {2}, 4);
  CHECK_NOTHROW(verify_full_rank(FeatureMap::one_hot(mdp), mdp));
  FeatureMap bad = FeatureMap::one_hot(mdp);
  bad.state_dim = 2;
  bad.state = [](StateIndex) { return Vec::Ones(2); };
  CHECK_THROWS_AS(verify_full_rank(bad, mdp), NumericError);
}

TEST_CASE("action block features") {
  const Vec u = (Vec(2) << 3.0, -1.0).finished();
  const Mat X = action_block_features(u, 3, true);
  CHECK(X.rows() == 3);
  CHECK(X.cols() == 9);
  CHECK(X(1, 3) == 3.0);
  CHECK(X(1, 4) == -1.0);
  CHECK(X(1, 5) == 1.0);
  CHECK(X(1, 0) == 0.0);
}
