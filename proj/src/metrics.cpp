#include <fstream>

#include "rcac/error.hpp"
#include "rcac/harness.hpp"

namespace rcac {

namespace {

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << header << '\n';
  return out;
}

void close_csv(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_training_csv(const RunMetrics& m, const std::filesystem::path& path) {
  auto out = open_csv(path, "episode,agent_id,return,disagreement_v,disagreement_lambda");
  for (const auto& e : m.episodes)
    for (std::size_t i = 0; i < e.returns.size(); ++i)
      out << e.episode << ',' << i << ',' << e.returns[i] << ',' << e.disagreement_v << ',' << e.disagreement_lambda
          << '\n';
  close_csv(out, path);
}

void write_evaluation_csv(const std::vector<EvalRecord>& evals, const std::filesystem::path& path) {
  auto out = open_csv(path, "episode,mean_team_return,stddev");
  for (const auto& e : evals) out << e.episode << ',' << e.mean_team_return << ',' << e.stddev << '\n';
  close_csv(out, path);
}

void write_example1_csv(const Example1Result& r, const std::filesystem::path& path) {
  auto out = open_csv(path, "step,agent_id,rhat_s0,rhat_s1");
  for (const auto& row : r.rows) out << row.step << ',' << row.agent << ',' << row.rhat_s0 << ',' << row.rhat_s1 << '\n';
  close_csv(out, path);
}

void export_csv(const RunMetrics& m, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_training_csv(m, dir / "training.csv");
  write_evaluation_csv(m.evaluations, dir / "evaluation.csv");
}

// ---------------------------------------------------------------------------

Example1Result run_example1(const Example1Options& opt) {
  if (!(opt.p > 0.0 && opt.p < 1.0)) throw InputError("p must lie in (0, 1)");
  if (!(opt.alpha > 0.0)) throw InputError("step size must be positive");
  if (opt.payload.size() != 2) throw InputError("payload must have two entries");
  const TabularMMDP mdp = example1_mdp(opt.p);
  constexpr std::size_t kCoop = 3;
  const std::size_t n = opt.adversary ? kCoop + 1 : kCoop;
  if (n <= 2 * opt.H) throw InputError("too few agents for the requested trimming");

  Example1Result res;
  std::vector<Vec> lambda(kCoop, Vec::Zero(2));
  std::vector<Vec> sent(n);
  Rng rng(opt.seed);
  StateIndex s = 0;
  const JointAction dummy(kCoop, 0);
  for (std::size_t t = 0; t < opt.steps; ++t) {
    Vec f(2);
    f << 1.0, static_cast<double>(s);
    for (std::size_t i = 0; i < kCoop; ++i) {
      const double r = mdp.rewards[i](static_cast<Eigen::Index>(s), 0);
      sent[i] = sgd_reward(lambda[i], opt.alpha, local_reward_error(r, lambda[i], f), f);
    }
    if (opt.adversary) sent[kCoop] = opt.payload;

    std::vector<Vec> next(kCoop);
    for (std::size_t i = 0; i < kCoop; ++i) {
      if (opt.method == EstimateMethod::TrimmedMean) {
        next[i] = elementwise_trimmed_mean(sent, opt.H);
        continue;
      }
      std::vector<NodeValue> errors;
      for (std::size_t j = 0; j < n; ++j) errors.push_back({j, project_error(sent[j], lambda[i], f, opt.alpha)});
      const auto retained = trim_select(errors, i, opt.H);
      const double agg = aggregate_uniform(errors, retained);
      double lo = errors[0].value;
      double hi = lo;
      for (std::size_t j = 0; j < kCoop; ++j) {
        lo = std::min(lo, errors[j].value);
        hi = std::max(hi, errors[j].value);
      }
      const double tol = 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)});
      ++res.containment_checks;
      if (agg < lo - tol || agg > hi + tol) ++res.containment_violations;
      next[i] = consensus_apply(lambda[i], opt.alpha, agg, f);
    }
    lambda = std::move(next);
    for (std::size_t i = 0; i < kCoop; ++i)
      res.rows.push_back({t, i, lambda[i](0), lambda[i](0) + lambda[i](1)});
    s = tabular_step(mdp, s, dummy, rng).next_state;
  }
  res.final_lambda = lambda;
  return res;
}

}  // namespace rcac
