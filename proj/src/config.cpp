#include "rcac/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "rcac/error.hpp"

namespace rcac {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Schedules

void Schedule::validate(const std::string& field) const {
  if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError(field, "step size must be positive");
  if (kind == Kind::Diminishing) {
    if (!(b > 0.0)) throw ConfigError(field, "schedule b must be positive");
    if (!(p > 0.5 && p <= 1.0)) throw ConfigError(field, "schedule exponent must lie in (0.5, 1]");
  }
}

double step_schedule(const Schedule& s, std::size_t t) {
  if (s.kind == Schedule::Kind::Constant) return s.a;
  return s.a / std::pow(1.0 + static_cast<double>(t) / s.b, s.p);
}

void validate_timescales(const Schedule& actor, const Schedule& critic, const Schedule& reward) {
  auto check = [&](const Schedule& fast, const char* name) {
    if (fast.kind == Schedule::Kind::Constant) return;
    if (actor.kind == Schedule::Kind::Constant)
      throw ConfigError("steps.actor", std::string("constant actor step with a diminishing ") + name + " step");
    const bool slower = actor.p > fast.p || (actor.p == fast.p && actor.a < fast.a);
    if (!slower) throw ConfigError("steps.actor", std::string("actor step must decay faster than the ") + name + " step");
  };
  check(critic, "critic");
  check(reward, "reward");
}

// ---------------------------------------------------------------------------
// Validation

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Alg1: return "alg1";
    case Algorithm::Alg2: return "alg2";
    case Algorithm::Alg3: return "alg3";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (n_agents < 1) throw ConfigError("n_agents", "must be at least 1");
  if (algorithm == Algorithm::Alg1 && H != 0) throw ConfigError("H", "alg1 does not trim; use alg2");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma", "must lie in [0, 1)");
  alpha_v.validate("steps.critic");
  alpha_lambda.validate("steps.reward");
  alpha_theta.validate("steps.actor");
  validate_timescales(alpha_theta, alpha_v, alpha_lambda);
  if (steps_per_episode < 1) throw ConfigError("steps_per_episode", "must be at least 1");
  if (algorithm == Algorithm::Alg3 && epochs_per_episode < 1)
    throw ConfigError("epochs_per_episode", "must be at least 1");
  if (eval_rollouts < 1) throw ConfigError("eval_rollouts", "must be at least 1");
  if (!(actor_bound > 0.0)) throw ConfigError("actor_bound", "must be positive");
  if (policy_init_scale < 0.0 || policy_init_scale > actor_bound)
    throw ConfigError("policy_init_scale", "must lie in [0, actor_bound]");
  std::set<std::size_t> seen;
  for (std::size_t k = 0; k < adversaries.size(); ++k) {
    const auto& a = adversaries[k];
    const std::string field = "adversaries[" + std::to_string(k) + "]";
    if (a.node >= n_agents) throw ConfigError(field + ".node", "not a node of the graph");
    if (!seen.insert(a.node).second) throw ConfigError(field + ".node", "listed twice");
    if (a.kind == AdversaryKind::Custom) throw ConfigError(field + ".kind", "custom attacks are supplied in code");
    if (a.payload && a.kind != AdversaryKind::Faulty) throw ConfigError(field + ".payload", "only faulty agents carry a payload");
    if (a.payload && algorithm == Algorithm::Alg3)
      throw ConfigError(field + ".payload", "deep faulty agents broadcast their initial networks");
  }
  if (adversaries.size() >= n_agents) throw ConfigError("adversaries", "at least one cooperative agent is required");
  for (int h : network.hidden)
    if (h < 1) throw ConfigError("network.hidden", "layer sizes must be positive");
  if (!(network.slope >= 0.0 && network.slope < 1.0)) throw ConfigError("network.slope", "must lie in [0, 1)");
  if (!(network.grad_clip >= 0.0) || !std::isfinite(network.grad_clip))
    throw ConfigError("network.grad_clip", "must be a finite nonnegative number");
  const auto& e = environment;
  if (e.kind == EnvironmentConfig::Kind::Grid) {
    if (static_cast<std::size_t>(e.n_agents) != n_agents) throw ConfigError("environment.n_agents", "must equal n_agents");
    if (e.width < 1 || e.height < 1) throw ConfigError("environment.width", "grid must be nonempty");
    if (e.collision_penalty < 0.0) throw ConfigError("environment.collision_penalty", "must be nonnegative");
  }
  if (e.kind == EnvironmentConfig::Kind::TabularRandom) {
    if (e.local_actions.size() != n_agents) throw ConfigError("environment.local_actions", "one entry per agent");
    if (e.n_states < 1) throw ConfigError("environment.n_states", "must be at least 1");
  }
  if (e.kind == EnvironmentConfig::Kind::Example1 && !(e.example1_p >= 0.0 && e.example1_p <= 1.0))
    throw ConfigError("environment.p", "must lie in [0, 1]");
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
  }
}

std::string join(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

template <class T>
void read(const json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& ex) {
    throw ConfigError(join(where, key), std::string("wrong type: ") + ex.what());
  }
}

template <class E>
E read_enum(const json& j, const std::string& where, const char* key, E fallback,
            std::initializer_list<std::pair<const char*, E>> names) {
  if (!j.contains(key)) return fallback;
  std::string s;
  read(j, where, key, s);
  for (const auto& [n, v] : names)
    if (s == n) return v;
  throw ConfigError(join(where, key), "unrecognized value '" + s + "'");
}

Schedule parse_schedule(const json& j, const std::string& field) {
  if (j.is_number()) return Schedule::constant(j.get<double>());
  check_keys(j, field, {"kind", "a", "b", "p"});
  Schedule s;
  s.kind = read_enum(j, field, "kind", Schedule::Kind::Constant,
                     {{"constant", Schedule::Kind::Constant}, {"diminishing", Schedule::Kind::Diminishing}});
  read(j, field, "a", s.a);
  read(j, field, "b", s.b);
  read(j, field, "p", s.p);
  return s;
}

json schedule_json(const Schedule& s) {
  if (s.kind == Schedule::Kind::Constant) return s.a;
  return {{"kind", "diminishing"}, {"a", s.a}, {"b", s.b}, {"p", s.p}};
}

std::vector<Cell> parse_cells(const json& j, const std::string& field) {
  std::vector<Cell> out;
  if (!j.is_array()) throw ConfigError(field, "expected an array of [x, y] pairs");
  for (const auto& c : j) {
    if (!c.is_array() || c.size() != 2 || !c[0].is_number_integer() || !c[1].is_number_integer())
      throw ConfigError(field, "expected [x, y] integer pairs");
    out.push_back({c[0].get<int>(), c[1].get<int>()});
  }
  return out;
}

Vec parse_vec(const json& j, const std::string& field) {
  std::vector<double> v;
  try {
    v = j.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ConfigError(field, "expected an array of numbers");
  }
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

EnvironmentConfig parse_environment(const json& j) {
  const std::string where = "environment";
  check_keys(j, where, {"kind", "width", "height", "n_agents", "collision_penalty", "layout_seed", "targets", "starts",
                        "encoding", "n_states", "local_actions", "mdp_seed", "path", "initial_state", "p"});
  EnvironmentConfig e;
  e.kind = read_enum(j, where, "kind", EnvironmentConfig::Kind::Grid,
                     {{"grid", EnvironmentConfig::Kind::Grid},
                      {"tabular_random", EnvironmentConfig::Kind::TabularRandom},
                      {"tabular_file", EnvironmentConfig::Kind::TabularFile},
                      {"example1", EnvironmentConfig::Kind::Example1}});
  read(j, where, "width", e.width);
  read(j, where, "height", e.height);
  read(j, where, "n_agents", e.n_agents);
  read(j, where, "collision_penalty", e.collision_penalty);
  read(j, where, "layout_seed", e.layout_seed);
  if (j.contains("targets")) e.targets = parse_cells(j["targets"], where + ".targets");
  if (j.contains("starts")) e.starts = parse_cells(j["starts"], where + ".starts");
  if (j.contains("encoding"))
    e.encoding = read_enum(j, where, "encoding", InputEncoding::OneHot,
                           {{"onehot", InputEncoding::OneHot}, {"coords", InputEncoding::Coords}});
  read(j, where, "n_states", e.n_states);
  read(j, where, "local_actions", e.local_actions);
  read(j, where, "mdp_seed", e.mdp_seed);
  std::string path;
  read(j, where, "path", path);
  e.path = path;
  read(j, where, "initial_state", e.initial_state);
  read(j, where, "p", e.example1_p);
  return e;
}

}  // namespace

TrainConfig parse_config(const json& j) {
  check_keys(j, "", {"algorithm", "environment", "graph", "n_agents", "adversaries", "H", "gamma", "steps", "episodes",
                     "steps_per_episode", "epochs_per_episode", "batch_size", "eval_every", "eval_rollouts", "seed",
                     "seeds", "train_actor", "feature_bias", "policy_init_scale", "actor_bound", "network",
                     "consensus_per", "actor_reduction", "actor_order", "early_stop", "parallel_agents",
                     "record_rounds"});
  TrainConfig c;
  c.algorithm = read_enum(j, "", "algorithm", Algorithm::Alg2,
                          {{"alg1", Algorithm::Alg1}, {"alg2", Algorithm::Alg2}, {"alg3", Algorithm::Alg3}});
  if (j.contains("environment")) c.environment = parse_environment(j["environment"]);
  if (j.contains("graph")) {
    const auto& g = j["graph"];
    check_keys(g, "graph", {"kind", "path"});
    c.graph.kind = read_enum(g, "graph", "kind", GraphConfig::Kind::Complete,
                             {{"complete", GraphConfig::Kind::Complete},
                              {"ring", GraphConfig::Kind::Ring},
                              {"file", GraphConfig::Kind::File}});
    std::string path;
    read(g, "graph", "path", path);
    c.graph.path = path;
    if (c.graph.kind == GraphConfig::Kind::File && path.empty()) throw ConfigError("graph.path", "required for kind file");
  }
  read(j, "", "n_agents", c.n_agents);
  if (j.contains("adversaries")) {
    if (!j["adversaries"].is_array()) throw ConfigError("adversaries", "expected an array");
    std::size_t k = 0;
    for (const auto& a : j["adversaries"]) {
      const std::string where = "adversaries[" + std::to_string(k++) + "]";
      check_keys(a, where, {"node", "kind", "payload"});
      if (!a.contains("node")) throw ConfigError(where + ".node", "required");
      AdversaryConfig ac;
      read(a, where, "node", ac.node);
      ac.kind = read_enum(a, where, "kind", AdversaryKind::Greedy,
                          {{"greedy", AdversaryKind::Greedy},
                           {"faulty", AdversaryKind::Faulty},
                           {"strategic", AdversaryKind::Strategic},
                           {"custom", AdversaryKind::Custom}});
      if (a.contains("payload")) {
        const auto& p = a["payload"];
        check_keys(p, where + ".payload", {"v", "lambda"});
        if (!p.contains("v") || !p.contains("lambda")) throw ConfigError(where + ".payload", "needs v and lambda");
        ac.payload = LinearParams{parse_vec(p["v"], where + ".payload.v"), parse_vec(p["lambda"], where + ".payload.lambda")};
      }
      c.adversaries.push_back(ac);
    }
  }
  read(j, "", "H", c.H);
  read(j, "", "gamma", c.gamma);
  if (j.contains("steps")) {
    const auto& s = j["steps"];
    check_keys(s, "steps", {"critic", "reward", "actor"});
    if (s.contains("critic")) c.alpha_v = parse_schedule(s["critic"], "steps.critic");
    if (s.contains("reward")) c.alpha_lambda = parse_schedule(s["reward"], "steps.reward");
    if (s.contains("actor")) c.alpha_theta = parse_schedule(s["actor"], "steps.actor");
  }
  read(j, "", "episodes", c.episodes);
  read(j, "", "steps_per_episode", c.steps_per_episode);
  read(j, "", "epochs_per_episode", c.epochs_per_episode);
  read(j, "", "batch_size", c.batch_size);
  read(j, "", "eval_every", c.eval_every);
  read(j, "", "eval_rollouts", c.eval_rollouts);
  read(j, "", "seed", c.seed);
  read(j, "", "seeds", c.seeds);
  read(j, "", "train_actor", c.train_actor);
  read(j, "", "feature_bias", c.feature_bias);
  read(j, "", "policy_init_scale", c.policy_init_scale);
  read(j, "", "actor_bound", c.actor_bound);
  if (j.contains("network")) {
    const auto& n = j["network"];
    check_keys(n, "network", {"hidden", "slope", "init", "shared_init", "grad_clip"});
    read(n, "network", "hidden", c.network.hidden);
    read(n, "network", "slope", c.network.slope);
    c.network.zero_init = read_enum(n, "network", "init", false, {{"uniform", false}, {"zero", true}});
    read(n, "network", "shared_init", c.network.shared_init);
    read(n, "network", "grad_clip", c.network.grad_clip);
  }
  c.consensus_per = read_enum(j, "", "consensus_per", ConsensusPer::Epoch,
                              {{"epoch", ConsensusPer::Epoch}, {"sample", ConsensusPer::Sample}});
  c.actor_reduction = read_enum(j, "", "actor_reduction", BatchReduction::Mean,
                                {{"mean", BatchReduction::Mean}, {"sum", BatchReduction::Sum}});
  c.actor_order = read_enum(j, "", "actor_order", ActorOrder::AfterEpochs,
                            {{"before_epochs", ActorOrder::BeforeEpochs}, {"after_epochs", ActorOrder::AfterEpochs}});
  if (j.contains("early_stop")) {
    const auto& e = j["early_stop"];
    check_keys(e, "early_stop", {"window", "disagreement_tol", "return_tol"});
    read(e, "early_stop", "window", c.early_stop.window);
    read(e, "early_stop", "disagreement_tol", c.early_stop.disagreement_tol);
    read(e, "early_stop", "return_tol", c.early_stop.return_tol);
  }
  read(j, "", "parallel_agents", c.parallel_agents);
  read(j, "", "record_rounds", c.record_rounds);
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw ConfigError("<file>", std::string("malformed JSON: ") + ex.what());
  }
  TrainConfig c = parse_config(j);
  // Relative paths inside the config are resolved against its directory.
  const auto base = path.parent_path();
  if (!c.graph.path.empty() && c.graph.path.is_relative()) c.graph.path = base / c.graph.path;
  if (!c.environment.path.empty() && c.environment.path.is_relative()) c.environment.path = base / c.environment.path;
  return c;
}

json to_json(const TrainConfig& c) {
  json env;
  const auto& e = c.environment;
  switch (e.kind) {
    case EnvironmentConfig::Kind::Grid: {
      env = {{"kind", "grid"}, {"width", e.width}, {"height", e.height}, {"n_agents", e.n_agents},
             {"collision_penalty", e.collision_penalty}, {"layout_seed", e.layout_seed}};
      auto cells = [](const std::vector<Cell>& v) {
        json a = json::array();
        for (const auto& cell : v) a.push_back({cell.x, cell.y});
        return a;
      };
      if (!e.targets.empty()) env["targets"] = cells(e.targets);
      if (!e.starts.empty()) env["starts"] = cells(e.starts);
      break;
    }
    case EnvironmentConfig::Kind::TabularRandom:
      env = {{"kind", "tabular_random"}, {"n_states", e.n_states}, {"local_actions", e.local_actions},
             {"mdp_seed", e.mdp_seed}, {"initial_state", e.initial_state}};
      break;
    case EnvironmentConfig::Kind::TabularFile:
      env = {{"kind", "tabular_file"}, {"path", e.path.string()}, {"initial_state", e.initial_state}};
      break;
    case EnvironmentConfig::Kind::Example1:
      env = {{"kind", "example1"}, {"p", e.example1_p}, {"initial_state", e.initial_state}};
      break;
  }
  if (e.encoding) env["encoding"] = *e.encoding == InputEncoding::OneHot ? "onehot" : "coords";

  json graph = {{"kind", c.graph.kind == GraphConfig::Kind::Complete ? "complete"
                         : c.graph.kind == GraphConfig::Kind::Ring   ? "ring"
                                                                     : "file"}};
  if (c.graph.kind == GraphConfig::Kind::File) graph["path"] = c.graph.path.string();

  json adv = json::array();
  for (const auto& a : c.adversaries) {
    json x = {{"node", a.node}, {"kind", to_string(a.kind)}};
    if (a.payload) x["payload"] = {{"v", to_std(a.payload->v)}, {"lambda", to_std(a.payload->lambda)}};
    adv.push_back(x);
  }
  json out = {
      {"algorithm", to_string(c.algorithm)},
      {"environment", env},
      {"graph", graph},
      {"n_agents", c.n_agents},
      {"adversaries", adv},
      {"H", c.H},
      {"gamma", c.gamma},
      {"steps",
       {{"critic", schedule_json(c.alpha_v)}, {"reward", schedule_json(c.alpha_lambda)},
        {"actor", schedule_json(c.alpha_theta)}}},
      {"episodes", c.episodes},
      {"steps_per_episode", c.steps_per_episode},
      {"epochs_per_episode", c.epochs_per_episode},
      {"batch_size", c.batch_size},
      {"eval_every", c.eval_every},
      {"eval_rollouts", c.eval_rollouts},
      {"seed", c.seed},
      {"seeds", c.seeds},
      {"train_actor", c.train_actor},
      {"feature_bias", c.feature_bias},
      {"policy_init_scale", c.policy_init_scale},
      {"actor_bound", c.actor_bound},
      {"network",
       {{"hidden", c.network.hidden}, {"slope", c.network.slope}, {"init", c.network.zero_init ? "zero" : "uniform"},
        {"shared_init", c.network.shared_init}, {"grad_clip", c.network.grad_clip}}},
      {"consensus_per", c.consensus_per == ConsensusPer::Epoch ? "epoch" : "sample"},
      {"actor_reduction", c.actor_reduction == BatchReduction::Mean ? "mean" : "sum"},
      {"actor_order", c.actor_order == ActorOrder::BeforeEpochs ? "before_epochs" : "after_epochs"},
      {"early_stop",
       {{"window", c.early_stop.window}, {"disagreement_tol", c.early_stop.disagreement_tol},
        {"return_tol", c.early_stop.return_tol}}},
      {"parallel_agents", c.parallel_agents},
      {"record_rounds", c.record_rounds},
  };
  return out;
}

// ---------------------------------------------------------------------------
// MDP files

MdpFile parse_mdp_json(const json& j) {
  check_keys(j, "", {"n_states", "local_actions", "transition", "rewards", "discount", "policy"});
  for (const char* k : {"n_states", "local_actions", "transition", "rewards"})
    if (!j.contains(k)) throw ConfigError(k, "required");
  MdpFile f;
  auto& m = f.mdp;
  read(j, "", "n_states", m.n_states);
  read(j, "", "local_actions", m.local_actions);
  m.discount = 0.9;
  read(j, "", "discount", m.discount);
  auto matrix = [](const json& a, const std::string& field) {
    if (!a.is_array() || a.empty()) throw ConfigError(field, "expected a nonempty array of rows");
    Mat out(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(a[0].size()));
    for (std::size_t r = 0; r < a.size(); ++r) {
      const Vec row = parse_vec(a[r], field);
      if (row.size() != out.cols()) throw ConfigError(field, "ragged rows");
      out.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return out;
  };
  m.transition = matrix(j["transition"], "transition");
  if (!j["rewards"].is_array()) throw ConfigError("rewards", "expected one table per agent");
  for (std::size_t i = 0; i < j["rewards"].size(); ++i)
    m.rewards.push_back(matrix(j["rewards"][i], "rewards[" + std::to_string(i) + "]"));
  try {
    m.validate();
  } catch (const InputError& ex) {
    throw ConfigError("transition", ex.what());
  }
  const auto S = static_cast<Eigen::Index>(m.n_states);
  if (j.contains("policy")) {
    if (!j["policy"].is_array() || j["policy"].size() != m.n_agents())
      throw ConfigError("policy", "one table per agent required");
    for (std::size_t i = 0; i < m.n_agents(); ++i) {
      Mat p = matrix(j["policy"][i], "policy[" + std::to_string(i) + "]");
      if (p.rows() != S || p.cols() != m.local_actions[i]) throw ConfigError("policy", "table has wrong shape");
      if ((p.array() < 0.0).any() || ((p.rowwise().sum().array() - 1.0).abs() > 1e-9).any())
        throw ConfigError("policy", "rows must be probability vectors");
      f.policy.push_back(std::move(p));
    }
  } else {
    for (std::size_t i = 0; i < m.n_agents(); ++i)
      f.policy.push_back(Mat::Constant(S, m.local_actions[i], 1.0 / m.local_actions[i]));
  }
  return f;
}

MdpFile load_mdp_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open MDP file " + path.string());
  try {
    return parse_mdp_json(json::parse(in));
  } catch (const json::parse_error& ex) {
    throw ConfigError("<file>", std::string("malformed JSON: ") + ex.what());
  }
}

}  // namespace rcac
