#include "ddc/planner.hpp"

#include <sstream>

namespace ddc {

CostWeightsd default_cost_weights(int latent_dim, int action_dim) {
  return CostWeightsd::scaled_identity(latent_dim, action_dim, 1.0, 0.1);
}

LocalDynamics<double> model_dynamics(const ModelParams& params) {
  return [&params](const Eigen::VectorXd& z) { return transition_params(z, params); };
}

Plan ilqr_plan(const Image& x_init, const Image& x_goal, int horizon, const ModelParams& params,
               const CostWeightsd& weights, const IlqrOptions& options) {
  if (horizon < 1) throw std::invalid_argument("ilqr_plan: horizon must be at least 1");
  const Eigen::VectorXd z0 = encode_dynamics(x_init, params).mean;
  const Eigen::VectorXd goal = encode_dynamics(x_goal, params).mean;
  std::vector<Eigen::VectorXd> nominal(static_cast<std::size_t>(horizon),
                                       Eigen::VectorXd::Zero(params.hyper.action_dim));
  IlqrResult<double> r = ilqr<double>(model_dynamics(params), z0, goal, std::move(nominal), weights, options);
  Plan p;
  p.actions = std::move(r.actions);
  p.trajectory = std::move(r.trajectory);
  p.goal = goal;
  p.iterations = r.iterations;
  p.cost = r.cost;
  p.converged = r.converged;
  p.cost_history = std::move(r.cost_history);
  p.stop_reason = std::move(r.stop_reason);
  return p;
}

double planning_loss(const std::vector<PlanarState>& states, const std::vector<Eigen::VectorXd>& actions,
                     const PlanarState& goal, const CostWeightsd& w) {
  double j = 0.0;
  for (std::size_t t = 1; t < states.size(); ++t) {
    const Eigen::VectorXd e = states[t].position - goal.position;
    j += e.dot(w.Q() * e);
  }
  for (const auto& u : actions) j += u.dot(w.R() * u);
  return j;
}

TrueRollout rollout_true(const EnvConfig& env, const PlanarState& s0, const PlanarState& s_goal,
                         const std::vector<Eigen::VectorXd>& actions, const CostWeightsd& weights, Rng& rng) {
  TrueRollout out;
  out.states.push_back(s0);
  std::vector<Eigen::VectorXd> applied;
  for (const auto& u : actions) {
    const Action a = clamp_action(Action(u(0), u(1)), env.u_max);
    applied.push_back(a);
    out.states.push_back(step(out.states.back(), a, env, rng));
  }
  out.planning_loss = planning_loss(out.states, applied, s_goal, weights);
  return out;
}

bool reached_and_stayed(const std::vector<PlanarState>& states, const PlanarState& goal, double radius) {
  // Find the last step outside the radius; success means some step after it exists.
  std::size_t last_out = 0;
  bool any_out = false;
  for (std::size_t t = 0; t < states.size(); ++t)
    if ((states[t].position - goal.position).norm() > radius) {
      last_out = t;
      any_out = true;
    }
  return !any_out || last_out + 1 < states.size();
}

MpcResult mpc_execute(const EnvConfig& env, const ObservationProvider& observe, const PlanarState& s0,
                      const PlanarState& s_goal, const Image& x_goal, int horizon, int replan_every,
                      const ModelParams& params, const CostWeightsd& weights, const IlqrOptions& options, Rng& rng) {
  if (replan_every < 1) throw std::invalid_argument("mpc_execute: replan_every must be at least 1");
  if (horizon < 1) throw std::invalid_argument("mpc_execute: horizon must be at least 1");
  MpcResult out;
  out.states.push_back(s0);
  while (static_cast<int>(out.actions.size()) < horizon) {
    out.plans.push_back(ilqr_plan(observe(out.states.back()), x_goal, horizon, params, weights, options));
    const int n = std::min(replan_every, horizon - static_cast<int>(out.actions.size()));
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd& u = out.plans.back().actions[static_cast<std::size_t>(i)];
      const Action a = clamp_action(Action(u(0), u(1)), env.u_max);
      out.actions.push_back(a);
      out.states.push_back(step(out.states.back(), a, env, rng));
    }
  }
  out.planning_loss = planning_loss(out.states, out.actions, s_goal, weights);
  return out;
}

namespace {

std::string join_points(const std::vector<Eigen::VectorXd>& points) {
  std::string out;
  for (const auto& p : points) {
    if (!out.empty()) out += ';';
    for (Eigen::Index i = 0; i < p.size(); ++i) out += (i ? "," : "") + format_double(p(i));
  }
  return out;
}

std::vector<Eigen::VectorXd> split_points(const std::string& text) {
  std::vector<Eigen::VectorXd> out;
  std::istringstream list(text);
  std::string item;
  while (std::getline(list, item, ';')) {
    std::vector<double> values;
    std::istringstream coords(item);
    std::string c;
    while (std::getline(coords, c, ',')) values.push_back(std::stod(c));
    out.push_back(Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  return out;
}

}  // namespace

std::string format_plan(const Plan& plan) {
  KeyValues kv;
  kv["horizon"] = std::to_string(plan.horizon());
  kv["cost"] = format_double(plan.cost);
  kv["iterations"] = std::to_string(plan.iterations);
  kv["converged"] = plan.converged ? "true" : "false";
  kv["goal"] = join_points({plan.goal});
  kv["actions"] = join_points(plan.actions);
  kv["trajectory"] = join_points(plan.trajectory);
  std::string history;
  for (double c : plan.cost_history) history += (history.empty() ? "" : ",") + format_double(c);
  kv["cost_history"] = history;
  if (!plan.stop_reason.empty()) kv["stop_reason"] = plan.stop_reason;
  return format_key_values(kv);
}

Plan parse_plan(const std::string& text) {
  const KeyValues kv = parse_key_values(text);
  KeyReader r(kv);
  Plan p;
  const int horizon = r.require<int>("horizon");
  p.cost = r.require<double>("cost");
  p.iterations = r.require<int>("iterations");
  p.converged = r.require<bool>("converged");
  p.goal = split_points(r.require<std::string>("goal")).at(0);
  p.actions = split_points(r.require<std::string>("actions"));
  p.trajectory = split_points(r.require<std::string>("trajectory"));
  for (const auto& c : split_points(r.get<std::string>("cost_history", "")))
    for (Eigen::Index i = 0; i < c.size(); ++i) p.cost_history.push_back(c(i));
  p.stop_reason = r.get<std::string>("stop_reason", "");
  r.reject_unknown();
  if (p.horizon() != horizon || p.trajectory.size() != p.actions.size() + 1)
    throw ConfigError("plan: horizon, actions and trajectory lengths disagree");
  return p;
}

}  // namespace ddc
