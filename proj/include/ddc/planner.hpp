#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ddc/ilqr.hpp"
#include "ddc/model.hpp"
#include "ddc/planar_env.hpp"

namespace ddc {

using CostWeightsd = CostWeights<double>;

/// Q = I_2, R = 0.1 I_2.
CostWeightsd default_cost_weights(int latent_dim = 2, int action_dim = 2);

struct Plan {
  std::vector<Eigen::VectorXd> actions;     // T
  std::vector<Eigen::VectorXd> trajectory;  // T + 1 latent points, trajectory[0] = z_init
  Eigen::VectorXd goal;                     // latent encoding of the goal observation
  int iterations = 0;
  double cost = 0.0;
  bool converged = false;
  std::vector<double> cost_history;
  std::string stop_reason;

  int horizon() const { return static_cast<int>(actions.size()); }
};

/// Model-backed local dynamics: (A, B, c) = transition_params(z).
LocalDynamics<double> model_dynamics(const ModelParams& params);

/// Plans from the encoded x_init toward the encoded x_goal, starting from an
/// all-zero action nominal.
Plan ilqr_plan(const Image& x_init, const Image& x_goal, int horizon, const ModelParams& params,
               const CostWeightsd& weights, const IlqrOptions& options);

struct TrueRollout {
  std::vector<PlanarState> states;  // T + 1
  double planning_loss = 0.0;
};

/// Quadratic cost of a true-state trajectory and its actions.
double planning_loss(const std::vector<PlanarState>& states, const std::vector<Eigen::VectorXd>& actions,
                     const PlanarState& goal, const CostWeightsd& weights);

/// Applies plan.actions (clamped to the action box) to the true system.
TrueRollout rollout_true(const EnvConfig& env, const PlanarState& s0, const PlanarState& s_goal,
                         const std::vector<Eigen::VectorXd>& actions, const CostWeightsd& weights, Rng& rng);

/// Reached within `radius` at some step and stayed there until the end.
bool reached_and_stayed(const std::vector<PlanarState>& states, const PlanarState& goal, double radius);

using ObservationProvider = std::function<Image(const PlanarState&)>;

struct MpcResult {
  std::vector<PlanarState> states;            // T + 1
  std::vector<Eigen::VectorXd> actions;       // T
  std::vector<Plan> plans;                    // one per replan
  double planning_loss = 0.0;
};

/// Receding horizon: every `replan_every` steps, observe the current state,
/// plan a fresh horizon-T sequence and execute its first `replan_every`
/// actions. replan_every = T is the open-loop plan.
MpcResult mpc_execute(const EnvConfig& env, const ObservationProvider& observe, const PlanarState& s0,
                      const PlanarState& s_goal, const Image& x_goal, int horizon, int replan_every,
                      const ModelParams& params, const CostWeightsd& weights, const IlqrOptions& options, Rng& rng);

/// Key-value text: horizon, cost, iterations, converged, goal, actions,
/// trajectory (points as "a,b" joined by ';').
std::string format_plan(const Plan& plan);
Plan parse_plan(const std::string& text);

}  // namespace ddc
