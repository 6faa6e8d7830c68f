#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddc/dataset.hpp"
#include "ddc/model.hpp"
#include "ddc/planner.hpp"
#include "ddc/trainer.hpp"

namespace ddc {

/// Which observation set: X renders shape_x and has actions, Y renders shape_y.
enum class SetId { x, y };

std::string to_string(SetId set);
SetId parse_set_id(const std::string& name);
AgentShape shape_of(SetId set, const EnvConfig& env);
DynamicsRole encoder_role(SetId set);

struct DataConfig {
  std::size_t n_x = 8000;
  std::size_t n_y = 2000;
  std::uint64_t seed = 0;
  /// Held-out evaluation records per kind, drawn from `eval_seed`.
  std::size_t n_eval = 500;
  std::uint64_t eval_seed = 1;
  int workers = 1;
  /// Empty means <output.dir>/dataset.ddc.
  std::filesystem::path path;
};

struct PlanConfig {
  int horizon = 40;
  double q = 1.0;
  double r = 0.1;
  int max_iterations = 50;
  double tolerance = 1e-4;
  /// Replan every k steps; 0 means open loop (k = horizon).
  int replan_every = 0;

  IlqrOptions options(const EnvConfig& env) const;
  CostWeightsd weights(int latent_dim) const;
};

struct EvalConfig {
  int runs = 20;
  std::uint64_t seed = 1;
  double goal_radius = 2.0;
  /// Side of the square corner regions start and goal are drawn from.
  double corner_size = 6.0;
  int grid_n = 12;
  int workers = 1;
};

struct ExperimentConfig {
  EnvConfig env = EnvConfig::standard();
  HyperConfig model;
  TrainConfig train;
  PlanConfig plan;
  EvalConfig eval;
  DataConfig data;
  std::filesystem::path output_dir = "run";

  /// Throws ConfigError on inconsistent sections.
  void validate() const;

  std::filesystem::path dataset_path() const;
  std::filesystem::path eval_dataset_path() const;
  std::filesystem::path checkpoint_dir() const { return output_dir / "checkpoints"; }
};

/// Flat key-value text with env.*, model.*, train.*, plan.*, eval.*, data.*
/// and output.dir. Missing keys take defaults; unknown keys are an error.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string format_experiment_config(const ExperimentConfig& config);

/// Training set (n_x triples, n_y pairs) from data.seed.
Dataset generate_training_data(const ExperimentConfig& config);
/// Held-out set from data.eval_seed: X triples, action-labeled Y triples and Y pairs.
Dataset generate_eval_data(const ExperimentConfig& config);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  std::size_t count = 0;
};

MeanStd mean_std(const std::vector<double>& values);

/// Sum of squared pixel differences.
double image_sse(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Per-image SSE between each image and decode(dynamics mean, content mean).
std::vector<double> reconstruction_errors(const std::vector<const Image*>& images, const ModelParams& params,
                                          SetId set);
MeanStd eval_reconstruction(const std::vector<const Image*>& images, const ModelParams& params, SetId set);

/// Per-triple SSE between x_{t+1} and the decoded one-step prediction.
std::vector<double> prediction_errors(const std::vector<TripleRecord>& triples, const ModelParams& params, SetId set);
MeanStd eval_prediction(const std::vector<TripleRecord>& triples, const ModelParams& params, SetId set);

struct Episode {
  int index = 0;
  PlanarState start;
  PlanarState goal;
  std::vector<PlanarState> states;
  std::vector<Eigen::VectorXd> actions;
  double planning_loss = 0.0;
  bool success = false;
  /// Non-empty when the planner aborted; the agent then stands still.
  std::string error;
};

struct PlanningEval {
  MeanStd planning_loss;
  double success_rate = 0.0;
  std::vector<Episode> episodes;
};

/// Start in one corner region, goal in the opposite one, both collision free.
std::pair<PlanarState, PlanarState> corner_episode(const EnvConfig& env, double corner_size, Rng& rng);

/// Per-episode controller: returns the executed true trajectory and actions.
using EpisodeController = std::function<void(const PlanarState& start, const PlanarState& goal, Rng& rng,
                                             Episode& out)>;

PlanningEval run_episodes(const EnvConfig& env, const PlanConfig& plan, const EvalConfig& eval,
                          const EpisodeController& controller);

/// Plans on rendered observations only and executes in the true system.
PlanningEval eval_planning(const EnvConfig& env, const ModelParams& params, SetId set, const PlanConfig& plan,
                           const EvalConfig& eval);

/// Sanity path bypassing the model: each action is the clamped true
/// goal-direction step.
PlanningEval eval_planning_oracle(const EnvConfig& env, const PlanConfig& plan, const EvalConfig& eval);

struct LatentMap {
  SetId set = SetId::x;
  std::vector<PlanarState> states;
  Eigen::MatrixXd latents;  // one row per state
};

/// Encodes a grid_n x grid_n lattice over the margin box, skipping states
/// inside obstacles. The lattice only depends on the env, so X and Y maps
/// have matching rows.
LatentMap latent_map(const ModelParams& params, const EnvConfig& env, int grid_n, SetId set);

struct ProcrustesFit {
  /// RMS residual after the best similarity transform of `moving` onto `fixed`.
  double residual = 0.0;
  /// Largest pairwise distance within `fixed`.
  double diameter = 0.0;
  double relative = 0.0;  // residual / diameter
  /// Either point cloud collapses to a point; other fields are then NaN.
  bool degenerate = false;
};

ProcrustesFit procrustes(const Eigen::MatrixXd& fixed, const Eigen::MatrixXd& moving);

void write_latent_map_csv(const LatentMap& map, const std::filesystem::path& path);
/// Scatter of the latent means, each point colored by its true position.
void write_latent_map_ppm(const LatentMap& map, const std::filesystem::path& path, int size = 320);

struct Filmstrip {
  std::vector<Action> actions;
  std::vector<Image> truth;      // n_actions + 1 frames
  std::vector<Image> predicted;  // reconstruction, then open-loop predictions
  int side = 0;

  int rows() const { return 2; }
  int frames() const { return static_cast<int>(truth.size()); }
  /// Truth on top, predictions below, frames left to right.
  Eigen::MatrixXd sheet() const;
};

Filmstrip prediction_filmstrip(const ModelParams& params, const EnvConfig& env, SetId set, int n_actions, Rng& rng);

void write_pgm(const Eigen::MatrixXd& gray, const std::filesystem::path& path);

struct SetMetrics {
  MeanStd reconstruction;
  MeanStd prediction;
  MeanStd planning_loss;
  double success_rate = 0.0;
  int runs = 0;
  std::uint64_t eval_seed = 0;
};

struct MetricsReport {
  SetMetrics x;
  SetMetrics y;
  std::string checkpoint;

  const SetMetrics& operator[](SetId set) const { return set == SetId::x ? x : y; }
};

MetricsReport evaluate(const ExperimentConfig& config, const ModelParams& params, const Dataset& eval_data);

std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

/// Two rows (sets) by four columns (reconstruction, prediction, planning loss,
/// success rate).
std::string format_metrics_table(const MetricsReport& report);

}  // namespace ddc
