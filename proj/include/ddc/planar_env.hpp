#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddc/key_values.hpp"

namespace ddc {

/// Grayscale frame flattened row-major (index = row * side + col), values in [0, 1].
using Image = Eigen::VectorXd;
using Rng = std::mt19937_64;
using Action = Eigen::Vector2d;

enum class AgentShape { disc, square, cross, triangle };

std::string to_string(AgentShape shape);
AgentShape parse_agent_shape(const std::string& name);

/// True agent position in pixels; (x, y) = (column, row) axes of the frame.
struct PlanarState {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();

  bool operator==(const PlanarState& other) const { return position == other.position; }
};

struct EnvConfig {
  int arena_size = 40;
  std::vector<Eigen::Vector2d> obstacle_centers;
  double obstacle_radius = 2.5;
  double agent_radius = 2.0;
  AgentShape shape_x = AgentShape::disc;
  AgentShape shape_y = AgentShape::square;
  double u_max = 3.0;
  double state_noise_std = 0.0;

  /// Two columns of three discs at x in {13.3, 26.7}, y in {10, 20, 30}.
  static EnvConfig standard();

  /// Throws std::invalid_argument naming the violated constraint.
  void validate() const;

  double margin_low() const { return agent_radius; }
  double margin_high() const { return arena_size - agent_radius; }
};

inline constexpr int kObstacleCount = 6;

bool is_valid(const PlanarState& state, const EnvConfig& config);

/// Single-integrator move with additive Gaussian noise, clipped to the margin
/// box. A candidate that lands inside an obstacle is rejected and the input
/// state returned unchanged. Throws std::invalid_argument on an invalid state
/// or an action outside [-u_max, u_max]^2.
PlanarState step(const PlanarState& state, const Action& action, const EnvConfig& config, Rng& rng);

/// Clamps each action component into [-u_max, u_max].
Action clamp_action(const Action& action, double u_max);

/// Binary raster of the agent alone. The shape is centered on the pixel that
/// contains the position, so the lit-pixel count is position independent.
Image render_agent_mask(const PlanarState& state, AgentShape shape, const EnvConfig& config);

/// Obstacles (filled discs) plus the agent, intensity 1 on background 0.
Image render(const PlanarState& state, AgentShape shape, const EnvConfig& config);

/// Uniform over the collision-free region by rejection; throws
/// std::runtime_error after `max_attempts` rejections.
PlanarState sample_free_state(const EnvConfig& config, Rng& rng, int max_attempts = 100000);

/// Uniform over the axis-aligned box [lo, hi]^2 intersected with the free region.
PlanarState sample_free_state_in_box(const EnvConfig& config, const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                                     Rng& rng, int max_attempts = 100000);

/// Serializes under `prefix` (e.g. "env."): arena_size, obstacle_centers
/// ("x,y;x,y;..."), obstacle_radius, agent_radius, shape_x, shape_y, u_max,
/// state_noise_std. Reads fall back to EnvConfig::standard() per key.
void write_env_config(const EnvConfig& config, const std::string& prefix, KeyValues& out);
EnvConfig read_env_config(KeyReader& in, const std::string& prefix);

/// Round-trippable decimal text for a double.
std::string format_double(double value);

/// Intensity-weighted centroid (x, y) of an image; zero image yields NaN.
Eigen::Vector2d image_centroid(const Image& image, int side);

}  // namespace ddc
