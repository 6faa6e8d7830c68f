#include "ddc/planar_env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <iomanip>
#include <stdexcept>

namespace ddc {

std::string to_string(AgentShape shape) {
  switch (shape) {
    case AgentShape::disc: return "disc";
    case AgentShape::square: return "square";
    case AgentShape::cross: return "cross";
    case AgentShape::triangle: return "triangle";
  }
  return "unknown";
}

AgentShape parse_agent_shape(const std::string& name) {
  if (name == "disc") return AgentShape::disc;
  if (name == "square") return AgentShape::square;
  if (name == "cross") return AgentShape::cross;
  if (name == "triangle") return AgentShape::triangle;
  throw std::invalid_argument("unknown agent shape '" + name + "'");
}

EnvConfig EnvConfig::standard() {
  EnvConfig c;
  for (double x : {13.3, 26.7})
    for (double y : {10.0, 20.0, 30.0}) c.obstacle_centers.emplace_back(x, y);
  return c;
}

void EnvConfig::validate() const {
  if (arena_size <= 0) throw std::invalid_argument("env: arena_size must be positive");
  if (agent_radius <= 0.0 || 2.0 * agent_radius >= arena_size)
    throw std::invalid_argument("env: agent_radius must be positive and fit the arena");
  if (obstacle_radius <= 0.0) throw std::invalid_argument("env: obstacle_radius must be positive");
  if (static_cast<int>(obstacle_centers.size()) != kObstacleCount)
    throw std::invalid_argument("env: exactly six obstacle centers required");
  for (std::size_t i = 0; i < obstacle_centers.size(); ++i) {
    const auto& o = obstacle_centers[i];
    if (o.x() - obstacle_radius < 0.0 || o.y() - obstacle_radius < 0.0 || o.x() + obstacle_radius > arena_size ||
        o.y() + obstacle_radius > arena_size)
      throw std::invalid_argument("env: obstacle " + std::to_string(i) + " is not inside the arena");
    for (std::size_t j = i + 1; j < obstacle_centers.size(); ++j)
      if ((o - obstacle_centers[j]).norm() <= 2.0 * obstacle_radius)
        throw std::invalid_argument("env: obstacles " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
  }
  if (shape_x == shape_y) throw std::invalid_argument("env: shape_x and shape_y must differ");
  if (!(u_max > 0.0)) throw std::invalid_argument("env: u_max must be positive");
  if (!(state_noise_std >= 0.0)) throw std::invalid_argument("env: state_noise_std must be non-negative");
}

bool is_valid(const PlanarState& state, const EnvConfig& config) {
  const auto& p = state.position;
  if (!p.allFinite()) return false;
  const double lo = config.margin_low(), hi = config.margin_high();
  if (p.x() < lo || p.x() > hi || p.y() < lo || p.y() > hi) return false;
  const double clearance = config.obstacle_radius + config.agent_radius;
  for (const auto& o : config.obstacle_centers)
    if ((p - o).norm() < clearance) return false;
  return true;
}

Action clamp_action(const Action& action, double u_max) { return action.cwiseMax(-u_max).cwiseMin(u_max); }

PlanarState step(const PlanarState& state, const Action& action, const EnvConfig& config, Rng& rng) {
  if (!is_valid(state, config)) throw std::invalid_argument("step: input state violates arena/obstacle invariants");
  if (!action.allFinite() || action.cwiseAbs().maxCoeff() > config.u_max)
    throw std::invalid_argument("step: action outside [-u_max, u_max]^2");
  Eigen::Vector2d candidate = state.position + action;
  if (config.state_noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, config.state_noise_std);
    candidate.x() += noise(rng);
    candidate.y() += noise(rng);
  }
  candidate = candidate.cwiseMax(config.margin_low()).cwiseMin(config.margin_high());
  PlanarState next{candidate};
  return is_valid(next, config) ? next : state;
}

namespace {

bool shape_covers(AgentShape shape, double dx, double dy, double r) {
  switch (shape) {
    case AgentShape::disc: return dx * dx + dy * dy <= r * r;
    case AgentShape::square: {
      const double half = 0.5 * r * std::sqrt(std::numbers::pi);  // equal area to the disc
      return std::abs(dx) <= half && std::abs(dy) <= half;
    }
    case AgentShape::cross: return (std::abs(dx) <= r && std::abs(dy) <= 0.5) || (std::abs(dy) <= r && std::abs(dx) <= 0.5);
    case AgentShape::triangle:
      // apex up, centroid on the agent position: height 2r, base half-width r
      return dy >= -4.0 * r / 3.0 && dy <= 2.0 * r / 3.0 && std::abs(dx) <= 0.5 * (dy + 4.0 * r / 3.0);
  }
  return false;
}

}  // namespace

Image render_agent_mask(const PlanarState& state, AgentShape shape, const EnvConfig& config) {
  const int side = config.arena_size;
  Image img = Image::Zero(static_cast<Eigen::Index>(side) * side);
  const int cx = std::clamp(static_cast<int>(std::floor(state.position.x())), 0, side - 1);
  const int cy = std::clamp(static_cast<int>(std::floor(state.position.y())), 0, side - 1);
  const int reach = static_cast<int>(std::ceil(config.agent_radius)) + 1;
  for (int dy = -reach; dy <= reach; ++dy)
    for (int dx = -reach; dx <= reach; ++dx) {
      const int row = cy + dy, col = cx + dx;
      if (row < 0 || row >= side || col < 0 || col >= side) continue;
      if (shape_covers(shape, dx, dy, config.agent_radius)) img(row * side + col) = 1.0;
    }
  return img;
}

Image render(const PlanarState& state, AgentShape shape, const EnvConfig& config) {
  const int side = config.arena_size;
  Image img = render_agent_mask(state, shape, config);
  const double r2 = config.obstacle_radius * config.obstacle_radius;
  for (const auto& o : config.obstacle_centers) {
    const int r0 = std::max(0, static_cast<int>(std::floor(o.y() - config.obstacle_radius)));
    const int r1 = std::min(side - 1, static_cast<int>(std::ceil(o.y() + config.obstacle_radius)));
    const int c0 = std::max(0, static_cast<int>(std::floor(o.x() - config.obstacle_radius)));
    const int c1 = std::min(side - 1, static_cast<int>(std::ceil(o.x() + config.obstacle_radius)));
    for (int row = r0; row <= r1; ++row)
      for (int col = c0; col <= c1; ++col) {
        const double dx = col + 0.5 - o.x(), dy = row + 0.5 - o.y();
        if (dx * dx + dy * dy <= r2) img(row * side + col) = 1.0;
      }
  }
  return img;
}

PlanarState sample_free_state_in_box(const EnvConfig& config, const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                                     Rng& rng, int max_attempts) {
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y());
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const double x = ux(rng);
    const double y = uy(rng);
    PlanarState s{Eigen::Vector2d(x, y)};
    if (is_valid(s, config)) return s;
  }
  throw std::runtime_error("sample_free_state: no collision-free state after " + std::to_string(max_attempts) +
                           " attempts (degenerate configuration?)");
}

PlanarState sample_free_state(const EnvConfig& config, Rng& rng, int max_attempts) {
  const Eigen::Vector2d lo = Eigen::Vector2d::Constant(config.margin_low());
  const Eigen::Vector2d hi = Eigen::Vector2d::Constant(config.margin_high());
  return sample_free_state_in_box(config, lo, hi, rng, max_attempts);
}

Eigen::Vector2d image_centroid(const Image& image, int side) {
  double total = 0.0, sx = 0.0, sy = 0.0;
  for (int row = 0; row < side; ++row)
    for (int col = 0; col < side; ++col) {
      const double v = image(row * side + col);
      total += v;
      sx += v * (col + 0.5);
      sy += v * (row + 0.5);
    }
  if (total <= 0.0) return Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());
  return {sx / total, sy / total};
}

std::string format_double(double value) {
  std::ostringstream out;
  out << std::setprecision(17) << value;
  return out.str();
}

void write_env_config(const EnvConfig& config, const std::string& prefix, KeyValues& out) {
  std::string centers;
  for (const auto& o : config.obstacle_centers)
    centers += (centers.empty() ? "" : ";") + format_double(o.x()) + "," + format_double(o.y());
  out[prefix + "arena_size"] = std::to_string(config.arena_size);
  out[prefix + "obstacle_centers"] = centers;
  out[prefix + "obstacle_radius"] = format_double(config.obstacle_radius);
  out[prefix + "agent_radius"] = format_double(config.agent_radius);
  out[prefix + "shape_x"] = to_string(config.shape_x);
  out[prefix + "shape_y"] = to_string(config.shape_y);
  out[prefix + "u_max"] = format_double(config.u_max);
  out[prefix + "state_noise_std"] = format_double(config.state_noise_std);
}

EnvConfig read_env_config(KeyReader& in, const std::string& prefix) {
  EnvConfig c = EnvConfig::standard();
  c.arena_size = in.get<int>(prefix + "arena_size", c.arena_size);
  if (in.has(prefix + "obstacle_centers")) {
    c.obstacle_centers.clear();
    std::istringstream list(in.get<std::string>(prefix + "obstacle_centers", ""));
    std::string item;
    while (std::getline(list, item, ';')) {
      double x = 0.0, y = 0.0;
      char comma = 0;
      std::istringstream pt(item);
      if (!(pt >> x >> comma >> y) || comma != ',')
        throw ConfigError("key '" + prefix + "obstacle_centers': malformed point '" + item + "'");
      c.obstacle_centers.emplace_back(x, y);
    }
  }
  c.obstacle_radius = in.get<double>(prefix + "obstacle_radius", c.obstacle_radius);
  c.agent_radius = in.get<double>(prefix + "agent_radius", c.agent_radius);
  try {
    c.shape_x = parse_agent_shape(in.get<std::string>(prefix + "shape_x", to_string(c.shape_x)));
    c.shape_y = parse_agent_shape(in.get<std::string>(prefix + "shape_y", to_string(c.shape_y)));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.u_max = in.get<double>(prefix + "u_max", c.u_max);
  c.state_noise_std = in.get<double>(prefix + "state_noise_std", c.state_noise_std);
  return c;
}

}  // namespace ddc
