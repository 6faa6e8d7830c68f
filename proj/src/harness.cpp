#include "ddc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace ddc {

namespace {

// Independent 64-bit seeds for the different generated sets, so that no two
// sets ever share a random stream even when user seeds are adjacent.
std::uint64_t sub_seed(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

constexpr std::uint32_t kSetX = 1, kSetY = 2, kSetYTriples = 3, kEpisode = 4;

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::string to_string(SetId set) { return set == SetId::x ? "x" : "y"; }

SetId parse_set_id(const std::string& name) {
  if (name == "x" || name == "X") return SetId::x;
  if (name == "y" || name == "Y") return SetId::y;
  throw std::invalid_argument("unknown set '" + name + "' (expected x or y)");
}

AgentShape shape_of(SetId set, const EnvConfig& env) { return set == SetId::x ? env.shape_x : env.shape_y; }

DynamicsRole encoder_role(SetId set) {
  return set == SetId::x ? DynamicsRole::next_posterior : DynamicsRole::y_posterior;
}

// --- configuration ----------------------------------------------------------

IlqrOptions PlanConfig::options(const EnvConfig& env) const {
  IlqrOptions o;
  o.max_iterations = max_iterations;
  o.tolerance = tolerance;
  o.u_max = env.u_max;
  return o;
}

CostWeightsd PlanConfig::weights(int latent_dim) const {
  return CostWeightsd::scaled_identity(latent_dim, 2, q, r);
}

void ExperimentConfig::validate() const {
  try {
    env.validate();
    model.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (env.shape_x == env.shape_y) throw ConfigError("env.shape_x and env.shape_y must differ");
  if (model.image_side != env.arena_size) throw ConfigError("model.image_side must equal env.arena_size");
  if (model.action_dim != 2) throw ConfigError("model.action_dim must be 2 for the planar task");
  if (plan.horizon < 1) throw ConfigError("plan.horizon must be at least 1");
  if (!(plan.q >= 0.0) || !(plan.r > 0.0)) throw ConfigError("plan.q must be >= 0 and plan.r > 0");
  if (plan.max_iterations < 1) throw ConfigError("plan.max_iterations must be at least 1");
  if (plan.replan_every < 0 || plan.replan_every > plan.horizon)
    throw ConfigError("plan.replan_every must be in [0, plan.horizon]");
  if (eval.runs < 1) throw ConfigError("eval.runs must be at least 1");
  if (!(eval.goal_radius > 0.0)) throw ConfigError("eval.goal_radius must be positive");
  if (!(eval.corner_size > 0.0) || eval.corner_size > env.margin_high() - env.margin_low())
    throw ConfigError("eval.corner_size must be positive and fit the arena");
  if (eval.grid_n < 1) throw ConfigError("eval.grid_n must be at least 1");
  if (data.n_x < 1 || data.n_y < 1 || data.n_eval < 1) throw ConfigError("data sizes must be at least 1");
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
}

std::filesystem::path ExperimentConfig::dataset_path() const {
  return data.path.empty() ? output_dir / "dataset.ddc" : data.path;
}

std::filesystem::path ExperimentConfig::eval_dataset_path() const { return output_dir / "eval_dataset.ddc"; }

ExperimentConfig parse_experiment_config(const std::string& text) {
  const KeyValues kv = parse_key_values(text);
  KeyReader in(kv);
  ExperimentConfig c;
  try {
    c.env = read_env_config(in, "env.");
    c.model = read_hyper_config(in, "model.");
    c.train = read_train_config(in, "train.");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.plan.horizon = in.get("plan.horizon", c.plan.horizon);
  c.plan.q = in.get("plan.q", c.plan.q);
  c.plan.r = in.get("plan.r", c.plan.r);
  c.plan.max_iterations = in.get("plan.max_iterations", c.plan.max_iterations);
  c.plan.tolerance = in.get("plan.tolerance", c.plan.tolerance);
  c.plan.replan_every = in.get("plan.replan_every", c.plan.replan_every);
  c.eval.runs = in.get("eval.runs", c.eval.runs);
  c.eval.seed = in.get("eval.seed", c.eval.seed);
  c.eval.goal_radius = in.get("eval.goal_radius", c.eval.goal_radius);
  c.eval.corner_size = in.get("eval.corner_size", c.eval.corner_size);
  c.eval.grid_n = in.get("eval.grid_n", c.eval.grid_n);
  c.eval.workers = in.get("eval.workers", c.eval.workers);
  c.data.n_x = in.get("data.n_x", c.data.n_x);
  c.data.n_y = in.get("data.n_y", c.data.n_y);
  c.data.seed = in.get("data.seed", c.data.seed);
  c.data.n_eval = in.get("data.n_eval", c.data.n_eval);
  c.data.eval_seed = in.get("data.eval_seed", c.data.eval_seed);
  c.data.workers = in.get("data.workers", c.data.workers);
  c.data.path = in.get<std::string>("data.path", "");
  c.output_dir = in.get<std::string>("output.dir", c.output_dir.string());
  in.reject_unknown();
  c.train.output_dir = c.output_dir;
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_experiment_config(text.str());
}

std::string format_experiment_config(const ExperimentConfig& c) {
  KeyValues kv;
  write_env_config(c.env, "env.", kv);
  write_hyper_config(c.model, "model.", kv);
  write_train_config(c.train, "train.", kv);
  kv["plan.horizon"] = std::to_string(c.plan.horizon);
  kv["plan.q"] = format_double(c.plan.q);
  kv["plan.r"] = format_double(c.plan.r);
  kv["plan.max_iterations"] = std::to_string(c.plan.max_iterations);
  kv["plan.tolerance"] = format_double(c.plan.tolerance);
  kv["plan.replan_every"] = std::to_string(c.plan.replan_every);
  kv["eval.runs"] = std::to_string(c.eval.runs);
  kv["eval.seed"] = std::to_string(c.eval.seed);
  kv["eval.goal_radius"] = format_double(c.eval.goal_radius);
  kv["eval.corner_size"] = format_double(c.eval.corner_size);
  kv["eval.grid_n"] = std::to_string(c.eval.grid_n);
  kv["eval.workers"] = std::to_string(c.eval.workers);
  kv["data.n_x"] = std::to_string(c.data.n_x);
  kv["data.n_y"] = std::to_string(c.data.n_y);
  kv["data.seed"] = std::to_string(c.data.seed);
  kv["data.n_eval"] = std::to_string(c.data.n_eval);
  kv["data.eval_seed"] = std::to_string(c.data.eval_seed);
  kv["data.workers"] = std::to_string(c.data.workers);
  if (!c.data.path.empty()) kv["data.path"] = c.data.path.string();
  kv["output.dir"] = c.output_dir.string();
  return format_key_values(kv);
}

Dataset generate_training_data(const ExperimentConfig& c) {
  Dataset d;
  d.env = c.env;
  d.seed = c.data.seed;
  d.triples_x = generate_x(c.env, c.data.n_x, sub_seed(c.data.seed, kSetX), c.data.workers);
  d.pairs_y = generate_y(c.env, c.data.n_y, sub_seed(c.data.seed, kSetY), c.data.workers);
  return d;
}

Dataset generate_eval_data(const ExperimentConfig& c) {
  Dataset d;
  d.env = c.env;
  d.seed = c.data.eval_seed;
  d.triples_x = generate_x(c.env, c.data.n_eval, sub_seed(c.data.eval_seed, kSetX), c.data.workers);
  d.triples_y =
      generate_triples(c.env, c.data.n_eval, c.env.shape_y, sub_seed(c.data.eval_seed, kSetYTriples), c.data.workers);
  d.pairs_y = generate_y(c.env, c.data.n_eval, sub_seed(c.data.eval_seed, kSetY), c.data.workers);
  return d;
}

// --- reconstruction and prediction -----------------------------------------

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd m;
  m.count = values.size();
  if (values.empty()) return m;
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return m;
}

double image_sse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).squaredNorm(); }

namespace {

constexpr std::size_t kEvalChunk = 128;

}  // namespace

std::vector<double> reconstruction_errors(const std::vector<const Image*>& images, const ModelParams& params,
                                          SetId set) {
  if (images.empty()) throw std::invalid_argument("eval_reconstruction: empty split");
  std::vector<double> out;
  out.reserve(images.size());
  for (std::size_t begin = 0; begin < images.size(); begin += kEvalChunk) {
    const std::vector<const Image*> chunk(images.begin() + begin,
                                          images.begin() + std::min(images.size(), begin + kEvalChunk));
    const Eigen::MatrixXd x = stack_images(chunk);
    const Eigen::MatrixXd recon = decode_batch(encode_dynamics_batch(x, params, encoder_role(set)).mean,
                                               encode_content_batch(x, params).mean, params);
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back((recon.row(i) - x.row(i)).squaredNorm());
  }
  return out;
}

MeanStd eval_reconstruction(const std::vector<const Image*>& images, const ModelParams& params, SetId set) {
  return mean_std(reconstruction_errors(images, params, set));
}

std::vector<double> prediction_errors(const std::vector<TripleRecord>& triples, const ModelParams& params, SetId set) {
  if (triples.empty()) throw std::invalid_argument("eval_prediction: empty split");
  std::vector<double> out;
  out.reserve(triples.size());
  for (std::size_t begin = 0; begin < triples.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(triples.size(), begin + kEvalChunk);
    std::vector<const Image*> now, next;
    for (std::size_t i = begin; i < end; ++i) {
      now.push_back(&triples[i].x_t());
      next.push_back(&triples[i].x_next());
    }
    const Eigen::MatrixXd x = stack_images(now);
    const Eigen::MatrixXd z = encode_dynamics_batch(x, params, encoder_role(set)).mean;
    const Eigen::MatrixXd w = encode_content_batch(x, params).mean;
    Eigen::MatrixXd z_next(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const Eigen::VectorXd zi = z.row(i).transpose();
      const Eigen::VectorXd u = triples[begin + static_cast<std::size_t>(i)].u_t();
      z_next.row(i) = forward_transition(zi, u, transition_params(zi, params)).transpose();
    }
    const Eigen::MatrixXd pred = decode_batch(z_next, w, params);
    const Eigen::MatrixXd target = stack_images(next);
    for (Eigen::Index i = 0; i < pred.rows(); ++i) out.push_back((pred.row(i) - target.row(i)).squaredNorm());
  }
  return out;
}

MeanStd eval_prediction(const std::vector<TripleRecord>& triples, const ModelParams& params, SetId set) {
  return mean_std(prediction_errors(triples, params, set));
}

// --- planning ----------------------------------------------------------------

std::pair<PlanarState, PlanarState> corner_episode(const EnvConfig& env, double corner_size, Rng& rng) {
  const Eigen::Vector2d lo = Eigen::Vector2d::Constant(env.margin_low());
  const Eigen::Vector2d hi = Eigen::Vector2d::Constant(env.margin_high());
  const Eigen::Vector2d span = Eigen::Vector2d::Constant(corner_size);
  const PlanarState start = sample_free_state_in_box(env, lo, lo + span, rng);
  const PlanarState goal = sample_free_state_in_box(env, hi - span, hi, rng);
  return {start, goal};
}

PlanningEval run_episodes(const EnvConfig& env, const PlanConfig& plan, const EvalConfig& eval,
                          const EpisodeController& controller) {
  const CostWeightsd truth_weights = CostWeightsd::scaled_identity(2, 2, plan.q, plan.r);
  std::vector<Episode> episodes(static_cast<std::size_t>(eval.runs));
  auto run = [&](int first, int stride) {
    for (int i = first; i < eval.runs; i += stride) {
      std::seed_seq seq{static_cast<std::uint32_t>(eval.seed), static_cast<std::uint32_t>(eval.seed >> 32), kEpisode,
                        static_cast<std::uint32_t>(i)};
      Rng rng(seq);
      Episode& ep = episodes[static_cast<std::size_t>(i)];
      ep.index = i;
      std::tie(ep.start, ep.goal) = corner_episode(env, eval.corner_size, rng);
      try {
        controller(ep.start, ep.goal, rng, ep);
      } catch (const std::exception& e) {
        // A planner failure counts against the run: the agent stays put.
        ep.error = e.what();
        ep.actions.assign(static_cast<std::size_t>(plan.horizon), Eigen::VectorXd::Zero(2));
        ep.states.assign(static_cast<std::size_t>(plan.horizon) + 1, ep.start);
      }
      ep.planning_loss = planning_loss(ep.states, ep.actions, ep.goal, truth_weights);
      ep.success = ep.error.empty() && reached_and_stayed(ep.states, ep.goal, eval.goal_radius);
    }
  };
  const int workers = std::clamp(eval.workers, 1, eval.runs);
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(run, t, workers);
    for (auto& th : pool) th.join();
  }

  PlanningEval out;
  std::vector<double> losses;
  int successes = 0;
  for (const auto& ep : episodes) {
    losses.push_back(ep.planning_loss);
    successes += ep.success ? 1 : 0;
  }
  out.planning_loss = mean_std(losses);
  out.success_rate = static_cast<double>(successes) / static_cast<double>(eval.runs);
  out.episodes = std::move(episodes);
  return out;
}

PlanningEval eval_planning(const EnvConfig& env, const ModelParams& params, SetId set, const PlanConfig& plan,
                           const EvalConfig& eval) {
  const AgentShape shape = shape_of(set, env);
  const CostWeightsd latent_weights = plan.weights(params.hyper.latent_dim);
  const IlqrOptions opts = plan.options(env);
  const int k = plan.replan_every == 0 ? plan.horizon : plan.replan_every;
  // The model only ever sees rendered frames of the episode's states.
  const ObservationProvider observe = [&](const PlanarState& s) { return render(s, shape, env); };
  return run_episodes(env, plan, eval, [&](const PlanarState& start, const PlanarState& goal, Rng& rng, Episode& ep) {
    const MpcResult r = mpc_execute(env, observe, start, goal, observe(goal), plan.horizon, k, params, latent_weights,
                                    opts, rng);
    ep.states = r.states;
    ep.actions = r.actions;
  });
}

PlanningEval eval_planning_oracle(const EnvConfig& env, const PlanConfig& plan, const EvalConfig& eval) {
  return run_episodes(env, plan, eval, [&](const PlanarState& start, const PlanarState& goal, Rng& rng, Episode& ep) {
    ep.states = {start};
    for (int t = 0; t < plan.horizon; ++t) {
      const Action a = clamp_action(goal.position - ep.states.back().position, env.u_max);
      ep.actions.push_back(a);
      ep.states.push_back(step(ep.states.back(), a, env, rng));
    }
  });
}

// --- latent maps -------------------------------------------------------------

LatentMap latent_map(const ModelParams& params, const EnvConfig& env, int grid_n, SetId set) {
  if (grid_n < 1) throw std::invalid_argument("latent_map: grid_n must be at least 1");
  LatentMap map;
  map.set = set;
  const double lo = env.margin_low(), hi = env.margin_high();
  std::vector<Image> frames;
  for (int r = 0; r < grid_n; ++r)
    for (int c = 0; c < grid_n; ++c) {
      const double fy = grid_n == 1 ? 0.5 : static_cast<double>(r) / (grid_n - 1);
      const double fx = grid_n == 1 ? 0.5 : static_cast<double>(c) / (grid_n - 1);
      const PlanarState s{Eigen::Vector2d(lo + fx * (hi - lo), lo + fy * (hi - lo))};
      if (!is_valid(s, env)) continue;
      map.states.push_back(s);
      frames.push_back(render(s, shape_of(set, env), env));
    }
  std::vector<const Image*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  map.latents = ptrs.empty() ? Eigen::MatrixXd(0, params.hyper.latent_dim)
                             : encode_dynamics_batch(stack_images(ptrs), params, encoder_role(set)).mean;
  return map;
}

ProcrustesFit procrustes(const Eigen::MatrixXd& fixed, const Eigen::MatrixXd& moving) {
  if (fixed.rows() != moving.rows() || fixed.cols() != moving.cols())
    throw std::invalid_argument("procrustes: point sets must have the same shape");
  ProcrustesFit fit;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const Eigen::MatrixXd a = fixed.rowwise() - fixed.colwise().mean();
  const Eigen::MatrixXd b = moving.rowwise() - moving.colwise().mean();
  for (Eigen::Index i = 0; i < fixed.rows(); ++i)
    for (Eigen::Index j = i + 1; j < fixed.rows(); ++j)
      fit.diameter = std::max(fit.diameter, (fixed.row(i) - fixed.row(j)).norm());
  const double scale_ref = std::max({1.0, fixed.cwiseAbs().maxCoeff(), moving.cwiseAbs().maxCoeff()});
  if (fixed.rows() < 2 || a.norm() <= 1e-12 * scale_ref || b.norm() <= 1e-12 * scale_ref) {
    fit.degenerate = true;
    fit.residual = fit.relative = nan;
    return fit;
  }
  // Orthogonal Procrustes with isotropic scale: min ||a - s b R||.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b.transpose() * a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::MatrixXd R = svd.matrixU() * svd.matrixV().transpose();
  const double s = svd.singularValues().sum() / b.squaredNorm();
  const Eigen::MatrixXd aligned = s * b * R;
  fit.residual = std::sqrt((a - aligned).squaredNorm() / static_cast<double>(a.rows()));
  fit.relative = fit.residual / fit.diameter;
  return fit;
}

void write_latent_map_csv(const LatentMap& map, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "set,true_x,true_y";
  for (Eigen::Index j = 0; j < map.latents.cols(); ++j) out << ",z" << j;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < map.states.size(); ++i) {
    out << to_string(map.set) << ',' << map.states[i].position.x() << ',' << map.states[i].position.y();
    for (Eigen::Index j = 0; j < map.latents.cols(); ++j) out << ',' << map.latents(static_cast<Eigen::Index>(i), j);
    out << '\n';
  }
}

void write_latent_map_ppm(const LatentMap& map, const std::filesystem::path& path, int size) {
  std::vector<unsigned char> rgb(static_cast<std::size_t>(size) * size * 3, 255);
  if (map.latents.rows() > 0 && map.latents.cols() >= 2) {
    const Eigen::Vector2d lo = map.latents.leftCols(2).colwise().minCoeff().transpose();
    const Eigen::Vector2d hi = map.latents.leftCols(2).colwise().maxCoeff().transpose();
    const Eigen::Vector2d span = (hi - lo).cwiseMax(1e-12);
    double arena = 1.0;
    for (const auto& s : map.states) arena = std::max(arena, s.position.maxCoeff());
    const int pad = 6;
    for (Eigen::Index i = 0; i < map.latents.rows(); ++i) {
      const Eigen::Vector2d f = (map.latents.row(i).head<2>().transpose() - lo).cwiseQuotient(span);
      const int px = pad + static_cast<int>(std::lround(f.x() * (size - 1 - 2 * pad)));
      const int py = pad + static_cast<int>(std::lround((1.0 - f.y()) * (size - 1 - 2 * pad)));
      const auto& p = map.states[static_cast<std::size_t>(i)].position;
      const unsigned char r = static_cast<unsigned char>(255.0 * p.x() / arena);
      const unsigned char g = static_cast<unsigned char>(255.0 * p.y() / arena);
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int x = px + dx, y = py + dy;
          if (x < 0 || y < 0 || x >= size || y >= size) continue;
          unsigned char* c = &rgb[(static_cast<std::size_t>(y) * size + x) * 3];
          c[0] = r;
          c[1] = g;
          c[2] = 128;
        }
    }
  }
  std::ofstream out = open_out(path, true);
  out << "P6\n" << size << ' ' << size << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

// --- filmstrips ----------------------------------------------------------------

Eigen::MatrixXd Filmstrip::sheet() const {
  Eigen::MatrixXd out(rows() * side, frames() * side);
  for (int f = 0; f < frames(); ++f) {
    const auto tile = [&](const Image& img) {
      return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(img.data(), side,
                                                                                                    side);
    };
    out.block(0, f * side, side, side) = tile(truth[static_cast<std::size_t>(f)]);
    out.block(side, f * side, side, side) = tile(predicted[static_cast<std::size_t>(f)]);
  }
  return out;
}

Filmstrip prediction_filmstrip(const ModelParams& params, const EnvConfig& env, SetId set, int n_actions, Rng& rng) {
  if (n_actions < 0) throw std::invalid_argument("prediction_filmstrip: n_actions must be non-negative");
  Filmstrip strip;
  strip.side = env.arena_size;
  const AgentShape shape = shape_of(set, env);
  PlanarState s = sample_free_state(env, rng);
  std::uniform_real_distribution<double> ud(-env.u_max, env.u_max);
  strip.truth.push_back(render(s, shape, env));
  for (int i = 0; i < n_actions; ++i) {
    const double ux = ud(rng);
    const double uy = ud(rng);
    strip.actions.emplace_back(ux, uy);
    s = step(s, strip.actions.back(), env, rng);
    strip.truth.push_back(render(s, shape, env));
  }
  Eigen::VectorXd z = encode_dynamics(strip.truth.front(), params, encoder_role(set)).mean;
  const Eigen::VectorXd w = encode_content(strip.truth.front(), params).mean;
  strip.predicted.push_back(decode(z, w, params));
  for (const Action& a : strip.actions) {
    z = forward_transition(z, Eigen::VectorXd(a), transition_params(z, params));
    strip.predicted.push_back(decode(z, w, params));
  }
  return strip;
}

void write_pgm(const Eigen::MatrixXd& gray, const std::filesystem::path& path) {
  std::ofstream out = open_out(path, true);
  out << "P5\n" << gray.cols() << ' ' << gray.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < gray.rows(); ++r)
    for (Eigen::Index c = 0; c < gray.cols(); ++c)
      out.put(static_cast<char>(std::lround(255.0 * std::clamp(gray(r, c), 0.0, 1.0))));
}

// --- metrics -------------------------------------------------------------------

MetricsReport evaluate(const ExperimentConfig& config, const ModelParams& params, const Dataset& eval_data) {
  MetricsReport report;
  std::vector<const Image*> x_frames, y_frames;
  for (const auto& t : eval_data.triples_x) x_frames.push_back(&t.x_t());
  for (const auto& p : eval_data.pairs_y) y_frames.push_back(&p.y_t());

  auto fill = [&](SetId set, const std::vector<const Image*>& frames, const std::vector<TripleRecord>& triples) {
    SetMetrics m;
    m.reconstruction = eval_reconstruction(frames, params, set);
    m.prediction = eval_prediction(triples, params, set);
    const PlanningEval p = eval_planning(config.env, params, set, config.plan, config.eval);
    m.planning_loss = p.planning_loss;
    m.success_rate = p.success_rate;
    m.runs = config.eval.runs;
    m.eval_seed = config.eval.seed;
    return m;
  };
  report.x = fill(SetId::x, x_frames, eval_data.triples_x);
  report.y = fill(SetId::y, y_frames, eval_data.triples_y);
  return report;
}

namespace {

using nlohmann::json;

json to_json(const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}, {"count", m.count}}; }

MeanStd mean_std_from(const json& j) {
  MeanStd m;
  m.mean = j.at("mean").get<double>();
  m.std = j.at("std").get<double>();
  m.count = j.at("count").get<std::size_t>();
  return m;
}

json to_json(const SetMetrics& m) {
  return json{{"reconstruction_loss", to_json(m.reconstruction)},
              {"prediction_loss", to_json(m.prediction)},
              {"planning_loss", to_json(m.planning_loss)},
              {"success_rate", m.success_rate},
              {"runs", m.runs},
              {"eval_seed", m.eval_seed}};
}

SetMetrics set_metrics_from(const json& j) {
  SetMetrics m;
  m.reconstruction = mean_std_from(j.at("reconstruction_loss"));
  m.prediction = mean_std_from(j.at("prediction_loss"));
  m.planning_loss = mean_std_from(j.at("planning_loss"));
  m.success_rate = j.at("success_rate").get<double>();
  m.runs = j.at("runs").get<int>();
  m.eval_seed = j.at("eval_seed").get<std::uint64_t>();
  return m;
}

}  // namespace

std::string metrics_to_json(const MetricsReport& report) {
  const json j{{"x", to_json(report.x)}, {"y", to_json(report.y)}, {"checkpoint", report.checkpoint}};
  return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricsReport r;
    r.x = set_metrics_from(j.at("x"));
    r.y = set_metrics_from(j.at("y"));
    r.checkpoint = j.value("checkpoint", "");
    return r;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed metrics report: ") + e.what());
  }
}

std::string format_metrics_table(const MetricsReport& report) {
  auto pm = [](const MeanStd& m) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << m.mean << " ± " << m.std;
    return s.str();
  };
  std::ostringstream out;
  out << "| set | reconstruction loss | prediction loss | planning loss | planning success |\n"
      << "|---|---|---|---|---|\n";
  for (SetId set : {SetId::x, SetId::y}) {
    const SetMetrics& m = report[set];
    out << (set == SetId::x ? "| with action (X) | " : "| without action (Y) | ") << pm(m.reconstruction) << " | "
        << pm(m.prediction) << " | " << pm(m.planning_loss) << " | " << std::fixed << std::setprecision(0)
        << 100.0 * m.success_rate << " % |\n";
  }
  return out.str();
}

}  // namespace ddc
