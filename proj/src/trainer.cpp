#include "ddc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace ddc {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be positive");
  if (batch_size_x < 1 || batch_size_y < 1) throw std::invalid_argument("train: batch sizes must be positive");
  if (!(step_size > 0.0)) throw std::invalid_argument("train: step_size must be positive");
  if (!(step_size_decay > 0.0)) throw std::invalid_argument("train: step_size_decay must be positive");
  if (checkpoint_every < 1) throw std::invalid_argument("train: checkpoint_every must be positive");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("train: clip_norm must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw std::invalid_argument("train: Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw std::invalid_argument("train: adam_epsilon must be positive");
}

void write_train_config(const TrainConfig& c, const std::string& p, KeyValues& out) {
  out[p + "epochs"] = std::to_string(c.epochs);
  out[p + "batch_size_x"] = std::to_string(c.batch_size_x);
  out[p + "batch_size_y"] = std::to_string(c.batch_size_y);
  out[p + "step_size"] = format_double(c.step_size);
  out[p + "step_size_decay"] = format_double(c.step_size_decay);
  out[p + "seed"] = std::to_string(c.seed);
  out[p + "checkpoint_every"] = std::to_string(c.checkpoint_every);
  out[p + "clip_norm"] = format_double(c.clip_norm);
  out[p + "adam_beta1"] = format_double(c.adam_beta1);
  out[p + "adam_beta2"] = format_double(c.adam_beta2);
  out[p + "adam_epsilon"] = format_double(c.adam_epsilon);
}

TrainConfig read_train_config(KeyReader& in, const std::string& p) {
  TrainConfig c;
  c.epochs = in.get(p + "epochs", c.epochs);
  c.batch_size_x = in.get(p + "batch_size_x", c.batch_size_x);
  c.batch_size_y = in.get(p + "batch_size_y", c.batch_size_y);
  c.step_size = in.get(p + "step_size", c.step_size);
  c.step_size_decay = in.get(p + "step_size_decay", c.step_size_decay);
  c.seed = in.get(p + "seed", c.seed);
  c.checkpoint_every = in.get(p + "checkpoint_every", c.checkpoint_every);
  c.clip_norm = in.get(p + "clip_norm", c.clip_norm);
  c.adam_beta1 = in.get(p + "adam_beta1", c.adam_beta1);
  c.adam_beta2 = in.get(p + "adam_beta2", c.adam_beta2);
  c.adam_epsilon = in.get(p + "adam_epsilon", c.adam_epsilon);
  return c;
}

std::uint64_t steps_per_epoch(std::size_t n_x, const TrainConfig& config) {
  const auto b = static_cast<std::uint64_t>(config.batch_size_x);
  return (static_cast<std::uint64_t>(n_x) + b - 1) / b;
}

double clip_global_norm(ParamGrads& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads) g *= s;
  }
  return norm;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t step) {
  std::ostringstream name;
  name << "step_" << std::setw(8) << std::setfill('0') << step << ".ddck";
  return dir / "checkpoints" / name.str();
}

std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& output_dir) {
  const auto dir = output_dir / "checkpoints";
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return std::nullopt;
  std::optional<std::filesystem::path> best;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    // Zero-padded names sort by step.
    if (name.rfind("step_", 0) != 0 || entry.path().extension() != ".ddck") continue;
    if (!best || name > best->filename().string()) best = entry.path();
  }
  return best;
}

namespace {

// Every random draw is a function of (seed, purpose, index), so a run can be
// resumed from nothing more than the step counter.
Rng derived_rng(std::uint64_t seed, std::uint32_t purpose, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose,
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

constexpr std::uint32_t kShuffleX = 0x58u, kShuffleY = 0x59u, kNoise = 0x4eu;

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint32_t purpose, std::uint64_t index) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  Rng rng = derived_rng(seed, purpose, index);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

class Trainer {
 public:
  Trainer(const TrainConfig& config, const std::vector<TripleRecord>& x, const std::vector<PairedRecord>& y,
          const StepHook& hook)
      : cfg_(config), x_(x), y_(y), hook_(hook), spe_(steps_per_epoch(x.size(), config)) {}

  TrainResult run(ModelParams params, AdamState adam, std::uint64_t start_step) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t total = spe_ * static_cast<std::uint64_t>(cfg_.epochs);
    if (adam.m.empty())
      for (const auto& [name, b] : params.blocks) {
        adam.m[name] = Eigen::MatrixXd::Zero(b.rows(), b.cols());
        adam.v[name] = Eigen::MatrixXd::Zero(b.rows(), b.cols());
      }

    TrainResult result;
    std::string last_good;
    std::ofstream log;
    if (!cfg_.output_dir.empty()) {
      std::filesystem::create_directories(cfg_.output_dir / "checkpoints");
      last_good = save(params, adam, start_step);
      log.open(cfg_.output_dir / "train_log.jsonl", std::ios::app);
    }

    EpochSummary acc;
    double acc_x = 0.0, acc_y = 0.0, acc_loss = 0.0;
    int acc_steps = 0;
    for (std::uint64_t step = start_step; step < total; ++step) {
      const std::uint64_t epoch = step / spe_, within = step % spe_;
      const XBatch bx = make_x_batch(x_, x_indices(epoch, within));
      const YBatch by = make_y_batch(y_, y_indices(step));
      Rng noise_rng = derived_rng(cfg_.seed, kNoise, step);
      const NoiseX nx = draw_noise_x(bx.size(), params.hyper, noise_rng);
      const NoiseY ny = draw_noise_y(by.size(), params.hyper, noise_rng);

      if (hook_) hook_(step, params);
      LossResult r;
      try {
        r = total_loss(bx, by, params, params.hyper.beta_y, nx, ny, true);
      } catch (const NumericError& e) {
        throw TrainingAborted("training aborted at step " + std::to_string(step) + ": " + e.what() +
                                  (last_good.empty() ? "" : "; last good checkpoint " + last_good),
                              e.where(), step, last_good);
      }
      const double norm = clip_global_norm(r.grads, cfg_.clip_norm);
      if (!std::isfinite(norm))
        throw TrainingAborted("training aborted at step " + std::to_string(step) + ": non-finite gradient" +
                                  (last_good.empty() ? "" : "; last good checkpoint " + last_good),
                              "gradient", step, last_good);

      const double lr = cfg_.step_size * std::pow(cfg_.step_size_decay, static_cast<double>(epoch));
      adam_step(params, adam, r.grads, lr, step + 1);

      const double wx = static_cast<double>(bx.size()), wy = static_cast<double>(by.size());
      ElboBreakdown sx = r.mean_x, sy = r.mean_y;
      sx *= wx;
      sy *= wy;
      acc.mean_x += sx;
      acc.mean_y += sy;
      acc_x += wx;
      acc_y += wy;
      acc_loss += r.loss;
      ++acc_steps;
      if (log.is_open()) log << step_record(step, epoch, r, norm, lr) << '\n';

      if (within + 1 == spe_) {
        acc.epoch = static_cast<int>(epoch + 1);
        acc.mean_x *= 1.0 / acc_x;
        acc.mean_y *= 1.0 / acc_y;
        acc.mean_loss = acc_loss / acc_steps;
        result.report.epochs.push_back(acc);
        acc = EpochSummary{};
        acc_x = acc_y = acc_loss = 0.0;
        acc_steps = 0;
        if (!cfg_.output_dir.empty() &&
            ((epoch + 1) % static_cast<std::uint64_t>(cfg_.checkpoint_every) == 0 || step + 1 == total)) {
          log.flush();
          last_good = save(params, adam, step + 1);
        }
      }
    }

    result.report.final_step = std::max(total, start_step);
    result.report.final_checkpoint = last_good;
    result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.params = std::move(params);
    result.adam = std::move(adam);
    return result;
  }

 private:
  std::vector<std::size_t> x_indices(std::uint64_t epoch, std::uint64_t within) {
    if (epoch != x_perm_epoch_) {
      x_perm_ = permutation(x_.size(), cfg_.seed, kShuffleX, epoch);
      x_perm_epoch_ = epoch;
    }
    const std::size_t b = static_cast<std::size_t>(cfg_.batch_size_x);
    const std::size_t begin = static_cast<std::size_t>(within) * b;
    const std::size_t end = std::min(x_.size(), begin + b);
    return {x_perm_.begin() + static_cast<std::ptrdiff_t>(begin), x_perm_.begin() + static_cast<std::ptrdiff_t>(end)};
  }

  // Y is consumed as one endless stream of reshuffled passes, so every pair
  // is visited equally often regardless of the X epoch length.
  std::vector<std::size_t> y_indices(std::uint64_t step) {
    const std::uint64_t b = static_cast<std::uint64_t>(cfg_.batch_size_y), n = y_.size();
    std::vector<std::size_t> out;
    out.reserve(b);
    for (std::uint64_t k = 0; k < b; ++k) {
      const std::uint64_t g = step * b + k, pass = g / n;
      if (pass != y_perm_pass_) {
        y_perm_ = permutation(y_.size(), cfg_.seed, kShuffleY, pass);
        y_perm_pass_ = pass;
      }
      out.push_back(y_perm_[g % n]);
    }
    return out;
  }

  void adam_step(ModelParams& params, AdamState& adam, const ParamGrads& grads, double lr, std::uint64_t t) {
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (auto& [name, p] : params.blocks) {
      const Eigen::MatrixXd& g = grads.at(name);
      Eigen::MatrixXd& m = adam.m.at(name);
      Eigen::MatrixXd& v = adam.v.at(name);
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
      p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.adam_epsilon);
    }
  }

  std::string save(const ModelParams& params, const AdamState& adam, std::uint64_t step) {
    const std::filesystem::path path = checkpoint_path(cfg_.output_dir, step);
    save_checkpoint(Checkpoint{params, step, adam}, path);
    return path.string();
  }

  static std::string step_record(std::uint64_t step, std::uint64_t epoch, const LossResult& r, double norm, double lr) {
    nlohmann::json j;
    j["step"] = step;
    j["epoch"] = epoch + 1;
    j["loss"] = r.loss;
    j["recon_x"] = r.mean_x.recon_x;
    j["kl_zbar"] = r.mean_x.kl_zbar;
    j["entropy_zhat"] = r.mean_x.entropy_zhat;
    j["logp_zt"] = r.mean_x.logp_zt;
    j["kl_wx"] = r.mean_x.kl_wx;
    j["recon_y"] = r.mean_y.recon_y;
    j["kl_v"] = r.mean_y.kl_v;
    j["kl_wy"] = r.mean_y.kl_wy;
    j["total_x"] = r.mean_x.total;
    j["total_y"] = r.mean_y.total;
    j["grad_norm"] = norm;
    j["step_size"] = lr;
    return j.dump();
  }

  const TrainConfig& cfg_;
  const std::vector<TripleRecord>& x_;
  const std::vector<PairedRecord>& y_;
  const StepHook& hook_;
  std::uint64_t spe_;
  std::vector<std::size_t> x_perm_, y_perm_;
  std::uint64_t x_perm_epoch_ = ~std::uint64_t{0}, y_perm_pass_ = ~std::uint64_t{0};
};

void require_data(const std::vector<TripleRecord>& x, const std::vector<PairedRecord>& y) {
  if (x.empty() || y.empty()) throw std::invalid_argument("train: both datasets must be non-empty");
}

}  // namespace

TrainResult train(const TrainConfig& config, const HyperConfig& hyper, const std::vector<TripleRecord>& data_x,
                  const std::vector<PairedRecord>& data_y, const StepHook& hook) {
  config.validate();
  hyper.validate();
  require_data(data_x, data_y);
  Trainer t(config, data_x, data_y, hook);
  return t.run(init_params(hyper, config.seed), AdamState{}, 0);
}

TrainResult resume(const Checkpoint& checkpoint, const TrainConfig& config, const HyperConfig& hyper,
                   const std::vector<TripleRecord>& data_x, const std::vector<PairedRecord>& data_y,
                   const StepHook& hook) {
  config.validate();
  hyper.validate();
  require_data(data_x, data_y);
  ModelParams reference;
  reference.hyper = hyper;
  reference.blocks = init_params(hyper, 0).blocks;
  require_same_shapes(reference, checkpoint.params);
  ModelParams params = checkpoint.params;
  params.hyper = hyper;
  Trainer t(config, data_x, data_y, hook);
  return t.run(std::move(params), checkpoint.adam, checkpoint.step);
}

}  // namespace ddc
