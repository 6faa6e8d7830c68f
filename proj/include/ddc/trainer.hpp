#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddc/checkpoint.hpp"
#include "ddc/dataset.hpp"
#include "ddc/objective.hpp"

namespace ddc {

struct TrainConfig {
  int epochs = 50;
  int batch_size_x = 128;
  int batch_size_y = 32;
  double step_size = 1e-4;
  /// Multiplicative per-epoch step-size factor; 1 disables decay.
  double step_size_decay = 1.0;
  std::uint64_t seed = 0;
  /// Write a checkpoint every this many epochs (and always after the last).
  int checkpoint_every = 10;
  double clip_norm = 10.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Checkpoints and the step log go here; empty disables all file output.
  std::filesystem::path output_dir;

  void validate() const;
};

void write_train_config(const TrainConfig& config, const std::string& prefix, KeyValues& out);
TrainConfig read_train_config(KeyReader& in, const std::string& prefix);

struct EpochSummary {
  int epoch = 0;         // 1-based
  ElboBreakdown mean_x;  // mean over the epoch's X batches
  ElboBreakdown mean_y;
  double mean_loss = 0.0;
};

struct TrainReport {
  std::vector<EpochSummary> epochs;  // epochs run by this call
  double wall_seconds = 0.0;
  std::uint64_t final_step = 0;
  std::string final_checkpoint;  // path, empty when output_dir is empty
};

struct TrainResult {
  ModelParams params;
  AdamState adam;
  TrainReport report;
};

/// Thrown on a non-finite loss, term, or gradient. Names the offending term
/// and the most recent checkpoint written before the failure.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::string term, std::uint64_t step, std::string last_good)
      : std::runtime_error(what), term_(std::move(term)), step_(step), last_good_(std::move(last_good)) {}
  const std::string& term() const { return term_; }
  std::uint64_t step() const { return step_; }
  const std::string& last_good_checkpoint() const { return last_good_; }

 private:
  std::string term_;
  std::uint64_t step_;
  std::string last_good_;
};

/// Test hook run on the parameters before every optimizer step.
using StepHook = std::function<void(std::uint64_t step, ModelParams& params)>;

/// Number of optimizer steps in one epoch over `n_x` triples.
std::uint64_t steps_per_epoch(std::size_t n_x, const TrainConfig& config);

TrainResult train(const TrainConfig& config, const HyperConfig& hyper, const std::vector<TripleRecord>& data_x,
                  const std::vector<PairedRecord>& data_y, const StepHook& hook = {});

/// Continues from `checkpoint` until `config.epochs` total epochs are done.
/// Throws CheckpointError(shape_mismatch) when the checkpoint does not fit
/// `hyper`.
TrainResult resume(const Checkpoint& checkpoint, const TrainConfig& config, const HyperConfig& hyper,
                   const std::vector<TripleRecord>& data_x, const std::vector<PairedRecord>& data_y,
                   const StepHook& hook = {});

/// Scales every block by min(1, max_norm / global_norm); returns the norm
/// before clipping.
double clip_global_norm(ParamGrads& grads, double max_norm);

/// Path of the checkpoint written after `step` steps.
std::filesystem::path checkpoint_path(const std::filesystem::path& output_dir, std::uint64_t step);

/// Highest-step checkpoint under output_dir/checkpoints, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& output_dir);

}  // namespace ddc
