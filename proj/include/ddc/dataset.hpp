#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "ddc/planar_env.hpp"

namespace ddc {

/// Number of reads through the evaluation-only ground-truth accessors since
/// process start (or the last reset). Lets tests confirm that model-facing
/// code paths never touch true states.
std::uint64_t ground_truth_reads();
void reset_ground_truth_reads();

/// One action-labeled transition (x_t, u_t, x_{t+1}).
class TripleRecord {
 public:
  TripleRecord(Image x_t, Action u_t, Image x_next, PlanarState state_t, PlanarState state_next)
      : x_t_(std::move(x_t)), u_t_(u_t), x_next_(std::move(x_next)), state_t_(state_t), state_next_(state_next) {}

  const Image& x_t() const { return x_t_; }
  const Action& u_t() const { return u_t_; }
  const Image& x_next() const { return x_next_; }

  // Evaluation-only.
  const PlanarState& eval_true_state_t() const;
  const PlanarState& eval_true_state_next() const;

  bool operator==(const TripleRecord& o) const {
    return x_t_ == o.x_t_ && u_t_ == o.u_t_ && x_next_ == o.x_next_ && state_t_ == o.state_t_ &&
           state_next_ == o.state_next_;
  }

 private:
  Image x_t_;
  Action u_t_;
  Image x_next_;
  PlanarState state_t_;
  PlanarState state_next_;
};

/// One action-free observation y_t with its state-aligned x_t.
class PairedRecord {
 public:
  PairedRecord(Image y_t, Image x_t, PlanarState state_t) : y_t_(std::move(y_t)), x_t_(std::move(x_t)), state_t_(state_t) {}

  const Image& y_t() const { return y_t_; }
  const Image& x_t() const { return x_t_; }

  // Evaluation-only.
  const PlanarState& eval_true_state_t() const;

  bool operator==(const PairedRecord& o) const {
    return y_t_ == o.y_t_ && x_t_ == o.x_t_ && state_t_ == o.state_t_;
  }

 private:
  Image y_t_;
  Image x_t_;
  PlanarState state_t_;
};

struct Dataset {
  EnvConfig env = EnvConfig::standard();
  std::uint64_t seed = 0;
  std::vector<TripleRecord> triples_x;
  /// Action-labeled frames rendered with shape_y; used only for evaluating
  /// Y-side prediction, never for training.
  std::vector<TripleRecord> triples_y;
  std::vector<PairedRecord> pairs_y;

  bool operator==(const Dataset& o) const {
    return seed == o.seed && triples_x == o.triples_x && triples_y == o.triples_y && pairs_y == o.pairs_y;
  }
};

/// Records per generation shard; shard i draws from a stream seeded by (seed, i).
inline constexpr std::size_t kShardSize = 1000;

/// Independent triples: state ~ sample_free_state, action uniform on the
/// action box, next state via step. Rendered with `shape`.
std::vector<TripleRecord> generate_triples(const EnvConfig& config, std::size_t n, AgentShape shape,
                                           std::uint64_t seed, int workers = 1);
std::vector<TripleRecord> generate_x(const EnvConfig& config, std::size_t n, std::uint64_t seed, int workers = 1);
std::vector<PairedRecord> generate_y(const EnvConfig& config, std::size_t n, std::uint64_t seed, int workers = 1);

/// Re-derives both frames from the stored states and checks the transition
/// (exactly when noise is off, validity otherwise).
bool check_triple(const TripleRecord& record, const EnvConfig& config, AgentShape shape);
bool check_pair(const PairedRecord& record, const EnvConfig& config);

enum class DatasetErrc { io, bad_magic, version_mismatch, checksum_mismatch, truncated, structure };

class DatasetError : public std::runtime_error {
 public:
  DatasetError(DatasetErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  DatasetErrc code() const { return code_; }

 private:
  DatasetErrc code_;
};

inline constexpr int kDatasetFormatVersion = 1;

/// Container: "DDC1", u32 header length, key=value manifest, raw payload.
/// Frames are stored as one byte per pixel (round(255 v)), actions and states
/// as little-endian float64.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// CRC-32 over the payload bytes, as written into the manifest.
std::uint32_t dataset_checksum(const Dataset& dataset);

}  // namespace ddc
