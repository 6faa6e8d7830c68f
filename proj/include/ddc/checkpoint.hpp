#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "ddc/model.hpp"

namespace ddc {

/// First and second moment estimates of Adam, keyed like ModelParams::blocks.
struct AdamState {
  std::map<std::string, Eigen::MatrixXd> m;
  std::map<std::string, Eigen::MatrixXd> v;

  bool operator==(const AdamState&) const = default;
};

struct Checkpoint {
  ModelParams params;
  std::uint64_t step = 0;  // optimizer steps taken
  AdamState adam;          // empty before the first step
};

enum class CheckpointErrc { io, bad_magic, version_mismatch, checksum_mismatch, truncated, structure, shape_mismatch };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  CheckpointErrc code() const { return code_; }

 private:
  CheckpointErrc code_;
};

inline constexpr int kCheckpointFormatVersion = 1;

/// Container: "DDCK", u32 header length, key=value manifest (hyper config,
/// step, block shapes, CRC-32), then every block and Adam moment as raw
/// little-endian float64 in block-name order.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Empty when every block of `expected` exists in `actual` with the same
/// shape and there are no extra blocks; otherwise one line per difference.
std::string shape_diff(const ModelParams& expected, const ModelParams& actual);

/// Throws CheckpointError(shape_mismatch) carrying shape_diff.
void require_same_shapes(const ModelParams& expected, const ModelParams& actual);

}  // namespace ddc
