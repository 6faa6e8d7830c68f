#include "ddc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <boost/crc.hpp>

namespace ddc {

static_assert(std::endian::native == std::endian::little, "checkpoint container assumes a little-endian host");

namespace {

std::string shape_string(const Eigen::MatrixXd& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void append(std::string& out, const Eigen::MatrixXd& m) {
  // Column-major storage, as Eigen holds it.
  out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
}

std::uint32_t crc32(const std::string& bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

}  // namespace

std::string shape_diff(const ModelParams& expected, const ModelParams& actual) {
  std::string out;
  for (const auto& [name, block] : expected.blocks) {
    const auto it = actual.blocks.find(name);
    if (it == actual.blocks.end())
      out += "missing block " + name + " (" + shape_string(block) + ")\n";
    else if (it->second.rows() != block.rows() || it->second.cols() != block.cols())
      out += "block " + name + ": expected " + shape_string(block) + ", found " + shape_string(it->second) + "\n";
  }
  for (const auto& [name, block] : actual.blocks)
    if (expected.blocks.count(name) == 0) out += "unexpected block " + name + " (" + shape_string(block) + ")\n";
  return out;
}

void require_same_shapes(const ModelParams& expected, const ModelParams& actual) {
  const std::string diff = shape_diff(expected, actual);
  if (!diff.empty()) throw CheckpointError(CheckpointErrc::shape_mismatch, "parameter shape mismatch:\n" + diff);
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const bool has_adam = !ck.adam.m.empty();
  std::string payload;
  std::string shapes;
  for (const auto& [name, block] : ck.params.blocks) {
    shapes += (shapes.empty() ? "" : ";") + name + ":" + shape_string(block);
    append(payload, block);
  }
  if (has_adam)
    for (const auto* moments : {&ck.adam.m, &ck.adam.v})
      for (const auto& [name, block] : ck.params.blocks) {
        const Eigen::MatrixXd& mom = moments->at(name);
        if (mom.rows() != block.rows() || mom.cols() != block.cols())
          throw CheckpointError(CheckpointErrc::structure, "optimizer state for " + name + " has the wrong shape");
        append(payload, mom);
      }

  KeyValues manifest;
  manifest["format_version"] = std::to_string(kCheckpointFormatVersion);
  manifest["step"] = std::to_string(ck.step);
  manifest["blocks"] = shapes;
  manifest["adam"] = has_adam ? "true" : "false";
  manifest["payload_bytes"] = std::to_string(payload.size());
  std::ostringstream crc;
  crc << std::hex << std::setw(8) << std::setfill('0') << crc32(payload);
  manifest["checksum.crc32"] = crc.str();
  write_hyper_config(ck.params.hyper, "model.", manifest);
  const std::string header = format_key_values(manifest);

  // Write-then-rename so a crash never leaves a half-written checkpoint.
  const std::filesystem::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError(CheckpointErrc::io, "cannot open '" + tmp.string() + "' for writing");
    const auto len = static_cast<std::uint32_t>(header.size());
    out.write("DDCK", 4);
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw CheckpointError(CheckpointErrc::io, "write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrc::io, "cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || bytes.compare(0, 4, "DDCK") != 0)
    throw CheckpointError(CheckpointErrc::bad_magic, "'" + path.string() + "' is not a checkpoint");
  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 4, sizeof(header_len));
  if (8 + static_cast<std::size_t>(header_len) > bytes.size())
    throw CheckpointError(CheckpointErrc::truncated, "manifest extends past end of file");

  Checkpoint ck;
  std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> shapes;
  bool has_adam = false;
  std::size_t payload_bytes = 0;
  std::uint32_t expected_crc = 0;
  try {
    const KeyValues manifest = parse_key_values(std::string_view(bytes).substr(8, header_len));
    KeyReader r(manifest);
    const int version = r.require<int>("format_version");
    if (version != kCheckpointFormatVersion)
      throw CheckpointError(CheckpointErrc::version_mismatch, "checkpoint format version " + std::to_string(version) +
                                                                  ", expected " +
                                                                  std::to_string(kCheckpointFormatVersion));
    ck.step = r.require<std::uint64_t>("step");
    has_adam = r.require<bool>("adam");
    payload_bytes = r.require<std::size_t>("payload_bytes");
    expected_crc = static_cast<std::uint32_t>(std::stoul(r.require<std::string>("checksum.crc32"), nullptr, 16));
    ck.params.hyper = read_hyper_config(r, "model.");
    std::istringstream list(r.require<std::string>("blocks"));
    std::string item;
    while (std::getline(list, item, ';')) {
      const auto colon = item.rfind(':'), x = item.rfind('x');
      if (colon == std::string::npos || x == std::string::npos || x < colon)
        throw ConfigError("bad block entry '" + item + "'");
      shapes.push_back({item.substr(0, colon),
                        {std::stol(item.substr(colon + 1, x - colon - 1)), std::stol(item.substr(x + 1))}});
    }
    r.reject_unknown();
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointErrc::structure, std::string("malformed manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointErrc::structure, std::string("malformed manifest: ") + e.what());
  }

  std::size_t doubles = 0;
  for (const auto& [name, rc] : shapes) doubles += static_cast<std::size_t>(rc.first * rc.second);
  const std::size_t implied = doubles * sizeof(double) * (has_adam ? 3 : 1);
  if (implied != payload_bytes)
    throw CheckpointError(CheckpointErrc::structure, "block shapes imply " + std::to_string(implied) +
                                                         " payload bytes, manifest declares " +
                                                         std::to_string(payload_bytes));
  const std::size_t available = bytes.size() - 8 - header_len;
  if (available < payload_bytes) throw CheckpointError(CheckpointErrc::truncated, "checkpoint payload truncated");
  if (available > payload_bytes) throw CheckpointError(CheckpointErrc::structure, "trailing bytes after payload");
  const std::string payload = bytes.substr(8 + header_len);
  if (crc32(payload) != expected_crc) throw CheckpointError(CheckpointErrc::checksum_mismatch, "checkpoint checksum mismatch");

  std::size_t pos = 0;
  auto take = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
    std::memcpy(m.data(), payload.data() + pos, n);
    pos += n;
    return m;
  };
  for (const auto& [name, rc] : shapes) ck.params.blocks[name] = take(rc.first, rc.second);
  if (has_adam) {
    for (const auto& [name, rc] : shapes) ck.adam.m[name] = take(rc.first, rc.second);
    for (const auto& [name, rc] : shapes) ck.adam.v[name] = take(rc.first, rc.second);
  }
  return ck;
}

}  // namespace ddc
