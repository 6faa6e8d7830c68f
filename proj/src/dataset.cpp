#include "ddc/dataset.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <boost/crc.hpp>

namespace ddc {

static_assert(std::endian::native == std::endian::little, "dataset container assumes a little-endian host");

namespace {

std::atomic<std::uint64_t> g_ground_truth_reads{0};

Rng shard_rng(std::uint64_t seed, std::size_t shard) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(shard), 0x44444331u};
  return Rng(seq);
}

// Runs make(shard_index, begin, end, rng) for each shard, on up to `workers`
// threads; output order depends only on the shard index.
template <typename Record, typename Make>
std::vector<Record> sharded(std::size_t n, std::uint64_t seed, int workers, Make make) {
  const std::size_t shards = (n + kShardSize - 1) / kShardSize;
  std::vector<std::vector<Record>> parts(shards);
  auto run = [&](std::size_t first, std::size_t stride) {
    for (std::size_t s = first; s < shards; s += stride) {
      Rng rng = shard_rng(seed, s);
      const std::size_t begin = s * kShardSize;
      const std::size_t end = std::min(n, begin + kShardSize);
      parts[s].reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) parts[s].push_back(make(rng));
    }
  };
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(workers, shards));
  if (w == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < w; ++t) pool.emplace_back(run, t, w);
    for (auto& th : pool) th.join();
  }
  std::vector<Record> out;
  out.reserve(n);
  for (auto& p : parts)
    for (auto& r : p) out.push_back(std::move(r));
  return out;
}

// --- payload encoding ------------------------------------------------------

constexpr std::size_t kFrameBytes(int side) { return static_cast<std::size_t>(side) * side; }
std::size_t triple_bytes(int side) { return 2 * kFrameBytes(side) + 6 * sizeof(double); }
std::size_t pair_bytes(int side) { return 2 * kFrameBytes(side) + 2 * sizeof(double); }

void put_frame(std::string& out, const Image& img) {
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img(i), 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0))));
  }
}

void put_double(std::string& out, double v) {
  char buf[sizeof(double)];
  std::memcpy(buf, &v, sizeof(double));
  out.append(buf, sizeof(double));
}

void put_vec2(std::string& out, const Eigen::Vector2d& v) {
  put_double(out, v.x());
  put_double(out, v.y());
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;

  Image frame(int side) {
    Image img(static_cast<Eigen::Index>(side) * side);
    for (Eigen::Index i = 0; i < img.size(); ++i)
      img(i) = static_cast<double>(static_cast<std::uint8_t>(data[pos++])) / 255.0;
    return img;
  }
  double real() {
    double v = 0.0;
    std::memcpy(&v, data.data() + pos, sizeof(double));
    pos += sizeof(double);
    return v;
  }
  Eigen::Vector2d vec2() {
    const double x = real();
    const double y = real();
    return {x, y};
  }
};

std::string encode_payload(const Dataset& d) {
  const int side = d.env.arena_size;
  std::string out;
  out.reserve(d.triples_x.size() * triple_bytes(side) + d.triples_y.size() * triple_bytes(side) +
              d.pairs_y.size() * pair_bytes(side));
  for (const auto* set : {&d.triples_x, &d.triples_y})
    for (const auto& r : *set) {
      put_frame(out, r.x_t());
      put_vec2(out, r.u_t());
      put_frame(out, r.x_next());
      put_vec2(out, r.eval_true_state_t().position);
      put_vec2(out, r.eval_true_state_next().position);
    }
  for (const auto& r : d.pairs_y) {
    put_frame(out, r.y_t());
    put_frame(out, r.x_t());
    put_vec2(out, r.eval_true_state_t().position);
  }
  return out;
}

std::uint32_t crc32(const std::string& bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

}  // namespace

std::uint64_t ground_truth_reads() { return g_ground_truth_reads.load(); }
void reset_ground_truth_reads() { g_ground_truth_reads = 0; }

const PlanarState& TripleRecord::eval_true_state_t() const {
  ++g_ground_truth_reads;
  return state_t_;
}
const PlanarState& TripleRecord::eval_true_state_next() const {
  ++g_ground_truth_reads;
  return state_next_;
}
const PlanarState& PairedRecord::eval_true_state_t() const {
  ++g_ground_truth_reads;
  return state_t_;
}

std::vector<TripleRecord> generate_triples(const EnvConfig& config, std::size_t n, AgentShape shape,
                                           std::uint64_t seed, int workers) {
  if (n < 1) throw std::invalid_argument("generate: n must be at least 1");
  config.validate();
  return sharded<TripleRecord>(n, seed, workers, [&](Rng& rng) {
    const PlanarState s = sample_free_state(config, rng);
    std::uniform_real_distribution<double> ud(-config.u_max, config.u_max);
    const double ux = ud(rng);
    const double uy = ud(rng);
    const Action u(ux, uy);
    const PlanarState next = step(s, u, config, rng);
    return TripleRecord(render(s, shape, config), u, render(next, shape, config), s, next);
  });
}

std::vector<TripleRecord> generate_x(const EnvConfig& config, std::size_t n, std::uint64_t seed, int workers) {
  return generate_triples(config, n, config.shape_x, seed, workers);
}

std::vector<PairedRecord> generate_y(const EnvConfig& config, std::size_t n, std::uint64_t seed, int workers) {
  if (n < 1) throw std::invalid_argument("generate: n must be at least 1");
  config.validate();
  return sharded<PairedRecord>(n, seed, workers, [&](Rng& rng) {
    const PlanarState s = sample_free_state(config, rng);
    return PairedRecord(render(s, config.shape_y, config), render(s, config.shape_x, config), s);
  });
}

bool check_triple(const TripleRecord& record, const EnvConfig& config, AgentShape shape) {
  const PlanarState& s = record.eval_true_state_t();
  const PlanarState& next = record.eval_true_state_next();
  if (!is_valid(s, config) || !is_valid(next, config)) return false;
  if (record.u_t().cwiseAbs().maxCoeff() > config.u_max) return false;
  if (record.x_t() != render(s, shape, config) || record.x_next() != render(next, shape, config)) return false;
  if (config.state_noise_std == 0.0) {
    Rng unused(0);
    if (!(step(s, record.u_t(), config, unused) == next)) return false;
  }
  return true;
}

bool check_pair(const PairedRecord& record, const EnvConfig& config) {
  const PlanarState& s = record.eval_true_state_t();
  return is_valid(s, config) && record.y_t() == render(s, config.shape_y, config) &&
         record.x_t() == render(s, config.shape_x, config);
}

std::uint32_t dataset_checksum(const Dataset& dataset) { return crc32(encode_payload(dataset)); }

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  const std::string payload = encode_payload(dataset);
  KeyValues manifest;
  manifest["format_version"] = std::to_string(kDatasetFormatVersion);
  manifest["seed"] = std::to_string(dataset.seed);
  manifest["count.triples_x"] = std::to_string(dataset.triples_x.size());
  manifest["count.triples_y"] = std::to_string(dataset.triples_y.size());
  manifest["count.pairs_y"] = std::to_string(dataset.pairs_y.size());
  manifest["payload_bytes"] = std::to_string(payload.size());
  std::ostringstream crc;
  crc << std::hex << std::setw(8) << std::setfill('0') << crc32(payload);
  manifest["checksum.crc32"] = crc.str();
  write_env_config(dataset.env, "env.", manifest);
  const std::string header = format_key_values(manifest);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError(DatasetErrc::io, "cannot open '" + path.string() + "' for writing");
  const auto len = static_cast<std::uint32_t>(header.size());
  out.write("DDC1", 4);
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DatasetError(DatasetErrc::io, "write failed for '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(DatasetErrc::io, "cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || bytes.compare(0, 4, "DDC1") != 0)
    throw DatasetError(DatasetErrc::bad_magic, "'" + path.string() + "' is not a dataset container");
  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 4, sizeof(header_len));
  if (8 + static_cast<std::size_t>(header_len) > bytes.size())
    throw DatasetError(DatasetErrc::truncated, "manifest extends past end of file");

  Dataset d;
  std::size_t n_tx = 0, n_ty = 0, n_py = 0, payload_bytes = 0;
  std::uint32_t expected_crc = 0;
  try {
    const KeyValues manifest = parse_key_values(std::string_view(bytes).substr(8, header_len));
    KeyReader r(manifest);
    const int version = r.require<int>("format_version");
    if (version != kDatasetFormatVersion)
      throw DatasetError(DatasetErrc::version_mismatch,
                         "dataset format version " + std::to_string(version) + ", expected " +
                             std::to_string(kDatasetFormatVersion));
    d.seed = r.require<std::uint64_t>("seed");
    n_tx = r.require<std::size_t>("count.triples_x");
    n_ty = r.require<std::size_t>("count.triples_y");
    n_py = r.require<std::size_t>("count.pairs_y");
    payload_bytes = r.require<std::size_t>("payload_bytes");
    expected_crc = static_cast<std::uint32_t>(std::stoul(r.require<std::string>("checksum.crc32"), nullptr, 16));
    d.env = read_env_config(r, "env.");
    r.reject_unknown();
  } catch (const ConfigError& e) {
    throw DatasetError(DatasetErrc::structure, std::string("malformed manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DatasetError(DatasetErrc::structure, std::string("malformed manifest: ") + e.what());
  }

  const int side = d.env.arena_size;
  const std::size_t implied = (n_tx + n_ty) * triple_bytes(side) + n_py * pair_bytes(side);
  if (implied != payload_bytes)
    throw DatasetError(DatasetErrc::structure, "manifest record counts imply " + std::to_string(implied) +
                                                   " payload bytes, manifest declares " + std::to_string(payload_bytes));
  const std::size_t available = bytes.size() - 8 - header_len;
  if (available < payload_bytes)
    throw DatasetError(DatasetErrc::truncated, "payload truncated: " + std::to_string(available) + " of " +
                                                   std::to_string(payload_bytes) + " bytes");
  if (available > payload_bytes)
    throw DatasetError(DatasetErrc::structure, "trailing bytes after declared payload");
  const std::string payload = bytes.substr(8 + header_len);
  if (crc32(payload) != expected_crc) throw DatasetError(DatasetErrc::checksum_mismatch, "payload checksum mismatch");

  Reader rd{payload};
  auto read_triples = [&](std::size_t n, std::vector<TripleRecord>& dst) {
    dst.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Image xt = rd.frame(side);
      const Action u = rd.vec2();
      Image xn = rd.frame(side);
      const PlanarState s{rd.vec2()};
      const PlanarState sn{rd.vec2()};
      dst.emplace_back(std::move(xt), u, std::move(xn), s, sn);
    }
  };
  read_triples(n_tx, d.triples_x);
  read_triples(n_ty, d.triples_y);
  d.pairs_y.reserve(n_py);
  for (std::size_t i = 0; i < n_py; ++i) {
    Image y = rd.frame(side);
    Image x = rd.frame(side);
    const PlanarState s{rd.vec2()};
    d.pairs_y.emplace_back(std::move(y), std::move(x), s);
  }
  return d;
}

}  // namespace ddc
