#include "sen/checkpoint.hpp"

#include <cstring>

#include <json.hpp>

namespace sen {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'N', 'C'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = uint8_t(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in, const char* what) {
  uint8_t b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw IoError(std::string("checkpoint: truncated while reading ") + what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in, const char* what) {
  uint8_t b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw IoError(std::string("checkpoint: truncated while reading ") + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

const CheckpointEntry* CheckpointFile::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

void write_checkpoint(const std::string& path,
                      const std::vector<std::pair<std::string, Tensor>>& named,
                      const CheckpointMeta& meta, CheckpointDtype dtype) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open '" + path + "' for write");
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, uint32_t(named.size()));
  for (const auto& [name, tensor] : named) {
    if (!tensor.defined())
      throw IoError("checkpoint: undefined tensor '" + name + "'");
    put_u32(out, uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    out.put(char(dtype));
    const Shape& s = tensor.shape();
    out.put(char(uint8_t(s.size())));
    for (int64_t e : s) put_u64(out, uint64_t(e));
    if (dtype == CheckpointDtype::f64) {
      for (double v : tensor.values()) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(out, bits);
      }
    } else {
      for (double v : tensor.values()) {
        const float f = float(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
      }
    }
  }
  nlohmann::ordered_json m;
  m["config_digest"] = meta.config_digest;
  m["encoder_seeds"] = meta.encoder_seeds;
  m["seed"] = meta.seed;
  m["step"] = meta.step;
  const std::string blob = m.dump();
  put_u32(out, uint32_t(blob.size()));
  out.write(blob.data(), std::streamsize(blob.size()));
  if (!out) throw IoError("checkpoint: write to '" + path + "' failed");
}

CheckpointFile read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("checkpoint: bad magic in '" + path +
                  "' (not a SENC file)");
  CheckpointFile file;
  file.version = get_u32(in, "version");
  if (file.version != kVersion)
    throw IoError("checkpoint: unsupported version " +
                  std::to_string(file.version));
  const uint32_t count = get_u32(in, "entry count");
  file.entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointEntry entry;
    const uint32_t name_len = get_u32(in, "name length");
    entry.name.resize(name_len);
    if (!in.read(entry.name.data(), name_len))
      throw IoError("checkpoint: truncated entry name");
    const int dtype_tag = in.get();
    const int rank = in.get();
    if (dtype_tag == EOF || rank == EOF)
      throw IoError("checkpoint: truncated entry header");
    if (dtype_tag != 0 && dtype_tag != 1)
      throw IoError("checkpoint: unknown dtype tag " +
                    std::to_string(dtype_tag) + " for '" + entry.name + "'");
    entry.dtype = CheckpointDtype(uint8_t(dtype_tag));
    int64_t numel = 1;
    for (int r = 0; r < rank; ++r) {
      const uint64_t e = get_u64(in, "extent");
      entry.shape.push_back(int64_t(e));
      numel *= int64_t(e);
    }
    entry.data.resize(static_cast<size_t>(numel));
    if (entry.dtype == CheckpointDtype::f64) {
      for (int64_t j = 0; j < numel; ++j) {
        const uint64_t bits = get_u64(in, "payload");
        double v;
        std::memcpy(&v, &bits, 8);
        entry.data[size_t(j)] = v;
      }
    } else {
      for (int64_t j = 0; j < numel; ++j) {
        const uint32_t bits = get_u32(in, "payload");
        float f;
        std::memcpy(&f, &bits, 4);
        entry.data[size_t(j)] = double(f);
      }
    }
    file.entries.push_back(std::move(entry));
  }
  const uint32_t blob_len = get_u32(in, "metadata length");
  std::string blob(blob_len, '\0');
  if (!in.read(blob.data(), blob_len))
    throw IoError("checkpoint: truncated metadata");
  try {
    auto m = nlohmann::json::parse(blob);
    file.meta.config_digest = m.value("config_digest", std::string());
    file.meta.encoder_seeds =
        m.value("encoder_seeds", std::vector<uint64_t>());
    file.meta.seed = m.value("seed", uint64_t(0));
    file.meta.step = m.value("step", int64_t(0));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: bad metadata JSON: ") + e.what());
  }
  return file;
}

MetricsWriter::MetricsWriter(const std::string& path)
    : out_(path, std::ios::app | std::ios::binary) {
  if (!out_) throw IoError("metrics: cannot open '" + path + "'");
}

std::string metric_row_json(const MetricRow& row) {
  nlohmann::ordered_json j;
  j["step"] = row.step;
  j["arm"] = row.arm;
  j["metric"] = row.metric;
  j["value"] = row.value;
  j["seed"] = row.seed;
  return j.dump();
}

void MetricsWriter::write(int64_t step, const std::string& arm,
                          const std::string& metric, double value,
                          uint64_t seed) {
  out_ << metric_row_json({step, arm, metric, value, seed}) << '\n';
  out_.flush();
}

}  // namespace sen
