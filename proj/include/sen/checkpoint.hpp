#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "sen/tensor.hpp"

namespace sen {

// Binary checkpoint ("SENC"): magic, version u32 LE, entry count u32 LE,
// then per entry: name length u32 + UTF-8 name, dtype tag u8 (0 = f64,
// 1 = f32), rank u8, extents as u64 LE, row-major little-endian payload.
// A length-prefixed JSON metadata blob (config digest, encoder seeds, step)
// trails the entries. Readers need no config to enumerate tensors.

enum class CheckpointDtype : uint8_t { f64 = 0, f32 = 1 };

struct CheckpointEntry {
  std::string name;
  CheckpointDtype dtype = CheckpointDtype::f64;
  Shape shape;
  std::vector<double> data;
};

struct CheckpointMeta {
  std::string config_digest;
  std::vector<uint64_t> encoder_seeds;
  uint64_t seed = 0;
  int64_t step = 0;
};

struct CheckpointFile {
  uint32_t version = 1;
  std::vector<CheckpointEntry> entries;
  CheckpointMeta meta;

  const CheckpointEntry* find(const std::string& name) const;
};

void write_checkpoint(const std::string& path,
                      const std::vector<std::pair<std::string, Tensor>>& named,
                      const CheckpointMeta& meta,
                      CheckpointDtype dtype = CheckpointDtype::f64);

CheckpointFile read_checkpoint(const std::string& path);

// Append-only JSON Lines metrics stream; every prefix of the file is a valid
// sequence of records.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  explicit MetricsWriter(const std::string& path);
  bool open() const { return out_.is_open(); }
  void write(int64_t step, const std::string& arm, const std::string& metric,
             double value, uint64_t seed);

 private:
  std::ofstream out_;
};

struct MetricRow {
  int64_t step;
  std::string arm;
  std::string metric;
  double value;
  uint64_t seed;
};

std::string metric_row_json(const MetricRow& row);

}  // namespace sen
