#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>

namespace sen {

// Minimal streaming SHA-256 (FIPS 180-4). Used for encoder freeze checks,
// config digests and dataset fingerprints.
class Sha256 {
 public:
  Sha256() { reset(); }

  void reset();
  void update(const void* data, size_t len);
  void update(std::span<const double> values) {
    update(values.data(), values.size() * sizeof(double));
  }
  // Finalizes and returns the digest as lowercase hex. The object must be
  // reset before reuse.
  std::string hex_digest();

  static std::string hash_hex(const void* data, size_t len) {
    Sha256 h;
    h.update(data, len);
    return h.hex_digest();
  }
  static std::string hash_hex(const std::string& s) {
    return hash_hex(s.data(), s.size());
  }

 private:
  void process_block(const uint8_t* block);

  uint32_t state_[8];
  uint64_t bit_count_ = 0;
  uint8_t buffer_[64];
  size_t buffer_len_ = 0;
};

}  // namespace sen
