#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bodyrig {

using Bytes = std::vector<std::uint8_t>;

// Lower-case hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> data);

// Incremental SHA-256 for streamed frame reassembly.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::uint8_t> data);
  std::string finish_hex();

 private:
  void* ctx_;
};

std::string base64_encode(std::span<const std::uint8_t> data);
// Returns nullopt unless `text` is canonical padded base64.
std::optional<Bytes> base64_decode(std::string_view text);

}  // namespace bodyrig
