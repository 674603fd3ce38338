#pragma once

// Line-oriented wire format for one server's estimate:
//
//   v1|server_id|n_k|p|theta_1,...,theta_p|vech(sigma)_1,...|crc32
//
// Reals are printed with 17 significant digits, so decoding reproduces the
// encoded doubles bit for bit. The CRC-32 (8 lowercase hex digits) covers
// every byte before the final '|'. Only the lower triangle of sigma travels.

#include <string>
#include <string_view>

#include "robagg/aggregate.hpp"
#include "robagg/error.hpp"

namespace robagg {

inline constexpr std::string_view kMessageVersion = "v1";

class DecodeError : public Error {
 public:
  enum class Kind { Truncated, Checksum, Version, Malformed };

  DecodeError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

std::string encode_message(const LocalEstimate& est);
LocalEstimate decode_message(std::string_view bytes);

/// CRC-32 (IEEE) of the given bytes.
std::uint32_t crc32(std::string_view bytes);

}  // namespace robagg
