#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace evil {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// First 8 bytes (big-endian) of HMAC-SHA256(key, message).
std::uint64_t keyed_hash64(std::string_view key, std::string_view message);

}  // namespace evil
