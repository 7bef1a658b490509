#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace aegis {

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// Hex token drawn from a cryptographic RNG (`bytes` of entropy).
std::string random_token(std::size_t bytes = 16);

/// Current UTC time as ISO-8601 with millisecond precision.
std::string utc_now_iso8601();

}  // namespace aegis
