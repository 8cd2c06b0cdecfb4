#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

namespace cm {

using Json = nlohmann::json;

/// Canonical text form: object keys sorted bytewise, no insignificant
/// whitespace, UTF-8 passed through. Used for log records, API bodies and
/// state comparison alike.
std::string canonical(const Json& value);

/// Parses text and rejects anything that is not a single JSON value.
Json parse_json(std::string_view text);

std::uint32_t crc32_of(std::string_view bytes);
std::string crc32_hex(std::string_view bytes);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

} // namespace cm
