#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>

namespace tsflow {

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// Canonical JSON: sorted keys, no whitespace, UTF-8 (invalid sequences replaced).
std::string canonical_json(const nlohmann::json& value);

/// sha256_hex(canonical_json(value)).
std::string json_digest(const nlohmann::json& value);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

inline constexpr std::string_view kZeroHash =
    "0000000000000000000000000000000000000000000000000000000000000000";

}  // namespace tsflow
