#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace adprof {

std::array<std::uint8_t, 32> sha256(std::string_view data);
std::string sha256_hex(std::string_view data);

/// Hashes a sequence of fields with length prefixes, so ("ab","c") and ("a","bc") differ.
std::string sha256_fields(std::initializer_list<std::string_view> fields);

}  // namespace adprof
