#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gchoreo::text {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);

// Whole-string parses; throw ValidationError naming `what` on failure.
double parse_double(std::string_view token, std::string_view what = "number");
std::int64_t parse_int(std::string_view token, std::string_view what = "integer");
std::uint64_t parse_uint(std::string_view token, std::string_view what = "integer");

std::vector<std::string_view> split(std::string_view s, char sep);
std::vector<std::string_view> split_whitespace(std::string_view s);
std::string_view trim(std::string_view s);

// 64-bit FNV-1a; stable across platforms, used for config hashes.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace gchoreo::text
