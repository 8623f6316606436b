#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace olm {

// Canonical number formatting used by every text emitter. Integral values
// print without a fractional part; everything else prints the shortest
// decimal string that round-trips to the same double.
std::string format_number(double v);
std::string format_int(std::int64_t v);

// Strict parsers; the whole token must be consumed. Throw ValidationError.
double parse_number(std::string_view token);
std::int64_t parse_int(std::string_view token);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

} // namespace olm
