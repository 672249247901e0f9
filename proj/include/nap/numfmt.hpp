#pragma once

#include <string>
#include <string_view>

namespace nap {

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

/// Parses a full decimal (or inf/-inf/nan) token; throws nap::Error otherwise.
double parse_double(std::string_view text);

}  // namespace nap
