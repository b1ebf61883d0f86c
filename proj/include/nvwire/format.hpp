#pragma once

#include <string>
#include <string_view>

namespace nvwire {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Parse a full string as a double (C locale). Returns false on trailing junk.
bool parse_double(std::string_view text, double& out);

std::string_view trim(std::string_view text);

}  // namespace nvwire
