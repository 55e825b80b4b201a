#pragma once

#include <string>
#include <vector>

namespace s2rl {

// Shortest decimal form that round-trips the exact double (std::to_chars).
std::string fmt_double(double v);

// Strict full-string parses; throw ValidationError on junk.
double parse_double(const std::string& s);
long long parse_int(const std::string& s);

std::vector<std::string> split(const std::string& s, char sep);

}  // namespace s2rl
