#pragma once

#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace deepgap {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

/// Strict decimal parse of the whole field; std::nullopt on failure.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::string_view trim(std::string_view text);

/// Splits one delimited line. Surrounding whitespace and one level of
/// double quotes are stripped from every field; quoted delimiters are not
/// supported.
std::vector<std::string> split_fields(std::string_view line, char delimiter);

/// `key = value` lines; `#` starts a comment. Later keys override earlier
/// ones. Throws ConfigError on a line without `=`.
std::map<std::string, std::string> parse_key_values(std::istream& in);

/// Reads a line and strips a trailing '\r'. False at end of stream.
bool read_line(std::istream& in, std::string& line);

}  // namespace deepgap
