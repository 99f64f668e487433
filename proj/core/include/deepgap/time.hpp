#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace deepgap {

using Timestamp = std::chrono::sys_seconds;
using Duration = std::chrono::seconds;

/// Parses `YYYY-MM-DD[T| ]HH:MM[:SS][Z]`, a bare `YYYY-MM-DD`, or integer epoch seconds.
/// Times without a zone are taken as UTC. Throws InvalidArgument on malformed input.
Timestamp parse_timestamp(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SS`.
std::string format_timestamp(Timestamp t);

/// Parses `YYYY-MM-DD`.
std::chrono::sys_days parse_date(std::string_view text);

/// Largest multiple of `step` (counted from the epoch) that is <= t.
Timestamp floor_to(Timestamp t, Duration step);

}  // namespace deepgap
