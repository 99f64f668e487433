#include "deepgap/time.hpp"

#include <cstdio>

#include "deepgap/error.hpp"
#include "deepgap/text.hpp"

namespace deepgap {
namespace {

int digits(std::string_view text, std::size_t pos, std::size_t count) {
  if (pos + count > text.size()) {
    return -1;
  }
  int value = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    char c = text[i];
    if (c < '0' || c > '9') {
      return -1;
    }
    value = value * 10 + (c - '0');
  }
  return value;
}

[[noreturn]] void bad(std::string_view text) {
  throw InvalidArgument("malformed timestamp '" + std::string(text) + "'");
}

std::chrono::sys_days date_at(std::string_view text) {
  int y = digits(text, 0, 4);
  int m = digits(text, 5, 2);
  int d = digits(text, 8, 2);
  if (y < 0 || m < 0 || d < 0 || text[4] != '-' || text[7] != '-') {
    bad(text);
  }
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) {
    bad(text);
  }
  return std::chrono::sys_days{ymd};
}

}  // namespace

std::chrono::sys_days parse_date(std::string_view text) {
  text = trim(text);
  if (text.size() != 10) {
    bad(text);
  }
  return date_at(text);
}

Timestamp parse_timestamp(std::string_view text) {
  text = trim(text);
  if (text.empty()) {
    bad(text);
  }
  if (text.find('-', 1) == std::string_view::npos) {
    auto epoch = parse_int(text);
    if (!epoch) {
      bad(text);
    }
    return Timestamp{Duration{*epoch}};
  }
  if (text.size() < 10) {
    bad(text);
  }
  auto day = date_at(text);
  if (text.size() == 10) {
    return Timestamp{day};
  }
  if (text.back() == 'Z') {
    text.remove_suffix(1);
  }
  if (text[10] != 'T' && text[10] != ' ') {
    bad(text);
  }
  int hh = digits(text, 11, 2);
  int mm = digits(text, 14, 2);
  int ss = 0;
  if (hh < 0 || mm < 0 || text.size() < 16 || text[13] != ':') {
    bad(text);
  }
  if (text.size() > 16) {
    if (text[16] != ':' || (ss = digits(text, 17, 2)) < 0 || text.size() != 19) {
      bad(text);
    }
  }
  if (hh > 23 || mm > 59 || ss > 60) {
    bad(text);
  }
  return Timestamp{day} + std::chrono::hours{hh} + std::chrono::minutes{mm} + Duration{ss};
}

std::string format_timestamp(Timestamp t) {
  auto day = std::chrono::floor<std::chrono::days>(t);
  std::chrono::year_month_day ymd{day};
  std::chrono::hh_mm_ss hms{t - day};
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02lld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()));
  return buf;
}

Timestamp floor_to(Timestamp t, Duration step) {
  auto count = t.time_since_epoch().count();
  auto s = step.count();
  auto q = count / s;
  if (count % s != 0 && count < 0) {
    --q;
  }
  return Timestamp{Duration{q * s}};
}

}  // namespace deepgap
