#pragma once

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <optional>
#include <stdexcept>
#include <string>

namespace travelrule {

// Timestamps are carried as RFC 3339 UTC strings ("2022-01-02T03:04:05Z")
// and compared as seconds since the Unix epoch. Sub-second precision is not
// used anywhere in the wire or storage formats.

inline std::string format_rfc3339(std::int64_t unix_seconds) {
  std::time_t t = static_cast<std::time_t>(unix_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  return buf;
}

inline std::optional<std::int64_t> parse_rfc3339(const std::string& s) {
  std::tm tm{};
  int y, mo, d, h, mi, se;
  char z;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h,
                  &mi, &se, &z) != 7 ||
      (z != 'Z' && z != 'z')) {
    return std::nullopt;
  }
  if (s.size() != 20) return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60)
    return std::nullopt;
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = se;
  return static_cast<std::int64_t>(timegm(&tm));
}

inline std::int64_t parse_rfc3339_or_throw(const std::string& s) {
  auto t = parse_rfc3339(s);
  if (!t) throw std::invalid_argument("bad RFC 3339 timestamp: " + s);
  return *t;
}

// Injected wherever "now" matters so the simulator can drive time.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_seconds() const = 0;
  std::string now_rfc3339() const { return format_rfc3339(now_seconds()); }
};

class SystemClock final : public Clock {
 public:
  std::int64_t now_seconds() const override {
    return static_cast<std::int64_t>(std::time(nullptr));
  }
};

// Tick-driven clock; one tick is one second.
class SimClock final : public Clock {
 public:
  explicit SimClock(std::int64_t epoch = 1640995200 /* 2022-01-01T00:00:00Z */)
      : epoch_(epoch) {}
  std::int64_t now_seconds() const override { return epoch_ + tick_; }
  void advance(std::int64_t ticks = 1) { tick_ += ticks; }
  std::int64_t tick() const { return tick_; }

 private:
  std::int64_t epoch_;
  std::int64_t tick_ = 0;
};

}  // namespace travelrule
