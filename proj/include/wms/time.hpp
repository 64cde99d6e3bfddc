#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace wms {

// Milliseconds since the Unix epoch, UTC.
struct Timestamp {
  std::int64_t millis = 0;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

// A proleptic Gregorian calendar date, used for due dates.
struct CivilDate {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;

  friend auto operator<=>(const CivilDate&, const CivilDate&) = default;
};

/// Formats as `YYYY-MM-DDTHH:MM:SS.mmmZ`.
[[nodiscard]] std::string format_rfc3339(Timestamp ts);

/// Accepts exactly the form produced by format_rfc3339.
[[nodiscard]] std::optional<Timestamp> parse_rfc3339(std::string_view text);

[[nodiscard]] std::string format_date(CivilDate date);
[[nodiscard]] std::optional<CivilDate> parse_date(std::string_view text);

class Clock {
public:
  virtual ~Clock() = default;
  [[nodiscard]] virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
public:
  [[nodiscard]] Timestamp now() const override;
};

// Deterministic clock: starts at `start` and advances by `step_millis` on every
// read. Used by seeding and tests.
class SteppingClock final : public Clock {
public:
  explicit SteppingClock(Timestamp start, std::int64_t step_millis = 0)
      : next_(start.millis), step_(step_millis) {}

  [[nodiscard]] Timestamp now() const override {
    return Timestamp{next_.fetch_add(step_, std::memory_order_relaxed)};
  }

  void set(Timestamp ts) { next_.store(ts.millis); }
  void advance(std::int64_t millis) { next_.fetch_add(millis); }

private:
  mutable std::atomic<std::int64_t> next_;
  std::int64_t step_;
};

}  // namespace wms
