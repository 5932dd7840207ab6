#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace moira {

/// Millisecond time source shared by routing, swapping and dispatch.
/// `advance` models a blocking wait of the given duration.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() const = 0;
  virtual void advance(std::int64_t ms) = 0;
};

/// Time moves only when advanced. Thread-safe.
class SimulatedClock final : public Clock {
 public:
  explicit SimulatedClock(std::int64_t start_ms = 0) : now_(start_ms) {}

  std::int64_t now_ms() const override { return now_.load(); }
  void advance(std::int64_t ms) override {
    if (ms > 0) now_.fetch_add(ms);
  }

 private:
  std::atomic<std::int64_t> now_;
};

/// steady_clock; advance() sleeps.
class WallClock final : public Clock {
 public:
  WallClock() : origin_(std::chrono::steady_clock::now()) {}

  std::int64_t now_ms() const override;
  void advance(std::int64_t ms) override;

 private:
  std::chrono::steady_clock::time_point origin_;
};

}  // namespace moira
