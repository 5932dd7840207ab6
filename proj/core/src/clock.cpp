#include "moira/clock.hpp"

#include <thread>

namespace moira {

std::int64_t WallClock::now_ms() const {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now() - origin_)
      .count();
}

void WallClock::advance(std::int64_t ms) {
  if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

}  // namespace moira
