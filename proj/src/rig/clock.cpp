#include "pendulum/clock.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

namespace pendulum {

void VirtualClock::add(Ticker& ticker) {
  tickers_.push_back(&ticker);
  ticker.sense(now_ms_);
}

void VirtualClock::sleep_for(double seconds) {
  if (!(seconds >= 0.0)) throw std::invalid_argument("sleep_for: negative duration");
  sleep_ms(std::llround(seconds * 1000.0));
}

void VirtualClock::sleep_ms(std::int64_t ms) {
  const std::int64_t target = now_ms_ + ms;
  while (true) {
    if (act_pending_) {
      for (auto* t : tickers_) t->act(now_ms_);
      act_pending_ = false;
    }
    if (now_ms_ >= target) return;
    ++now_ms_;
    for (auto* t : tickers_) t->sense(now_ms_);
    act_pending_ = true;
    // Hand control back between sense and act of the last millisecond.
    if (now_ms_ >= target) return;
  }
}

ScaledClock::ScaledClock(double factor)
    : factor_(factor), epoch_(std::chrono::steady_clock::now()) {
  if (!(factor > 0.0)) throw std::invalid_argument("clock factor must be positive");
}

double ScaledClock::now() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count() *
         factor_;
}

void ScaledClock::sleep_for(double seconds) {
  if (seconds <= 0.0) return;
  std::this_thread::sleep_for(std::chrono::duration<double>(seconds / factor_));
}

}  // namespace pendulum
