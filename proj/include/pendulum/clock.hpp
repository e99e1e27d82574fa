#pragma once

#include <chrono>
#include <cstdint>
#include <vector>

namespace pendulum {

class Clock {
public:
  virtual ~Clock() = default;
  /// Seconds since the clock epoch.
  virtual double now() const = 0;
  virtual void sleep_for(double seconds) = 0;
};

/// Participant of a virtual-clock simulation, ticked once per millisecond.
/// Within a millisecond `sense` runs before any caller sleeping on the clock
/// resumes, and `act` runs after that caller hands control back.
class Ticker {
public:
  virtual ~Ticker() = default;
  virtual void sense(std::int64_t t_ms) = 0;
  virtual void act(std::int64_t t_ms) = 0;
};

/// Deterministic millisecond clock. Time only moves inside sleep_for, which
/// runs every registered ticker for each elapsed millisecond.
class VirtualClock final : public Clock {
public:
  VirtualClock() = default;

  /// Registers a ticker; its `sense` runs immediately for the current time.
  void add(Ticker& ticker);

  double now() const override { return static_cast<double>(now_ms_) / 1000.0; }
  std::int64_t now_ms() const { return now_ms_; }
  /// Rounds to whole milliseconds.
  void sleep_for(double seconds) override;
  void sleep_ms(std::int64_t ms);

private:
  std::vector<Ticker*> tickers_;
  std::int64_t now_ms_ = 0;
  bool act_pending_ = true;
};

/// Wall clock running `factor` times faster than real time.
class ScaledClock final : public Clock {
public:
  explicit ScaledClock(double factor = 1.0);

  double now() const override;
  void sleep_for(double seconds) override;
  double factor() const { return factor_; }

private:
  double factor_;
  std::chrono::steady_clock::time_point epoch_;
};

}  // namespace pendulum
