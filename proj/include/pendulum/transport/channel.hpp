#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace pendulum::transport {

/// Latency, jitter and loss applied to one direction of one session.
struct ChannelFault {
  double base_latency_ms = 0.0;
  double jitter_ms = 0.0;  // uniform additive in [0, jitter_ms]
  double drop_prob = 0.0;  // in [0, 1)
  std::uint64_t seed = 0;

  void validate() const;
  bool active() const { return base_latency_ms > 0.0 || jitter_ms > 0.0 || drop_prob > 0.0; }
};

/// Applies a ChannelFault to a stream of messages. Delivery times are kept
/// monotone so that delivered messages stay in send order.
class FaultyChannel {
public:
  explicit FaultyChannel(ChannelFault fault = {});

  /// Delivery time for a message sent at `now` (seconds), or nullopt if the
  /// message is dropped.
  std::optional<double> admit(double now);

  void set_fault(const ChannelFault& fault);
  const ChannelFault& fault() const { return fault_; }
  std::uint64_t dropped() const { return dropped_; }

private:
  ChannelFault fault_;
  std::mt19937_64 rng_;
  double last_due_ = -1e300;
  std::uint64_t dropped_ = 0;
};

struct Message {
  std::string topic;
  std::string payload;
  double sent_at = 0.0;
  double received_at = 0.0;  // delivery time on the receiver's clock
  std::uint64_t seq = 0;
};

/// Bounded per-subscriber queue. On overflow the oldest message is dropped
/// and counted; a publisher never blocks on a slow subscriber.
class Mailbox {
public:
  explicit Mailbox(std::size_t capacity = 1024);

  void push(Message msg);
  /// Messages whose delivery time is <= now, in order.
  std::vector<Message> pop_due(double now);
  /// Blocks until the head message is due (per `now_fn`) or `stop` is set.
  template <typename NowFn, typename Stop>
  std::optional<Message> wait_pop(NowFn now_fn, const Stop& stop);
  void notify();

  std::size_t size() const;
  std::uint64_t overflow_drops() const;

private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Message> queue_;
  std::size_t capacity_;
  std::uint64_t overflow_drops_ = 0;
};

/// Client view of the pub/sub bus. Loopback and TCP sessions share it.
class Session {
public:
  virtual ~Session() = default;
  virtual void subscribe(const std::string& topic) = 0;
  virtual void publish(const std::string& topic, std::string payload) = 0;
  /// Delivered messages since the last poll, in delivery order.
  virtual std::vector<Message> poll() = 0;
  virtual bool connected() const = 0;
};

template <typename NowFn, typename Stop>
std::optional<Message> Mailbox::wait_pop(NowFn now_fn, const Stop& stop) {
  std::unique_lock lock(mutex_);
  while (!stop()) {
    if (queue_.empty()) {
      cv_.wait_for(lock, std::chrono::milliseconds(50));
      continue;
    }
    const double wait_s = queue_.front().received_at - now_fn();
    if (wait_s <= 0.0) {
      Message msg = std::move(queue_.front());
      queue_.pop_front();
      return msg;
    }
    cv_.wait_for(lock, std::chrono::duration<double>(std::min(wait_s, 0.05)));
  }
  return std::nullopt;
}

}  // namespace pendulum::transport
