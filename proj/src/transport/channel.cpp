#include "pendulum/transport/channel.hpp"

#include <algorithm>
#include <stdexcept>

namespace pendulum::transport {

void ChannelFault::validate() const {
  if (!(base_latency_ms >= 0.0) || !(jitter_ms >= 0.0)) {
    throw std::invalid_argument("fault: latency and jitter must be non-negative");
  }
  if (!(drop_prob >= 0.0) || !(drop_prob < 1.0)) {
    throw std::invalid_argument("fault: drop_prob must be in [0, 1)");
  }
}

FaultyChannel::FaultyChannel(ChannelFault fault) : fault_(fault), rng_(fault.seed) {
  fault_.validate();
}

void FaultyChannel::set_fault(const ChannelFault& fault) {
  fault.validate();
  fault_ = fault;
  rng_.seed(fault.seed);
}

std::optional<double> FaultyChannel::admit(double now) {
  if (fault_.drop_prob > 0.0) {
    std::bernoulli_distribution drop(fault_.drop_prob);
    if (drop(rng_)) {
      ++dropped_;
      return std::nullopt;
    }
  }
  double delay_ms = fault_.base_latency_ms;
  if (fault_.jitter_ms > 0.0) {
    delay_ms += std::uniform_real_distribution<double>(0.0, fault_.jitter_ms)(rng_);
  }
  last_due_ = std::max(now + delay_ms / 1000.0, last_due_);
  return last_due_;
}

Mailbox::Mailbox(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

void Mailbox::push(Message msg) {
  {
    std::lock_guard lock(mutex_);
    queue_.push_back(std::move(msg));
    while (queue_.size() > capacity_) {
      queue_.pop_front();
      ++overflow_drops_;
    }
  }
  cv_.notify_one();
}

std::vector<Message> Mailbox::pop_due(double now) {
  std::vector<Message> out;
  std::lock_guard lock(mutex_);
  while (!queue_.empty() && queue_.front().received_at <= now) {
    out.push_back(std::move(queue_.front()));
    queue_.pop_front();
  }
  return out;
}

void Mailbox::notify() { cv_.notify_all(); }

std::size_t Mailbox::size() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

std::uint64_t Mailbox::overflow_drops() const {
  std::lock_guard lock(mutex_);
  return overflow_drops_;
}

}  // namespace pendulum::transport
