#pragma once

#include <cstdint>
#include <mutex>
#include <random>
#include <stdexcept>
#include <vector>

namespace pendulum::agents {

/// Fixed-capacity FIFO store sampled uniformly with replacement. One appender
/// and one sampler may use it concurrently. Every stored item carries the
/// sequence number it was appended with.
template <typename T>
class ReplayBuffer {
public:
  struct Entry {
    std::uint64_t seq = 0;
    T item;
  };

  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay: capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  /// Appends, evicting the oldest entry when full. Returns the sequence tag.
  std::uint64_t push(T item) {
    std::lock_guard lock(mutex_);
    const std::uint64_t seq = next_seq_++;
    if (data_.size() < capacity_) {
      data_.push_back({seq, std::move(item)});
    } else {
      data_[head_] = {seq, std::move(item)};
      head_ = (head_ + 1) % capacity_;
    }
    return seq;
  }

  /// `n` entries drawn uniformly with replacement.
  std::vector<Entry> sample(std::size_t n, std::mt19937_64& rng) const {
    std::lock_guard lock(mutex_);
    if (data_.empty()) throw std::logic_error("replay: sample from empty buffer");
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<Entry> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(data_[pick(rng)]);
    return out;
  }

  /// Contents from oldest to newest.
  std::vector<Entry> snapshot() const {
    std::lock_guard lock(mutex_);
    std::vector<Entry> out;
    out.reserve(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out.push_back(data_[(head_ + i) % data_.size()]);
    return out;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return data_.size();
  }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t pushed() const {
    std::lock_guard lock(mutex_);
    return next_seq_;
  }

private:
  mutable std::mutex mutex_;
  std::size_t capacity_;
  std::vector<Entry> data_;
  std::size_t head_ = 0;  // oldest entry once full
  std::uint64_t next_seq_ = 0;
};

}  // namespace pendulum::agents
