#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pendulum::transport {

class FramingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class FrameKind : std::uint8_t { Connect = 0x01, Subscribe = 0x02, Publish = 0x03 };

/// Wire unit:
///   u32 BE length | u8 kind | u16 BE topic_len | topic | payload
/// where length = 1 + 2 + |topic| + |payload|.
struct Frame {
  FrameKind kind = FrameKind::Publish;
  std::string topic;
  std::string payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

inline constexpr std::size_t kHeaderBytes = 4;
inline constexpr std::uint32_t kMaxFrameLength = 1u << 20;

std::vector<std::uint8_t> encode_frame(const Frame& frame);

struct Decoded {
  Frame frame;
  std::size_t consumed = 0;
};

/// Decodes one frame from the front of `bytes`. Returns nullopt when more
/// bytes are needed; throws FramingError on a malformed frame.
std::optional<Decoded> decode_frame(std::span<const std::uint8_t> bytes);

/// Incremental decoder over a byte stream.
class FrameReader {
public:
  void feed(std::span<const std::uint8_t> bytes);
  /// Next complete frame, if any. Throws FramingError.
  std::optional<Frame> next();
  std::size_t buffered() const { return buffer_.size() - offset_; }

private:
  std::vector<std::uint8_t> buffer_;
  std::size_t offset_ = 0;
};

std::string observations_topic(int device_id);
std::string actions_topic(int device_id);

}  // namespace pendulum::transport
