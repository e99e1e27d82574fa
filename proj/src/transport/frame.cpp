#include "pendulum/transport/frame.hpp"

namespace pendulum::transport {

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  if (frame.topic.size() > 0xFFFF) {
    throw FramingError("topic longer than 65535 bytes");
  }
  if ((frame.kind == FrameKind::Subscribe || frame.kind == FrameKind::Publish) &&
      frame.topic.empty()) {
    throw FramingError("SUBSCRIBE/PUBLISH require a topic");
  }
  const std::size_t length = 1 + 2 + frame.topic.size() + frame.payload.size();
  if (length > kMaxFrameLength) {
    throw FramingError("frame exceeds maximum length");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + length);
  out.push_back(static_cast<std::uint8_t>(length >> 24));
  out.push_back(static_cast<std::uint8_t>(length >> 16));
  out.push_back(static_cast<std::uint8_t>(length >> 8));
  out.push_back(static_cast<std::uint8_t>(length));
  out.push_back(static_cast<std::uint8_t>(frame.kind));
  out.push_back(static_cast<std::uint8_t>(frame.topic.size() >> 8));
  out.push_back(static_cast<std::uint8_t>(frame.topic.size()));
  out.insert(out.end(), frame.topic.begin(), frame.topic.end());
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

std::optional<Decoded> decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) return std::nullopt;
  const std::uint32_t length = (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
                               (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
  if (length < 3) throw FramingError("declared length shorter than frame header");
  if (length > kMaxFrameLength) throw FramingError("declared length exceeds maximum");
  if (bytes.size() < kHeaderBytes + length) return std::nullopt;

  const auto body = bytes.subspan(kHeaderBytes, length);
  const std::uint8_t kind = body[0];
  if (kind < 0x01 || kind > 0x03) throw FramingError("unknown frame kind");
  const std::size_t topic_len = (std::size_t{body[1]} << 8) | std::size_t{body[2]};
  if (topic_len > length - 3) throw FramingError("topic length exceeds frame length");

  Decoded out;
  out.frame.kind = static_cast<FrameKind>(kind);
  out.frame.topic.assign(body.begin() + 3, body.begin() + 3 + static_cast<std::ptrdiff_t>(topic_len));
  out.frame.payload.assign(body.begin() + 3 + static_cast<std::ptrdiff_t>(topic_len), body.end());
  if (out.frame.kind != FrameKind::Connect && out.frame.topic.empty()) {
    throw FramingError("SUBSCRIBE/PUBLISH frame without topic");
  }
  out.consumed = kHeaderBytes + length;
  return out;
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  if (offset_ > 0 && offset_ == buffer_.size()) {
    buffer_.clear();
    offset_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Frame> FrameReader::next() {
  auto decoded = decode_frame(std::span(buffer_).subspan(offset_));
  if (!decoded) {
    if (offset_ > 4096) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
      offset_ = 0;
    }
    return std::nullopt;
  }
  offset_ += decoded->consumed;
  return std::move(decoded->frame);
}

std::string observations_topic(int device_id) {
  return "pendulum/" + std::to_string(device_id) + "/observations";
}

std::string actions_topic(int device_id) {
  return "pendulum/" + std::to_string(device_id) + "/actions";
}

}  // namespace pendulum::transport
