#include "pendulum/transport/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

namespace pendulum::transport {

namespace {

bool write_all(int fd, const std::vector<std::uint8_t>& bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

struct TcpBroker::Connection {
  int fd = -1;
  std::shared_ptr<Subscriber> sub;
  std::atomic<bool> open{true};
  std::thread reader;
  std::thread writer;
};

TcpBroker::TcpBroker(int port, std::size_t queue_capacity)
    : port_(port), router_(queue_capacity), epoch_(std::chrono::steady_clock::now()) {}

TcpBroker::~TcpBroker() { stop(); }

double TcpBroker::now() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
}

void TcpBroker::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(static_cast<std::uint16_t>(port_));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    const std::string reason = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw TransportError("bind port " + std::to_string(port_) + ": " + reason);
  }
  if (::listen(listen_fd_, 16) < 0) {
    throw TransportError(std::string("listen: ") + std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void TcpBroker::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (accept_thread_.joinable()) accept_thread_.join();
  std::list<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(conns_mutex_);
    conns.swap(conns_);
  }
  for (auto& c : conns) {
    c->open = false;
    ::shutdown(c->fd, SHUT_RDWR);
    if (c->sub) c->sub->mailbox.notify();
  }
  for (auto& c : conns) {
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
    ::close(c->fd);
  }
}

std::size_t TcpBroker::connection_count() const {
  std::lock_guard lock(conns_mutex_);
  std::size_t n = 0;
  for (const auto& c : conns_) n += c->open ? 1 : 0;
  return n;
}

void TcpBroker::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    set_nodelay(fd);
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    std::lock_guard lock(conns_mutex_);
    // Reap closed connections.
    for (auto it = conns_.begin(); it != conns_.end();) {
      if (!(*it)->open && (*it)->reader.joinable()) {
        (*it)->reader.join();
        if ((*it)->writer.joinable()) (*it)->writer.join();
        ::close((*it)->fd);
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
    conns_.push_back(conn);
    conn->reader = std::thread([this, conn] { serve(conn); });
  }
}

void TcpBroker::serve(const std::shared_ptr<Connection>& conn) {
  FrameReader reader;
  std::array<std::uint8_t, 4096> buf{};
  try {
    while (conn->open) {
      const ssize_t n = ::recv(conn->fd, buf.data(), buf.size(), 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      reader.feed(std::span(buf.data(), static_cast<std::size_t>(n)));
      while (auto frame = reader.next()) {
        switch (frame->kind) {
          case FrameKind::Connect:
            if (!conn->sub) {
              conn->sub = router_.attach(frame->topic);
              conn->writer = std::thread([this, conn] { write_loop(conn); });
            }
            break;
          case FrameKind::Subscribe:
            if (!conn->sub) throw FramingError("SUBSCRIBE before CONNECT");
            router_.subscribe(conn->sub, frame->topic);
            break;
          case FrameKind::Publish:
            if (!conn->sub) throw FramingError("PUBLISH before CONNECT");
            router_.route(*conn->sub, frame->topic, frame->payload, now());
            break;
        }
      }
    }
  } catch (const FramingError&) {
    ++framing_errors_;
  }
  conn->open = false;
  ::shutdown(conn->fd, SHUT_RDWR);
  if (conn->sub) router_.detach(conn->sub);
}

void TcpBroker::write_loop(const std::shared_ptr<Connection>& conn) {
  auto stop = [&] { return !conn->open.load() || !running_.load(); };
  while (auto msg = conn->sub->mailbox.wait_pop([this] { return now(); }, stop)) {
    const auto bytes = encode_frame({FrameKind::Publish, msg->topic, msg->payload});
    if (!write_all(conn->fd, bytes)) break;
  }
  conn->open = false;
  ::shutdown(conn->fd, SHUT_RDWR);
}

TcpSession::TcpSession(const std::string& host, int port, const std::string& client_id,
                       NowFn now)
    : now_(std::move(now)) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  const std::string port_str = std::to_string(port);
  if (::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &result) != 0 || !result) {
    throw TransportError("cannot resolve " + host);
  }
  fd_ = ::socket(result->ai_family, result->ai_socktype, result->ai_protocol);
  const int rc = fd_ < 0 ? -1 : ::connect(fd_, result->ai_addr, result->ai_addrlen);
  ::freeaddrinfo(result);
  if (rc < 0) {
    if (fd_ >= 0) ::close(fd_);
    throw TransportError("cannot connect to " + host + ":" + port_str);
  }
  set_nodelay(fd_);
  connected_ = true;
  send_frame({FrameKind::Connect, client_id, {}});
  reader_ = std::thread([this] { read_loop(); });
}

TcpSession::~TcpSession() { close(); }

void TcpSession::close() {
  if (fd_ < 0) return;
  connected_ = false;
  ::shutdown(fd_, SHUT_RDWR);
  if (reader_.joinable()) reader_.join();
  ::close(fd_);
  fd_ = -1;
}

void TcpSession::send_frame(const Frame& frame) {
  const auto bytes = encode_frame(frame);
  std::lock_guard lock(write_mutex_);
  if (!connected_ || !write_all(fd_, bytes)) {
    connected_ = false;
    throw TransportError("connection closed");
  }
}

void TcpSession::subscribe(const std::string& topic) {
  send_frame({FrameKind::Subscribe, topic, {}});
}

void TcpSession::publish(const std::string& topic, std::string payload) {
  send_frame({FrameKind::Publish, topic, std::move(payload)});
}

std::vector<Message> TcpSession::poll() {
  std::lock_guard lock(inbox_mutex_);
  std::vector<Message> out;
  out.swap(inbox_);
  return out;
}

void TcpSession::read_loop() {
  FrameReader reader;
  std::array<std::uint8_t, 4096> buf{};
  try {
    while (connected_) {
      const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      reader.feed(std::span(buf.data(), static_cast<std::size_t>(n)));
      while (auto frame = reader.next()) {
        if (frame->kind != FrameKind::Publish) continue;
        const double t = now_();
        std::lock_guard lock(inbox_mutex_);
        inbox_.push_back(Message{std::move(frame->topic), std::move(frame->payload), t, t, ++seq_});
      }
    }
  } catch (const FramingError&) {
  }
  connected_ = false;
}

std::pair<std::string, int> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) return {endpoint, kDefaultPort};
  const std::string host = endpoint.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(endpoint.substr(colon + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad endpoint '" + endpoint + "'");
  }
  if (port <= 0 || port > 65535) throw std::invalid_argument("bad port in '" + endpoint + "'");
  return {host.empty() ? "127.0.0.1" : host, port};
}

}  // namespace pendulum::transport
