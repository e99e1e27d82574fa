#pragma once

#include <atomic>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "pendulum/transport/broker.hpp"
#include "pendulum/transport/frame.hpp"

namespace pendulum::transport {

inline constexpr int kDefaultPort = 1899;

class TransportError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// TCP listener speaking the frame protocol. Each connection gets a reader
/// thread (frames in, routing) and a writer thread (draining its mailbox once
/// messages are due under the configured faults).
class TcpBroker {
public:
  explicit TcpBroker(int port = kDefaultPort, std::size_t queue_capacity = 1024);
  ~TcpBroker();

  TcpBroker(const TcpBroker&) = delete;
  TcpBroker& operator=(const TcpBroker&) = delete;

  /// Binds and starts accepting. Throws TransportError (e.g. port busy).
  void start();
  void stop();

  /// Actual bound port (useful with port 0).
  int port() const { return port_; }
  Router& router() { return router_; }
  std::uint64_t framing_errors() const { return framing_errors_.load(); }
  std::size_t connection_count() const;

private:
  struct Connection;

  void accept_loop();
  void serve(const std::shared_ptr<Connection>& conn);
  void write_loop(const std::shared_ptr<Connection>& conn);
  double now() const;

  int port_;
  int listen_fd_ = -1;
  Router router_;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> framing_errors_{0};
  std::thread accept_thread_;
  mutable std::mutex conns_mutex_;
  std::list<std::shared_ptr<Connection>> conns_;
  std::chrono::steady_clock::time_point epoch_;
};

/// Client session over TCP. `now` stamps received messages.
class TcpSession final : public Session {
public:
  using NowFn = std::function<double()>;

  TcpSession(const std::string& host, int port, const std::string& client_id, NowFn now);
  ~TcpSession() override;

  void subscribe(const std::string& topic) override;
  void publish(const std::string& topic, std::string payload) override;
  std::vector<Message> poll() override;
  bool connected() const override { return connected_.load(); }

  void close();

private:
  void send_frame(const Frame& frame);
  void read_loop();

  int fd_ = -1;
  NowFn now_;
  std::atomic<bool> connected_{false};
  std::mutex write_mutex_;
  std::mutex inbox_mutex_;
  std::vector<Message> inbox_;
  std::uint64_t seq_ = 0;
  std::thread reader_;
};

/// "host:port" with the default port when omitted.
std::pair<std::string, int> parse_endpoint(const std::string& endpoint);

}  // namespace pendulum::transport
