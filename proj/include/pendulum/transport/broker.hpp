#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "pendulum/transport/channel.hpp"

namespace pendulum::transport {

enum class Direction { Uplink, Downlink };  // client -> broker, broker -> client

struct BrokerStats {
  std::uint64_t published = 0;
  std::uint64_t delivered = 0;  // enqueued for a subscriber
  std::uint64_t fault_drops = 0;
};

/// A connected client as seen by the router.
struct Subscriber {
  Subscriber(std::string id, std::size_t capacity, ChannelFault down, ChannelFault up)
      : client_id(std::move(id)), mailbox(capacity), downlink(down), uplink(up) {}

  std::string client_id;
  Mailbox mailbox;
  FaultyChannel downlink;  // guarded by the router mutex
  FaultyChannel uplink;    // guarded by the router mutex
};

/// Exact-topic routing table shared by the loopback and TCP brokers.
class Router {
public:
  explicit Router(std::size_t queue_capacity = 1024);

  std::shared_ptr<Subscriber> attach(const std::string& client_id);
  void detach(const std::shared_ptr<Subscriber>& sub);
  void subscribe(const std::shared_ptr<Subscriber>& sub, const std::string& topic);

  /// Applies the publisher's uplink fault, then fans out to every subscriber
  /// of `topic` through its downlink fault. Returns the number of enqueued
  /// deliveries.
  std::size_t route(Subscriber& from, const std::string& topic, const std::string& payload,
                    double now);

  /// Sets the fault for `client_id` (now and on future connects).
  void set_fault(const std::string& client_id, Direction dir, const ChannelFault& fault);
  void set_default_fault(Direction dir, const ChannelFault& fault);

  BrokerStats stats() const;
  std::vector<std::string> topics() const;
  std::size_t subscriber_count(const std::string& topic) const;

private:
  mutable std::mutex mutex_;
  std::size_t capacity_;
  std::map<std::string, std::vector<std::shared_ptr<Subscriber>>> routes_;
  std::vector<std::shared_ptr<Subscriber>> sessions_;
  std::map<std::pair<std::string, Direction>, ChannelFault> faults_;
  ChannelFault default_down_;
  ChannelFault default_up_;
  std::uint64_t seq_ = 0;
  BrokerStats stats_;
};

/// In-process broker; time comes from the supplied clock function.
class LoopbackBroker {
public:
  using NowFn = std::function<double()>;

  explicit LoopbackBroker(NowFn now, std::size_t queue_capacity = 1024);

  std::unique_ptr<Session> connect(const std::string& client_id);
  void inject_fault(const std::string& client_id, Direction dir, const ChannelFault& fault);

  Router& router() { return *router_; }
  const Router& router() const { return *router_; }

private:
  NowFn now_;
  std::shared_ptr<Router> router_;
};

}  // namespace pendulum::transport
