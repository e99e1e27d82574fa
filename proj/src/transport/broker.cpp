#include "pendulum/transport/broker.hpp"

#include <algorithm>

namespace pendulum::transport {

Router::Router(std::size_t queue_capacity) : capacity_(queue_capacity) {}

std::shared_ptr<Subscriber> Router::attach(const std::string& client_id) {
  std::lock_guard lock(mutex_);
  auto fault_for = [&](Direction dir, const ChannelFault& fallback) {
    const auto it = faults_.find({client_id, dir});
    return it != faults_.end() ? it->second : fallback;
  };
  auto sub = std::make_shared<Subscriber>(client_id, capacity_,
                                          fault_for(Direction::Downlink, default_down_),
                                          fault_for(Direction::Uplink, default_up_));
  sessions_.push_back(sub);
  return sub;
}

void Router::detach(const std::shared_ptr<Subscriber>& sub) {
  std::lock_guard lock(mutex_);
  for (auto it = routes_.begin(); it != routes_.end();) {
    auto& subs = it->second;
    subs.erase(std::remove(subs.begin(), subs.end(), sub), subs.end());
    it = subs.empty() ? routes_.erase(it) : std::next(it);
  }
  sessions_.erase(std::remove(sessions_.begin(), sessions_.end(), sub), sessions_.end());
  sub->mailbox.notify();
}

void Router::subscribe(const std::shared_ptr<Subscriber>& sub, const std::string& topic) {
  std::lock_guard lock(mutex_);
  auto& subs = routes_[topic];
  if (std::find(subs.begin(), subs.end(), sub) == subs.end()) subs.push_back(sub);
}

std::size_t Router::route(Subscriber& from, const std::string& topic,
                          const std::string& payload, double now) {
  std::lock_guard lock(mutex_);
  ++stats_.published;
  const auto arrived = from.uplink.admit(now);
  if (!arrived) {
    ++stats_.fault_drops;
    return 0;
  }
  const auto it = routes_.find(topic);
  if (it == routes_.end()) return 0;
  const std::uint64_t seq = ++seq_;
  std::size_t delivered = 0;
  for (const auto& sub : it->second) {
    const auto due = sub->downlink.admit(*arrived);
    if (!due) {
      ++stats_.fault_drops;
      continue;
    }
    sub->mailbox.push(Message{topic, payload, now, *due, seq});
    ++delivered;
  }
  stats_.delivered += delivered;
  return delivered;
}

void Router::set_fault(const std::string& client_id, Direction dir, const ChannelFault& fault) {
  fault.validate();
  std::lock_guard lock(mutex_);
  faults_[{client_id, dir}] = fault;
  for (const auto& sub : sessions_) {
    if (sub->client_id != client_id) continue;
    (dir == Direction::Downlink ? sub->downlink : sub->uplink).set_fault(fault);
  }
}

void Router::set_default_fault(Direction dir, const ChannelFault& fault) {
  fault.validate();
  std::lock_guard lock(mutex_);
  (dir == Direction::Downlink ? default_down_ : default_up_) = fault;
}

BrokerStats Router::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

std::vector<std::string> Router::topics() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [topic, subs] : routes_) out.push_back(topic);
  return out;
}

std::size_t Router::subscriber_count(const std::string& topic) const {
  std::lock_guard lock(mutex_);
  const auto it = routes_.find(topic);
  return it == routes_.end() ? 0 : it->second.size();
}

namespace {

class LoopbackSession final : public Session {
public:
  LoopbackSession(std::shared_ptr<Router> router, std::shared_ptr<Subscriber> sub,
                  LoopbackBroker::NowFn now)
      : router_(std::move(router)), sub_(std::move(sub)), now_(std::move(now)) {}

  ~LoopbackSession() override { router_->detach(sub_); }

  void subscribe(const std::string& topic) override { router_->subscribe(sub_, topic); }

  void publish(const std::string& topic, std::string payload) override {
    router_->route(*sub_, topic, payload, now_());
  }

  std::vector<Message> poll() override { return sub_->mailbox.pop_due(now_()); }

  bool connected() const override { return true; }

private:
  std::shared_ptr<Router> router_;
  std::shared_ptr<Subscriber> sub_;
  LoopbackBroker::NowFn now_;
};

}  // namespace

LoopbackBroker::LoopbackBroker(NowFn now, std::size_t queue_capacity)
    : now_(std::move(now)), router_(std::make_shared<Router>(queue_capacity)) {}

std::unique_ptr<Session> LoopbackBroker::connect(const std::string& client_id) {
  return std::make_unique<LoopbackSession>(router_, router_->attach(client_id), now_);
}

void LoopbackBroker::inject_fault(const std::string& client_id, Direction dir,
                                  const ChannelFault& fault) {
  router_->set_fault(client_id, dir, fault);
}

}  // namespace pendulum::transport
