#include "dfab/transport.hpp"

namespace dfab {

void InProcessQueue::push(const Message& msg) {
  std::unique_lock<std::mutex> lock(mu_);
  not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
  if (closed_) throw TransportError("queue closed");
  items_.push_back(msg);
  not_empty_.notify_one();
}

Message InProcessQueue::pop() {
  std::unique_lock<std::mutex> lock(mu_);
  not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
  if (items_.empty()) throw TransportError("queue closed");
  Message msg = std::move(items_.front());
  items_.pop_front();
  not_full_.notify_one();
  return msg;
}

void InProcessQueue::close() {
  std::lock_guard<std::mutex> lock(mu_);
  closed_ = true;
  not_empty_.notify_all();
  not_full_.notify_all();
}

namespace {

class QueuePairEndpoint : public MessageEndpoint {
 public:
  QueuePairEndpoint(std::shared_ptr<InProcessQueue> out, std::shared_ptr<InProcessQueue> in)
      : out_(std::move(out)), in_(std::move(in)) {}
  void send(const Message& msg) override { out_->push(msg); }
  Message recv() override { return in_->pop(); }

 private:
  std::shared_ptr<InProcessQueue> out_, in_;
};

}  // namespace

std::unique_ptr<MessageEndpoint> InProcessChannel::coordinator_end() {
  return std::make_unique<QueuePairEndpoint>(to_worker, to_coordinator);
}

std::unique_ptr<MessageEndpoint> InProcessChannel::worker_end() {
  return std::make_unique<QueuePairEndpoint>(to_coordinator, to_worker);
}

void InProcessChannel::close() {
  to_worker->close();
  to_coordinator->close();
}

}  // namespace dfab
