#pragma once

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <stdexcept>

#include "dfab/messages.hpp"

namespace dfab {

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One direction of a coordinator<->worker link. Implementations must deliver
// in FIFO order, at most once.
class MessageEndpoint {
 public:
  virtual ~MessageEndpoint() = default;
  virtual void send(const Message& msg) = 0;
  virtual Message recv() = 0;
};

// Bounded in-process queue pair. close() wakes blocked receivers with a
// TransportError so worker threads can be torn down.
class InProcessQueue {
 public:
  explicit InProcessQueue(std::size_t capacity = 64) : capacity_(capacity) {}

  void push(const Message& msg);
  Message pop();
  void close();

 private:
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<Message> items_;
  std::size_t capacity_;
  bool closed_ = false;
};

struct InProcessChannel {
  std::shared_ptr<InProcessQueue> to_worker = std::make_shared<InProcessQueue>();
  std::shared_ptr<InProcessQueue> to_coordinator = std::make_shared<InProcessQueue>();

  std::unique_ptr<MessageEndpoint> coordinator_end();
  std::unique_ptr<MessageEndpoint> worker_end();
  void close();
};

}  // namespace dfab
