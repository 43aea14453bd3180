#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dfab/transport.hpp"

namespace dfab {

// Fixed-size connection handshake exchanged before any Message: the worker
// announces itself, the coordinator assigns an index and the run shape.
struct WorkerHello {
  std::int32_t worker_index = 0;
  std::int32_t worker_count = 1;
  std::int32_t expert_count = 0;
  std::int32_t gate_count = 0;
  std::int32_t dims = 0;
  std::int32_t t_max = 0;
  std::int32_t task = 0;
  std::int32_t checkpoint_interval = 0;
  std::int32_t resume_iteration = -1;  // >=0: load the Q snapshot before serving
  std::int32_t foba_max_features = 0;
  std::uint64_t init_seed = 0;
};

class SocketEndpoint : public MessageEndpoint {
 public:
  explicit SocketEndpoint(int fd);
  ~SocketEndpoint() override;
  SocketEndpoint(const SocketEndpoint&) = delete;
  SocketEndpoint& operator=(const SocketEndpoint&) = delete;

  void send(const Message& msg) override;
  Message recv() override;

  void send_hello(const WorkerHello& hello);
  WorkerHello recv_hello();

 private:
  int fd_;
};

// Coordinator side: listen and accept `count` workers in connection order.
class SocketListener {
 public:
  explicit SocketListener(std::uint16_t port);
  ~SocketListener();
  std::unique_ptr<SocketEndpoint> accept_one();
  std::uint16_t port() const { return port_; }

 private:
  int fd_;
  std::uint16_t port_;
};

// Worker side: connect to host:port.
std::unique_ptr<SocketEndpoint> socket_connect(const std::string& host, std::uint16_t port);

}  // namespace dfab
