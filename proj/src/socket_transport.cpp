#include "dfab/socket_transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace dfab {

namespace {

void write_all(int fd, const void* data, std::size_t size) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  while (size > 0) {
    const ssize_t n = ::send(fd, p, size, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("send failed: ") + std::strerror(errno));
    }
    p += n;
    size -= static_cast<std::size_t>(n);
  }
}

void read_all(int fd, void* data, std::size_t size) {
  auto* p = static_cast<std::uint8_t*>(data);
  while (size > 0) {
    const ssize_t n = ::recv(fd, p, size, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("recv failed: ") + std::strerror(errno));
    }
    if (n == 0) throw TransportError("peer closed connection");
    p += n;
    size -= static_cast<std::size_t>(n);
  }
}

}  // namespace

SocketEndpoint::SocketEndpoint(int fd) : fd_(fd) {
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

SocketEndpoint::~SocketEndpoint() {
  if (fd_ >= 0) ::close(fd_);
}

void SocketEndpoint::send(const Message& msg) {
  const auto frame = encode_frame(msg);
  write_all(fd_, frame.data(), frame.size());
}

Message SocketEndpoint::recv() {
  std::uint8_t header[kFrameHeaderBytes];
  read_all(fd_, header, sizeof(header));
  std::uint32_t payload_bytes = 0;
  std::memcpy(&payload_bytes, header, 4);
  std::vector<std::uint8_t> frame(kFrameHeaderBytes + payload_bytes);
  std::memcpy(frame.data(), header, sizeof(header));
  if (payload_bytes > 0) read_all(fd_, frame.data() + kFrameHeaderBytes, payload_bytes);
  return decode_frame(frame.data(), frame.size());
}

void SocketEndpoint::send_hello(const WorkerHello& hello) {
  write_all(fd_, &hello, sizeof(hello));
}

WorkerHello SocketEndpoint::recv_hello() {
  WorkerHello hello;
  read_all(fd_, &hello, sizeof(hello));
  return hello;
}

SocketListener::SocketListener(std::uint16_t port) : fd_(-1), port_(port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError("cannot create socket");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw TransportError("cannot bind port " + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  if (::listen(fd_, 64) != 0) {
    ::close(fd_);
    throw TransportError("cannot listen");
  }
}

SocketListener::~SocketListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<SocketEndpoint> SocketListener::accept_one() {
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw TransportError(std::string("accept failed: ") + std::strerror(errno));
  return std::make_unique<SocketEndpoint>(fd);
}

std::unique_ptr<SocketEndpoint> socket_connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw TransportError("cannot resolve " + host);
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw TransportError("cannot create socket");
  }
  if (::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    ::freeaddrinfo(res);
    ::close(fd);
    throw TransportError("cannot connect to " + host + ":" + std::to_string(port));
  }
  ::freeaddrinfo(res);
  return std::make_unique<SocketEndpoint>(fd);
}

}  // namespace dfab
