#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "fleetledger/codec.hpp"
#include "fleetledger/gateway.hpp"

namespace fleetledger::gateway {

namespace {

constexpr std::string_view kHelloContext = "fleetledger/gateway/hello/v1";

[[noreturn]] void down(const std::string& what) {
  throw Error(ErrorCode::network_down, what + ": " + std::strerror(errno));
}

bool valid_kind(std::uint8_t k) { return (k >= 1 && k <= 12) || (k >= 64 && k <= 67); }

}  // namespace

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::hello: return "hello";
    case Kind::channel: return "channel";
    case Kind::chaincode: return "chaincode";
    case Kind::endorse: return "endorse";
    case Kind::submit: return "submit";
    case Kind::query: return "query";
    case Kind::events_subscribe: return "events_subscribe";
    case Kind::deliver_from: return "deliver_from";
    case Kind::topic_subscribe: return "topic_subscribe";
    case Kind::admin_create_channel: return "admin_create_channel";
    case Kind::admin_approve: return "admin_approve";
    case Kind::admin_commit: return "admin_commit";
    case Kind::response: return "response";
    case Kind::commit_event: return "commit_event";
    case Kind::block: return "block";
    case Kind::topic_message: return "topic_message";
  }
  return "unknown";
}

Bytes encode_frame(const Frame& frame) {
  Encoder e;
  e.raw_u8(static_cast<std::uint8_t>(frame.kind)).u64(frame.id).bytes(frame.body);
  Bytes out;
  put_u32_be(out, static_cast<std::uint32_t>(e.size()));
  out.insert(out.end(), e.data().begin(), e.data().end());
  return out;
}

Frame decode_frame(ByteView payload) {
  Decoder d(payload);
  Frame f;
  const auto kind = d.raw_u8();
  if (!valid_kind(kind)) throw Error(ErrorCode::decode_error, "unknown frame kind " + std::to_string(kind));
  f.kind = static_cast<Kind>(kind);
  f.id = d.u64();
  f.body = d.bytes();
  d.expect_done();
  return f;
}

Bytes Response::serialize() const {
  Encoder e;
  e.boolean(ok).u64(code ? static_cast<std::uint64_t>(*code) + 1 : 0).str(error).bytes(payload);
  return std::move(e).take();
}

Response Response::deserialize(ByteView bytes) {
  Decoder d(bytes);
  Response r;
  r.ok = d.boolean();
  const auto code = d.u64();
  if (code > static_cast<std::uint64_t>(ErrorCode::network_down) + 1) throw Error(ErrorCode::decode_error, "bad error code");
  if (code) r.code = static_cast<ErrorCode>(code - 1);
  r.error = d.str();
  r.payload = d.bytes();
  d.expect_done();
  return r;
}

Response Response::failure(ErrorCode code, std::string error) {
  Response r;
  r.ok = false;
  r.code = code;
  r.error = std::move(error);
  return r;
}

Bytes hello_payload(ByteView nonce) {
  Encoder e;
  e.str(kHelloContext).bytes(nonce);
  return std::move(e).take();
}

Socket::~Socket() {
  if (fd_ >= 0) ::close(fd_);
}

Socket::Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

Socket Socket::connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const auto service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw Error(ErrorCode::network_down, "cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) down("cannot connect to " + host + ":" + service);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return Socket(fd);
}

void Socket::send(const Frame& frame) {
  const auto bytes = encode_frame(frame);
  std::lock_guard lock(send_mu_);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      down("send failed");
    }
    off += static_cast<std::size_t>(n);
  }
}

namespace {

// False on orderly close before the first byte.
bool read_exact(int fd, std::uint8_t* out, std::size_t len) {
  std::size_t off = 0;
  while (off < len) {
    const auto n = ::recv(fd, out + off, len - off, 0);
    if (n == 0) {
      if (off == 0) return false;
      throw Error(ErrorCode::network_down, "connection closed mid-frame");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      down("receive failed");
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

std::optional<Frame> Socket::receive(std::uint32_t max_frame) {
  std::uint8_t header[4];
  if (!read_exact(fd_, header, 4)) return std::nullopt;
  const auto len = get_u32_be(header);
  if (len > max_frame) {
    throw Error(ErrorCode::protocol_error,
                "frame of " + std::to_string(len) + " bytes exceeds limit " + std::to_string(max_frame));
  }
  Bytes payload(len);
  if (len > 0 && !read_exact(fd_, payload.data(), len)) {
    throw Error(ErrorCode::network_down, "connection closed mid-frame");
  }
  try {
    return decode_frame(payload);
  } catch (const Error& e) {
    throw Error(ErrorCode::protocol_error, e.what());
  }
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Listener::Listener(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) down("socket");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw Error(ErrorCode::invalid_argument, "bind address must be an IPv4 literal: " + host);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 64) != 0) {
    const int saved = errno;
    ::close(fd_);
    errno = saved;
    down("cannot listen on " + host + ":" + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
  close();
  if (fd_ >= 0) ::close(fd_);
}

std::optional<Socket> Listener::accept() {
  while (!closed_) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return Socket(fd);
    }
    if (errno != EINTR && errno != ECONNABORTED) break;
  }
  return std::nullopt;
}

void Listener::close() {
  if (!closed_.exchange(true) && fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

}  // namespace fleetledger::gateway
