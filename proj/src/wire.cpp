#include "faceattack/wire.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <ctime>

#include "faceattack/errors.hpp"
#include "json.hpp"

namespace faceattack {

using nlohmann::json;

namespace {

constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t(bytes[i]) << 16) | (std::uint32_t(bytes[i + 1]) << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = std::uint32_t(bytes[i]) << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (std::uint32_t(bytes[i]) << 16) | (std::uint32_t(bytes[i + 1]) << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw InvalidArgument("base64 length is not a multiple of 4");
  }
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    std::array<int, 4> d{};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && last && k >= 2) {
        d[k] = 0;
        ++pad;
        continue;
      }
      if (pad > 0 || (d[k] = decode_char(c)) < 0) {
        throw InvalidArgument("invalid base64 character at offset " + std::to_string(i + k));
      }
    }
    const std::uint32_t v = (std::uint32_t(d[0]) << 18) | (std::uint32_t(d[1]) << 12) | (std::uint32_t(d[2]) << 6) |
                            std::uint32_t(d[3]);
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

namespace {

json parse_object(std::string_view line) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ProtocolError("line", "not a JSON object");
  }
  return j;
}

const json& require(const json& j, const char* field) {
  const auto it = j.find(field);
  if (it == j.end()) {
    throw ProtocolError(field, "missing");
  }
  return *it;
}

std::int64_t require_int(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_number_integer()) {
    throw ProtocolError(field, "expected an integer");
  }
  return v.get<std::int64_t>();
}

std::size_t require_positive(const json& j, const char* field) {
  const auto v = require_int(j, field);
  if (v <= 0) {
    throw ProtocolError(field, "must be positive, got " + std::to_string(v));
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

std::string encode_handshake(const Handshake& h) {
  json j = json::object();
  j["proto"] = h.proto;
  j["classes"] = h.classes;
  j["width"] = h.width;
  j["height"] = h.height;
  j["names"] = h.names;
  return j.dump();
}

std::string encode_request(std::int64_t id, const GrayscaleImage& image) {
  json j = json::object();
  j["id"] = id;
  j["pixels"] = base64_encode(image.pixels());
  return j.dump();
}

std::string encode_response(std::int64_t id, const ClassProbabilities& probs) {
  json j = json::object();
  j["id"] = id;
  j["probs"] = probs.values();
  return j.dump();
}

std::string encode_error(std::int64_t id, std::string_view message) {
  json j = json::object();
  j["id"] = id;
  j["error"] = std::string(message);
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

Handshake parse_handshake(std::string_view line) {
  const json j = parse_object(line);
  const json& proto = require(j, "proto");
  if (!proto.is_string()) {
    throw ProtocolError("proto", "expected a string");
  }
  if (proto.get<std::string>() != kProtocolVersion) {
    throw VersionMismatch(proto.get<std::string>());
  }
  Handshake h;
  h.classes = require_positive(j, "classes");
  h.width = require_positive(j, "width");
  h.height = require_positive(j, "height");
  const json& names = require(j, "names");
  if (!names.is_array()) {
    throw ProtocolError("names", "expected an array");
  }
  for (const auto& n : names) {
    if (!n.is_string()) {
      throw ProtocolError("names", "expected strings");
    }
    h.names.push_back(n.get<std::string>());
  }
  if (h.names.size() != h.classes) {
    throw ProtocolError("names", std::to_string(h.names.size()) + " names for " + std::to_string(h.classes) +
                                     " classes");
  }
  return h;
}

Request parse_request(std::string_view line) {
  const json j = parse_object(line);
  Request r;
  r.id = require_int(j, "id");
  const json& pixels = require(j, "pixels");
  if (!pixels.is_string()) {
    throw ProtocolError("pixels", "expected a base64 string");
  }
  try {
    r.pixels = base64_decode(pixels.get_ref<const std::string&>());
  } catch (const InvalidArgument& e) {
    throw ProtocolError("pixels", e.what());
  }
  return r;
}

Response parse_response(std::string_view line) {
  const json j = parse_object(line);
  Response r;
  r.id = require_int(j, "id");
  if (const auto it = j.find("error"); it != j.end()) {
    if (!it->is_string()) {
      throw ProtocolError("error", "expected a string");
    }
    r.error = it->get<std::string>();
    return r;
  }
  const json& probs = require(j, "probs");
  if (!probs.is_array()) {
    throw ProtocolError("probs", "expected an array");
  }
  for (const auto& p : probs) {
    if (!p.is_number()) {
      throw ProtocolError("probs", "expected numbers");
    }
    r.probs.push_back(p.get<double>());
  }
  return r;
}

namespace {

// Writes without raising SIGPIPE in the calling thread if the peer is gone.
bool write_all(int fd, std::string_view data) {
  sigset_t block, old;
  sigemptyset(&block);
  sigaddset(&block, SIGPIPE);
  pthread_sigmask(SIG_BLOCK, &block, &old);
  bool ok = true;
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      ok = false;
      break;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  if (!ok && errno == EPIPE) {
    const timespec zero{0, 0};
    sigset_t pending;
    sigpending(&pending);
    if (sigismember(&pending, SIGPIPE)) {
      sigtimedwait(&block, nullptr, &zero);
    }
  }
  pthread_sigmask(SIG_SETMASK, &old, nullptr);
  return ok;
}

}  // namespace

FdChannel::FdChannel(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}

FdChannel::~FdChannel() {
  if (write_fd_ >= 0 && write_fd_ != read_fd_) {
    ::close(write_fd_);
  }
  if (read_fd_ >= 0) {
    ::close(read_fd_);
  }
}

std::optional<std::string> FdChannel::read_line() {
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    if (eof_) {
      if (buffer_.empty()) {
        return std::nullopt;
      }
      return std::exchange(buffer_, {});
    }
    char chunk[4096];
    const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == ECONNRESET) {
        eof_ = true;
        continue;
      }
      throw TransportError(std::string("read failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      eof_ = true;
    } else {
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }
}

void FdChannel::write_line(std::string_view line) {
  std::string data(line);
  data += '\n';
  if (write_fd_ < 0 || !write_all(write_fd_, data)) {
    throw TransportError(std::string("write failed: ") + std::strerror(errno));
  }
}

void FdChannel::close_write() {
  if (write_fd_ < 0) {
    return;
  }
  if (write_fd_ == read_fd_) {
    ::shutdown(write_fd_, SHUT_WR);
  } else {
    ::close(write_fd_);
  }
  write_fd_ = -1;
}

ExternalOracle::ExternalOracle(std::unique_ptr<LineChannel> channel, std::string descriptor, long child_pid)
    : channel_(std::move(channel)), descriptor_(std::move(descriptor)), child_pid_(child_pid) {
  const auto line = channel_->read_line();
  if (!line) {
    throw TransportError("connection closed before handshake");
  }
  handshake_ = parse_handshake(*line);
}

ExternalOracle::~ExternalOracle() {
  try {
    channel_->close_write();
  } catch (...) {
  }
  channel_.reset();
  if (child_pid_ > 0) {
    int status = 0;
    while (::waitpid(static_cast<pid_t>(child_pid_), &status, 0) < 0 && errno == EINTR) {
    }
  }
}

ClassProbabilities ExternalOracle::do_classify(const GrayscaleImage& image) {
  std::lock_guard lock(mutex_);
  const std::int64_t id = next_id_++;
  channel_->write_line(encode_request(id, image));
  const auto line = channel_->read_line();
  if (!line) {
    throw TransportError("connection closed while waiting for response " + std::to_string(id));
  }
  const Response r = parse_response(*line);
  if (r.id != id) {
    throw ProtocolError("id", "expected " + std::to_string(id) + ", got " + std::to_string(r.id));
  }
  if (r.error) {
    throw RemoteError("remote oracle error: " + *r.error);
  }
  if (r.probs.size() != handshake_.classes) {
    throw ProtocolError("probs", "expected " + std::to_string(handshake_.classes) + " values, got " +
                                     std::to_string(r.probs.size()));
  }
  try {
    return ClassProbabilities(r.probs);
  } catch (const InvalidArgument& e) {
    throw ProtocolError("probs", e.what());
  }
}

namespace {

int connect_tcp(const std::string& host, const std::string& port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw TransportError("cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  int last_errno = 0;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) {
      last_errno = errno;
      continue;
    }
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      break;
    }
    last_errno = errno;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) {
    throw TransportError("cannot connect to " + host + ":" + port + ": " + std::strerror(last_errno));
  }
  return fd;
}

std::unique_ptr<ExternalOracle> spawn_exec(const std::string& command, const std::string& endpoint) {
  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) {
    throw TransportError(std::string("pipe failed: ") + std::strerror(errno));
  }
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw TransportError(std::string("pipe failed: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
    throw TransportError(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  auto channel = std::make_unique<FdChannel>(from_child[0], to_child[1]);
  try {
    return std::make_unique<ExternalOracle>(std::move(channel), "external:" + endpoint, pid);
  } catch (...) {
    // The channel was destroyed with the failed constructor; the child sees
    // EOF on stdin.
    int status = 0;
    ::kill(pid, SIGTERM);
    ::waitpid(pid, &status, 0);
    throw;
  }
}

}  // namespace

std::unique_ptr<ExternalOracle> connect_external(const std::string& endpoint) {
  constexpr std::string_view tcp = "tcp://";
  constexpr std::string_view exec = "exec:";
  if (endpoint.starts_with(tcp)) {
    const std::string rest = endpoint.substr(tcp.size());
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size()) {
      throw InvalidArgument("tcp endpoint must be tcp://host:port, got '" + endpoint + "'");
    }
    std::string host = rest.substr(0, colon);
    if (host.size() > 2 && host.front() == '[' && host.back() == ']') {
      host = host.substr(1, host.size() - 2);
    }
    const int fd = connect_tcp(host, rest.substr(colon + 1));
    return std::make_unique<ExternalOracle>(std::make_unique<FdChannel>(fd, fd), "external:" + endpoint);
  }
  if (endpoint.starts_with(exec)) {
    const std::string command = endpoint.substr(exec.size());
    if (command.empty()) {
      throw InvalidArgument("exec endpoint needs a command");
    }
    return spawn_exec(command, endpoint);
  }
  throw InvalidArgument("unknown endpoint '" + endpoint + "' (expected tcp://host:port or exec:<command>)");
}

void serve_channel(Oracle& oracle, LineChannel& channel) {
  Handshake h;
  h.classes = oracle.num_classes();
  h.width = oracle.input_width();
  h.height = oracle.input_height();
  h.names = oracle.class_names();
  channel.write_line(encode_handshake(h));
  const std::size_t expected = h.width * h.height;
  while (const auto line = channel.read_line()) {
    if (line->empty()) {
      continue;
    }
    std::int64_t id = -1;
    std::string reply;
    try {
      const Request req = parse_request(*line);
      id = req.id;
      if (req.pixels.size() != expected) {
        throw ProtocolError("pixels", "expected " + std::to_string(expected) + " bytes, got " +
                                          std::to_string(req.pixels.size()));
      }
      reply = encode_response(id, oracle.classify(GrayscaleImage(h.width, h.height, req.pixels)));
    } catch (const ProtocolError& e) {
      if (id < 0) {
        // Salvage the id if the line is an object carrying one.
        const json j = json::parse(line->begin(), line->end(), nullptr, false);
        if (j.is_object() && j.contains("id") && j["id"].is_number_integer()) {
          id = j["id"].get<std::int64_t>();
        }
      }
      reply = encode_error(id, e.what());
    } catch (const Error& e) {
      reply = encode_error(id, e.what());
    }
    channel.write_line(reply);
  }
}

TcpOracleServer::TcpOracleServer(Oracle& oracle, const std::string& host, std::uint16_t port)
    : oracle_(oracle), host_(host) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port_str = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res); rc != 0) {
    throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw TransportError(std::string("socket failed: ") + std::strerror(errno));
  }
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 16) != 0) {
    const int err = errno;
    ::freeaddrinfo(res);
    ::close(fd);
    throw TransportError("cannot listen on " + host + ":" + port_str + ": " + std::strerror(err));
  }
  ::freeaddrinfo(res);
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  if (addr.ss_family == AF_INET) {
    port_ = ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  } else {
    port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
  }
  listen_fd_ = fd;
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpOracleServer::~TcpOracleServer() { stop(); }

std::string TcpOracleServer::endpoint() const {
  const bool v6 = host_.find(':') != std::string::npos;
  return "tcp://" + (v6 ? "[" + host_ + "]" : host_) + ":" + std::to_string(port_);
}

void TcpOracleServer::accept_loop() {
  for (;;) {
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return;
    }
    std::lock_guard lock(conn_mutex_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    conn_fds_.push_back(fd);
    workers_.emplace_back([this, fd] {
      // The channel closes fd when the worker finishes.
      FdChannel channel(fd, fd);
      try {
        serve_channel(oracle_, channel);
      } catch (const Error&) {
      }
      std::lock_guard inner(conn_mutex_);
      std::erase(conn_fds_, fd);
    });
  }
}

void TcpOracleServer::stop() {
  {
    std::lock_guard lock(conn_mutex_);
    if (stopping_.exchange(true)) {
      return;
    }
    if (listen_fd_ >= 0) {
      ::shutdown(listen_fd_, SHUT_RDWR);
    }
    for (int fd : conn_fds_) {
      ::shutdown(fd, SHUT_RDWR);
    }
  }
  if (acceptor_.joinable()) {
    acceptor_.join();
  }
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
}

}  // namespace faceattack
