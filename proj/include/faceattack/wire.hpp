#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "faceattack/oracle.hpp"

namespace faceattack {

/// Line-delimited JSON oracle protocol, version "face-oracle/1".
///
///   server -> {"proto":"face-oracle/1","classes":C,"width":W,"height":H,"names":[...]}
///   client -> {"id":N,"pixels":"<base64 of W*H bytes, row-major>"}
///   server -> {"id":N,"probs":[p0,...]}   or   {"id":N,"error":"..."}
///
/// Every message is one line terminated by a single '\n'.
inline constexpr std::string_view kProtocolVersion = "face-oracle/1";

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Standard alphabet with padding. Throws InvalidArgument on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct Handshake {
  std::string proto{kProtocolVersion};
  std::size_t classes = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::string> names;
};

struct Request {
  std::int64_t id = 0;
  std::vector<std::uint8_t> pixels;
};

struct Response {
  std::int64_t id = 0;
  std::vector<double> probs;        // empty for error responses
  std::optional<std::string> error;
};

std::string encode_handshake(const Handshake& h);
std::string encode_request(std::int64_t id, const GrayscaleImage& image);
std::string encode_response(std::int64_t id, const ClassProbabilities& probs);
std::string encode_error(std::int64_t id, std::string_view message);

// Parsers throw ProtocolError naming the offending field; parse_handshake
// throws VersionMismatch for any proto other than kProtocolVersion.
Handshake parse_handshake(std::string_view line);
Request parse_request(std::string_view line);
// Checks the grammar only; probability validation needs the handshake.
Response parse_response(std::string_view line);

/// A bidirectional byte stream viewed as lines. Lines are passed without the
/// terminating '\n'.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  // std::nullopt at end of stream.
  virtual std::optional<std::string> read_line() = 0;
  virtual void write_line(std::string_view line) = 0;
  // Signals end of stream to the peer.
  virtual void close_write() = 0;
};

/// LineChannel over POSIX file descriptors (pipes or sockets).
class FdChannel : public LineChannel {
 public:
  // read_fd may equal write_fd for sockets. The channel owns both.
  FdChannel(int read_fd, int write_fd);
  ~FdChannel() override;
  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;

  std::optional<std::string> read_line() override;
  void write_line(std::string_view line) override;
  void close_write() override;

 private:
  int read_fd_;
  int write_fd_;
  std::string buffer_;
  bool eof_ = false;
};

/// Client side of the protocol. One request is in flight at a time; callers
/// wanting parallelism open several connections.
class ExternalOracle : public Oracle {
 public:
  // Reads the handshake immediately. child_pid, if positive, is reaped on
  // destruction after the channel has been closed.
  ExternalOracle(std::unique_ptr<LineChannel> channel, std::string descriptor, long child_pid = -1);
  ~ExternalOracle() override;

  const Handshake& handshake() const noexcept { return handshake_; }

  std::size_t num_classes() const override { return handshake_.classes; }
  std::size_t input_width() const override { return handshake_.width; }
  std::size_t input_height() const override { return handshake_.height; }
  std::vector<std::string> class_names() const override { return handshake_.names; }
  std::string descriptor() const override { return descriptor_; }

 protected:
  ClassProbabilities do_classify(const GrayscaleImage& image) override;

 private:
  std::unique_ptr<LineChannel> channel_;
  std::string descriptor_;
  long child_pid_;
  Handshake handshake_;
  std::mutex mutex_;
  std::int64_t next_id_ = 1;
};

/// Endpoints:
///   tcp://host:port   connect to a listening server
///   exec:<command>    run the command under /bin/sh and talk over its
///                     stdin/stdout
/// Throws TransportError if the endpoint cannot be reached and
/// ProtocolError/VersionMismatch if the handshake is bad.
std::unique_ptr<ExternalOracle> connect_external(const std::string& endpoint);

/// Server loop: sends the handshake, then answers requests until the peer
/// closes its side. Malformed requests get error responses and the loop
/// continues.
void serve_channel(Oracle& oracle, LineChannel& channel);

/// Serves an oracle on a TCP socket, one thread per connection. The oracle
/// must tolerate concurrent classify calls.
class TcpOracleServer {
 public:
  // port 0 picks an ephemeral port.
  TcpOracleServer(Oracle& oracle, const std::string& host, std::uint16_t port);
  ~TcpOracleServer();
  TcpOracleServer(const TcpOracleServer&) = delete;
  TcpOracleServer& operator=(const TcpOracleServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  std::string endpoint() const;
  // Closes the listening socket and every open connection.
  void stop();

 private:
  void accept_loop();

  Oracle& oracle_;
  std::string host_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex conn_mutex_;
  std::vector<int> conn_fds_;
  std::vector<std::thread> workers_;
};

}  // namespace faceattack
