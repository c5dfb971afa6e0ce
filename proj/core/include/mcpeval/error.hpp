#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mcpeval {

/// Root of every exception thrown by the harness.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition or a type invariant.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Malformed input (JSON, task blocks, verdicts, tool listings).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Errors raised while talking to an MCP server. Each carries the server id.
class ProtocolError : public Error {
 public:
  ProtocolError(std::string server_id, const std::string& what)
      : Error("[" + server_id + "] " + what), server_id_(std::move(server_id)) {}

  const std::string& server_id() const noexcept { return server_id_; }

 private:
  std::string server_id_;
};

/// Could not spawn the server process or open the HTTP connection.
class ConnectError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// The initialize handshake did not complete in time.
class HandshakeTimeoutError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// The server answered initialize with a protocol version we do not speak.
class ProtocolVersionError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// Pipe/socket failure, closed session, or JSON-RPC framing breakage.
class TransportError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// A request (other than the handshake) exceeded its deadline.
class CallTimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// The server answered a request with a JSON-RPC error object.
class RpcError : public ProtocolError {
 public:
  RpcError(std::string server_id, int code, const std::string& what)
      : ProtocolError(std::move(server_id), what), code_(code) {}

  int code() const noexcept { return code_; }

 private:
  int code_;
};

/// Chat backend failures.
class GatewayError : public Error {
 public:
  using Error::Error;
};

class RateLimitError : public GatewayError {
 public:
  RateLimitError(const std::string& what, double retry_after_s)
      : GatewayError(what), retry_after_s_(retry_after_s) {}

  /// Seconds suggested by the backend before retrying; negative if unknown.
  double retry_after() const noexcept { return retry_after_s_; }

 private:
  double retry_after_s_;
};

/// The judge kept producing unparseable output until the retry budget ran out.
class JudgeFailureError : public Error {
 public:
  JudgeFailureError(const std::string& what, std::string last_raw)
      : Error(what), last_raw_(std::move(last_raw)) {}

  const std::string& last_raw_response() const noexcept { return last_raw_; }

 private:
  std::string last_raw_;
};

}  // namespace mcpeval
