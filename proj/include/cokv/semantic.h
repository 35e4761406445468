#pragma once

// Host <-> device metadata protocol, version 1.
//
// Frame: u32 body_len | body | u32 crc32(body)
// body:  u8 msg_type | u64 compaction_id | payload
//
// Integers are little-endian fixed width; strings and lists carry a u32
// length/count prefix. HELLO puts the protocol version in the id slot and
// has an empty payload, or an error payload when the peer refuses.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "cokv/format.h"
#include "cokv/offload_types.h"
#include "cokv/status.h"

namespace cokv {

inline constexpr uint32_t kProtocolVersion = 1;
inline constexpr size_t kFrameOverhead = 17;  // len + type + id + crc
inline constexpr uint32_t kMaxBodySize = 64u << 20;

enum class MessageType : uint8_t {
  kCompactRequest = 1,
  kCompactDone = 2,
  kCompactError = 3,
  kHello = 4,
  kShutdown = 5,
};

enum class DeviceErrorCode : uint32_t {
  kMissingInput = 1,
  kIOError = 2,
  kCorruption = 3,
  kBadRequest = 4,
  kFileNumbersExhausted = 5,
  kUnreadableDb = 6,
  kVersionMismatch = 7,
};

struct CompactRequest {
  SplitTask task;
  uint64_t first_file_number = 0;
  uint64_t file_number_count = 0;
  std::string db_path;
  uint64_t target_file_size = 0;
  uint32_t block_size = 0;
  bool drop_tombstones = false;

  bool operator==(const CompactRequest&) const = default;
};

struct CompactDone {
  std::vector<SSTableMeta> files;
  uint64_t bytes_written = 0;
  uint64_t device_elapsed_us = 0;

  bool operator==(const CompactDone&) const = default;
};

struct ErrorInfo {
  uint32_t code = 0;
  std::string text;

  bool operator==(const ErrorInfo&) const = default;
};

struct SemanticMessage {
  MessageType type = MessageType::kHello;
  uint64_t compaction_id = 0;
  // monostate: HELLO (accepting) and SHUTDOWN. ErrorInfo: COMPACT_ERROR and
  // a refusing HELLO.
  std::variant<std::monostate, CompactRequest, CompactDone, ErrorInfo> payload;

  static SemanticMessage Hello() { return {MessageType::kHello, kProtocolVersion, {}}; }
  static SemanticMessage Shutdown() { return {MessageType::kShutdown, 0, {}}; }

  bool operator==(const SemanticMessage&) const = default;
};

// Well-formedness: the payload alternative matches the message type.
bool IsWellFormed(const SemanticMessage& msg);

std::string EncodeMessage(const SemanticMessage& msg);

enum class DecodeResult {
  kOk,
  kIncomplete,   // need more bytes
  kBadChecksum,
  kUnknownType,
  kMalformed,    // checksum fine but the body does not parse
};

const char* DecodeResultName(DecodeResult r);

// Decodes the first frame of `buffer`. On kOk, *consumed is the frame size.
DecodeResult DecodeMessage(std::string_view buffer, SemanticMessage* msg, size_t* consumed);

// Byte-stream endpoint over a Unix domain socket. `endpoint` is a socket
// path, optionally prefixed with "unix:".
class Channel {
 public:
  static Status Connect(const std::string& endpoint, std::unique_ptr<Channel>* out);
  explicit Channel(int fd) : fd_(fd) {}
  ~Channel();
  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  Status Send(const SemanticMessage& msg);
  // Blocks for the next message. A clean EOF is reported as IOError
  // "connection closed".
  Status Receive(SemanticMessage* msg);
  // Wakes a blocked Receive by shutting the socket down.
  void ShutdownBoth();

  uint64_t bytes_sent() const { return bytes_sent_; }
  uint64_t bytes_received() const { return bytes_received_; }

 private:
  int fd_;
  std::string inbuf_;
  std::mutex send_mu_;
  std::atomic<uint64_t> bytes_sent_{0};
  std::atomic<uint64_t> bytes_received_{0};
};

std::string EndpointPath(const std::string& endpoint);

// Listening socket for the device side.
class Listener {
 public:
  static Status Listen(const std::string& endpoint, std::unique_ptr<Listener>* out);
  ~Listener();
  Status Accept(std::unique_ptr<Channel>* out);

 private:
  Listener(int fd, std::string path) : fd_(fd), path_(std::move(path)) {}
  int fd_;
  std::string path_;
};

// Outcome of one offloaded half.
struct DeviceReply {
  Status status;
  CompactDone done;
};

// Host end of a device session. A reader thread matches replies to the
// single outstanding request by compaction id; stale replies are dropped.
class DeviceSession {
 public:
  // Connects and exchanges HELLO.
  static Status Connect(const std::string& endpoint, std::unique_ptr<DeviceSession>* out);
  ~DeviceSession();

  // Sends COMPACT_REQUEST. The future resolves on the matching DONE/ERROR
  // or with an IOError when the transport breaks. Fails immediately when a
  // request is already outstanding or the session is down.
  std::future<DeviceReply> RequestDeviceCompaction(const CompactRequest& request);

  // Forgets the outstanding request (after a timeout); a late reply is
  // then discarded as stale.
  void Abandon(uint64_t compaction_id);

  bool healthy() const { return healthy_.load(); }
  uint64_t transfer_bytes() const;
  uint64_t stale_replies() const { return stale_replies_.load(); }

 private:
  explicit DeviceSession(std::unique_ptr<Channel> channel) : channel_(std::move(channel)) {}
  void ReaderLoop();

  std::unique_ptr<Channel> channel_;
  std::thread reader_;
  std::mutex mu_;
  std::optional<uint64_t> outstanding_id_;
  std::promise<DeviceReply> outstanding_;
  std::atomic<bool> healthy_{true};
  std::atomic<uint64_t> stale_replies_{0};
};

}  // namespace cokv
