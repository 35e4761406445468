#include "cokv/semantic.h"

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "cokv/coding.h"
#include "cokv/logging.h"

namespace cokv {

namespace {

void EncodeInterval(std::string* dst, const KeyInterval& k) {
  dst->push_back(k.lo ? 1 : 0);
  if (k.lo) PutLengthPrefixed(dst, *k.lo);
  dst->push_back(k.hi ? 1 : 0);
  if (k.hi) PutLengthPrefixed(dst, *k.hi);
}

bool DecodeInterval(Decoder* d, KeyInterval* k) {
  uint8_t has;
  std::string s;
  if (!d->GetFixed8(&has) || has > 1) return false;
  if (has) {
    if (!d->GetLengthPrefixed(&s)) return false;
    k->lo = s;
  }
  if (!d->GetFixed8(&has) || has > 1) return false;
  if (has) {
    if (!d->GetLengthPrefixed(&s)) return false;
    k->hi = s;
  }
  return true;
}

void EncodeMetaList(std::string* dst, const std::vector<SSTableMeta>& files) {
  PutFixed32(dst, static_cast<uint32_t>(files.size()));
  for (const auto& f : files) EncodeSSTableMeta(dst, f);
}

bool DecodeMetaList(Decoder* d, std::vector<SSTableMeta>* files) {
  uint32_t n;
  if (!d->GetFixed32(&n)) return false;
  // Each encoded meta takes at least 32 bytes.
  if (static_cast<uint64_t>(n) * 32 > d->remaining()) return false;
  files->resize(n);
  for (auto& f : *files) {
    if (!DecodeSSTableMeta(d, &f)) return false;
  }
  return true;
}

void EncodeRequest(std::string* dst, const CompactRequest& r) {
  dst->push_back(static_cast<char>(r.task.side));
  EncodeInterval(dst, r.task.key_filter);
  EncodeMetaList(dst, r.task.inputs_k);
  EncodeMetaList(dst, r.task.inputs_k1);
  PutFixed32(dst, static_cast<uint32_t>(r.task.target_level));
  PutFixed64(dst, r.first_file_number);
  PutFixed64(dst, r.file_number_count);
  PutLengthPrefixed(dst, r.db_path);
  PutFixed64(dst, r.target_file_size);
  PutFixed32(dst, r.block_size);
  dst->push_back(r.drop_tombstones ? 1 : 0);
}

bool DecodeRequest(Decoder* d, uint64_t id, CompactRequest* r) {
  uint8_t side, drop;
  uint32_t level;
  if (!d->GetFixed8(&side) || side > 1) return false;
  r->task.side = static_cast<SplitSide>(side);
  if (!DecodeInterval(d, &r->task.key_filter) || !DecodeMetaList(d, &r->task.inputs_k) ||
      !DecodeMetaList(d, &r->task.inputs_k1) || !d->GetFixed32(&level) ||
      !d->GetFixed64(&r->first_file_number) || !d->GetFixed64(&r->file_number_count) ||
      !d->GetLengthPrefixed(&r->db_path) || !d->GetFixed64(&r->target_file_size) ||
      !d->GetFixed32(&r->block_size) || !d->GetFixed8(&drop) || drop > 1) {
    return false;
  }
  r->task.target_level = static_cast<int>(level);
  r->task.compaction_id = id;
  r->drop_tombstones = drop != 0;
  return true;
}

}  // namespace

bool IsWellFormed(const SemanticMessage& msg) {
  switch (msg.type) {
    case MessageType::kCompactRequest:
      return std::holds_alternative<CompactRequest>(msg.payload) &&
             std::get<CompactRequest>(msg.payload).task.compaction_id == msg.compaction_id;
    case MessageType::kCompactDone:
      return std::holds_alternative<CompactDone>(msg.payload);
    case MessageType::kCompactError:
      return std::holds_alternative<ErrorInfo>(msg.payload);
    case MessageType::kHello:
      return std::holds_alternative<std::monostate>(msg.payload) ||
             std::holds_alternative<ErrorInfo>(msg.payload);
    case MessageType::kShutdown:
      return std::holds_alternative<std::monostate>(msg.payload);
  }
  return false;
}

std::string EncodeMessage(const SemanticMessage& msg) {
  std::string body;
  body.push_back(static_cast<char>(msg.type));
  PutFixed64(&body, msg.compaction_id);
  if (const auto* r = std::get_if<CompactRequest>(&msg.payload)) {
    EncodeRequest(&body, *r);
  } else if (const auto* done = std::get_if<CompactDone>(&msg.payload)) {
    EncodeMetaList(&body, done->files);
    PutFixed64(&body, done->bytes_written);
    PutFixed64(&body, done->device_elapsed_us);
  } else if (const auto* err = std::get_if<ErrorInfo>(&msg.payload)) {
    PutFixed32(&body, err->code);
    PutLengthPrefixed(&body, err->text);
  }
  std::string frame;
  frame.reserve(body.size() + 8);
  PutFixed32(&frame, static_cast<uint32_t>(body.size()));
  frame += body;
  PutFixed32(&frame, Crc32(body));
  return frame;
}

const char* DecodeResultName(DecodeResult r) {
  switch (r) {
    case DecodeResult::kOk:
      return "ok";
    case DecodeResult::kIncomplete:
      return "incomplete frame";
    case DecodeResult::kBadChecksum:
      return "checksum mismatch";
    case DecodeResult::kUnknownType:
      return "unknown message type";
    case DecodeResult::kMalformed:
      return "malformed body";
  }
  return "?";
}

DecodeResult DecodeMessage(std::string_view buffer, SemanticMessage* msg, size_t* consumed) {
  if (buffer.size() < 4) return DecodeResult::kIncomplete;
  uint32_t len = DecodeFixed32(buffer.data());
  if (len < 9 || len > kMaxBodySize) return DecodeResult::kMalformed;
  if (buffer.size() < size_t{4} + len + 4) return DecodeResult::kIncomplete;
  std::string_view body = buffer.substr(4, len);
  if (Crc32(body) != DecodeFixed32(buffer.data() + 4 + len)) return DecodeResult::kBadChecksum;
  uint8_t type = static_cast<uint8_t>(body[0]);
  if (type < static_cast<uint8_t>(MessageType::kCompactRequest) ||
      type > static_cast<uint8_t>(MessageType::kShutdown)) {
    return DecodeResult::kUnknownType;
  }
  SemanticMessage m;
  m.type = static_cast<MessageType>(type);
  m.compaction_id = DecodeFixed64(body.data() + 1);
  Decoder d(body.substr(9));
  bool ok = true;
  switch (m.type) {
    case MessageType::kCompactRequest: {
      CompactRequest r;
      ok = DecodeRequest(&d, m.compaction_id, &r);
      m.payload = std::move(r);
      break;
    }
    case MessageType::kCompactDone: {
      CompactDone done;
      ok = DecodeMetaList(&d, &done.files) && d.GetFixed64(&done.bytes_written) &&
           d.GetFixed64(&done.device_elapsed_us);
      m.payload = std::move(done);
      break;
    }
    case MessageType::kHello:
      if (d.empty()) break;
      [[fallthrough]];
    case MessageType::kCompactError: {
      ErrorInfo err;
      ok = d.GetFixed32(&err.code) && d.GetLengthPrefixed(&err.text);
      m.payload = std::move(err);
      break;
    }
    case MessageType::kShutdown:
      break;
  }
  if (!ok || !d.empty()) return DecodeResult::kMalformed;
  *msg = std::move(m);
  *consumed = size_t{4} + len + 4;
  return DecodeResult::kOk;
}

std::string EndpointPath(const std::string& endpoint) {
  constexpr std::string_view kPrefix = "unix:";
  if (endpoint.compare(0, kPrefix.size(), kPrefix) == 0) return endpoint.substr(kPrefix.size());
  return endpoint;
}

namespace {

Status MakeAddress(const std::string& endpoint, sockaddr_un* addr) {
  std::string path = EndpointPath(endpoint);
  std::memset(addr, 0, sizeof(*addr));
  addr->sun_family = AF_UNIX;
  if (path.empty() || path.size() >= sizeof(addr->sun_path)) {
    return Status::InvalidArgument("bad socket path '" + path + "'");
  }
  std::memcpy(addr->sun_path, path.c_str(), path.size() + 1);
  return Status::OK();
}

}  // namespace

Status Channel::Connect(const std::string& endpoint, std::unique_ptr<Channel>* out) {
  sockaddr_un addr;
  Status s = MakeAddress(endpoint, &addr);
  if (!s.ok()) return s;
  int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) return Status::IOError(std::string("socket: ") + std::strerror(errno));
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    int err = errno;
    ::close(fd);
    return Status::IOError("connect " + endpoint + ": " + std::strerror(err));
  }
  *out = std::make_unique<Channel>(fd);
  return Status::OK();
}

Channel::~Channel() { ::close(fd_); }

void Channel::ShutdownBoth() { ::shutdown(fd_, SHUT_RDWR); }

Status Channel::Send(const SemanticMessage& msg) {
  std::string frame = EncodeMessage(msg);
  std::lock_guard<std::mutex> l(send_mu_);
  const char* p = frame.data();
  size_t n = frame.size();
  while (n > 0) {
    ssize_t r = ::send(fd_, p, n, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      return Status::IOError(std::string("send: ") + std::strerror(errno));
    }
    p += r;
    n -= static_cast<size_t>(r);
  }
  bytes_sent_ += frame.size();
  return Status::OK();
}

Status Channel::Receive(SemanticMessage* msg) {
  char buf[64 * 1024];
  while (true) {
    size_t consumed = 0;
    DecodeResult r = DecodeMessage(inbuf_, msg, &consumed);
    if (r == DecodeResult::kOk) {
      inbuf_.erase(0, consumed);
      bytes_received_ += consumed;
      return Status::OK();
    }
    if (r != DecodeResult::kIncomplete) return Status::Protocol(DecodeResultName(r));
    ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      return Status::IOError(std::string("recv: ") + std::strerror(errno));
    }
    if (n == 0) return Status::IOError("connection closed");
    inbuf_.append(buf, static_cast<size_t>(n));
  }
}

Status Listener::Listen(const std::string& endpoint, std::unique_ptr<Listener>* out) {
  sockaddr_un addr;
  Status s = MakeAddress(endpoint, &addr);
  if (!s.ok()) return s;
  std::string path = EndpointPath(endpoint);
  ::unlink(path.c_str());
  int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) return Status::IOError(std::string("socket: ") + std::strerror(errno));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd, 4) != 0) {
    int err = errno;
    ::close(fd);
    return Status::IOError("listen " + endpoint + ": " + std::strerror(err));
  }
  out->reset(new Listener(fd, path));
  return Status::OK();
}

Listener::~Listener() {
  ::close(fd_);
  ::unlink(path_.c_str());
}

Status Listener::Accept(std::unique_ptr<Channel>* out) {
  while (true) {
    int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      *out = std::make_unique<Channel>(fd);
      return Status::OK();
    }
    if (errno != EINTR) return Status::IOError(std::string("accept: ") + std::strerror(errno));
  }
}

Status DeviceSession::Connect(const std::string& endpoint, std::unique_ptr<DeviceSession>* out) {
  std::unique_ptr<Channel> channel;
  Status s = Channel::Connect(endpoint, &channel);
  if (!s.ok()) return s;
  s = channel->Send(SemanticMessage::Hello());
  SemanticMessage reply;
  if (s.ok()) s = channel->Receive(&reply);
  if (!s.ok()) return s;
  if (reply.type != MessageType::kHello) return Status::Protocol("expected HELLO from device");
  if (const auto* err = std::get_if<ErrorInfo>(&reply.payload)) {
    return Status::IOError("device refused session: " + err->text);
  }
  if (reply.compaction_id != kProtocolVersion) {
    return Status::Protocol("device speaks protocol version " +
                            std::to_string(reply.compaction_id));
  }
  std::unique_ptr<DeviceSession> session(new DeviceSession(std::move(channel)));
  session->reader_ = std::thread([p = session.get()] { p->ReaderLoop(); });
  *out = std::move(session);
  return Status::OK();
}

DeviceSession::~DeviceSession() {
  channel_->ShutdownBoth();
  if (reader_.joinable()) reader_.join();
}

uint64_t DeviceSession::transfer_bytes() const {
  return channel_->bytes_sent() + channel_->bytes_received();
}

std::future<DeviceReply> DeviceSession::RequestDeviceCompaction(const CompactRequest& request) {
  uint64_t id = request.task.compaction_id;
  std::future<DeviceReply> fut;
  {
    std::lock_guard<std::mutex> l(mu_);
    if (!healthy_.load() || outstanding_id_) {
      std::promise<DeviceReply> p;
      p.set_value({healthy_.load() ? Status::Aborted("a device request is already outstanding")
                                   : Status::IOError("device session is down"),
                   {}});
      return p.get_future();
    }
    outstanding_ = std::promise<DeviceReply>();
    outstanding_id_ = id;
    fut = outstanding_.get_future();
  }
  Status s = channel_->Send({MessageType::kCompactRequest, id, request});
  if (!s.ok()) {
    healthy_ = false;
    std::lock_guard<std::mutex> l(mu_);
    if (outstanding_id_ == id) {
      outstanding_.set_value({s, {}});
      outstanding_id_.reset();
    }
  }
  return fut;
}

void DeviceSession::Abandon(uint64_t compaction_id) {
  std::lock_guard<std::mutex> l(mu_);
  if (outstanding_id_ == compaction_id) {
    outstanding_.set_value({Status::Timeout("abandoned"), {}});
    outstanding_id_.reset();
  }
}

void DeviceSession::ReaderLoop() {
  while (true) {
    SemanticMessage m;
    Status s = channel_->Receive(&m);
    if (!s.ok()) {
      healthy_ = false;
      Log(LogLevel::kInfo, "device session ended: %s", s.ToString().c_str());
      std::lock_guard<std::mutex> l(mu_);
      if (outstanding_id_) {
        outstanding_.set_value({Status::IOError("device transport broken: " + s.ToString()), {}});
        outstanding_id_.reset();
      }
      return;
    }
    if (m.type != MessageType::kCompactDone && m.type != MessageType::kCompactError) {
      Log(LogLevel::kWarn, "ignoring unexpected message type %d from device",
          static_cast<int>(m.type));
      continue;
    }
    std::lock_guard<std::mutex> l(mu_);
    if (!outstanding_id_ || *outstanding_id_ != m.compaction_id) {
      stale_replies_++;
      Log(LogLevel::kWarn, "discarding stale reply for compaction %llu",
          static_cast<unsigned long long>(m.compaction_id));
      continue;
    }
    DeviceReply reply;
    if (auto* done = std::get_if<CompactDone>(&m.payload)) {
      reply.done = std::move(*done);
    } else {
      const auto& err = std::get<ErrorInfo>(m.payload);
      reply.status = Status::Aborted("device error " + std::to_string(err.code) + ": " + err.text);
    }
    outstanding_.set_value(std::move(reply));
    outstanding_id_.reset();
  }
}

}  // namespace cokv
