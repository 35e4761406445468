#include <gtest/gtest.h>

#include <thread>

#include "cokv/coding.h"
#include "cokv/semantic.h"
#include "message_gen.h"
#include "test_util.h"

namespace cokv {
namespace {

TEST(Codec, HelloFrameIsSeventeenBytes) {
  SemanticMessage hello{MessageType::kHello, 0, {}};
  std::string frame = EncodeMessage(hello);
  // 4 length + 1 type + 8 id + 4 crc
  ASSERT_EQ(frame.size(), 4u + 1 + 8 + 4);
  EXPECT_EQ(DecodeFixed32(frame.data()), 9u);
  EXPECT_EQ(static_cast<uint8_t>(frame[4]), static_cast<uint8_t>(MessageType::kHello));
  EXPECT_EQ(DecodeFixed32(frame.data() + 13), Crc32(std::string_view(frame).substr(4, 9)));
}

TEST(Codec, RandomRoundTrip) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 5000; i++) {
    SemanticMessage m = test::RandomMessage(rng);
    ASSERT_TRUE(IsWellFormed(m));
    std::string frame = EncodeMessage(m);
    SemanticMessage out;
    size_t consumed = 0;
    ASSERT_EQ(DecodeMessage(frame, &out, &consumed), DecodeResult::kOk);
    ASSERT_EQ(consumed, frame.size());
    ASSERT_EQ(out, m);
  }
}

TEST(Codec, DoneWithNoFiles) {
  SemanticMessage m{MessageType::kCompactDone, 4, CompactDone{{}, 0, 12}};
  std::string frame = EncodeMessage(m);
  // Body: type, id, u32 count 0, bytes_written, elapsed.
  EXPECT_EQ(frame.size(), 4u + 1 + 8 + 4 + 8 + 8 + 4);
  SemanticMessage out;
  size_t consumed;
  ASSERT_EQ(DecodeMessage(frame, &out, &consumed), DecodeResult::kOk);
  EXPECT_TRUE(std::get<CompactDone>(out.payload).files.empty());
}

TEST(Codec, CorruptByteIsChecksumError) {
  std::mt19937_64 rng(1);
  SemanticMessage m{MessageType::kCompactDone, 9, CompactDone{test::RandomMetas(rng, 4), 5, 6}};
  std::string frame = EncodeMessage(m);
  for (size_t pos = 4; pos < frame.size(); pos++) {
    std::string bad = frame;
    bad[pos] ^= 0x01;
    SemanticMessage out;
    size_t consumed;
    ASSERT_EQ(DecodeMessage(bad, &out, &consumed), DecodeResult::kBadChecksum) << pos;
  }
}

TEST(Codec, UnknownTypeIsDistinguished) {
  std::string body;
  body.push_back(static_cast<char>(0x7e));
  PutFixed64(&body, 1);
  std::string frame;
  PutFixed32(&frame, static_cast<uint32_t>(body.size()));
  frame += body;
  PutFixed32(&frame, Crc32(body));
  SemanticMessage out;
  size_t consumed;
  EXPECT_EQ(DecodeMessage(frame, &out, &consumed), DecodeResult::kUnknownType);
}

TEST(Codec, TruncatedFrameIsIncomplete) {
  std::string frame = EncodeMessage({MessageType::kCompactError, 3, ErrorInfo{1, "boom"}});
  SemanticMessage out;
  size_t consumed;
  for (size_t n = 0; n < frame.size(); n++) {
    ASSERT_EQ(DecodeMessage(std::string_view(frame).substr(0, n), &out, &consumed),
              DecodeResult::kIncomplete)
        << n;
  }
  // Two frames back to back decode one at a time.
  std::string two = frame + EncodeMessage(SemanticMessage::Shutdown());
  ASSERT_EQ(DecodeMessage(two, &out, &consumed), DecodeResult::kOk);
  EXPECT_EQ(consumed, frame.size());
  ASSERT_EQ(DecodeMessage(std::string_view(two).substr(consumed), &out, &consumed), DecodeResult::kOk);
  EXPECT_EQ(out.type, MessageType::kShutdown);
}

// Scripted device end for session tests.
class FakeDevice {
 public:
  using Script = std::function<void(Channel*)>;
  explicit FakeDevice(Script script) : endpoint_(test::UniqueSocketPath()) {
    EXPECT_TRUE(Listener::Listen(endpoint_, &listener_).ok());
    thread_ = std::thread([this, script] {
      std::unique_ptr<Channel> ch;
      if (!listener_->Accept(&ch).ok()) return;
      SemanticMessage hello;
      if (!ch->Receive(&hello).ok()) return;
      ch->Send(SemanticMessage::Hello());
      script(ch.get());
      SemanticMessage ignored;
      while (ch->Receive(&ignored).ok()) {
      }
    });
  }
  ~FakeDevice() { thread_.join(); }
  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string endpoint_;
  std::unique_ptr<Listener> listener_;
  std::thread thread_;
};

CompactRequest Request(uint64_t id) {
  CompactRequest r;
  r.task.side = SplitSide::kDevice;
  r.task.compaction_id = id;
  r.db_path = "/nowhere";
  return r;
}

TEST(Session, DoneResolvesWithFiles) {
  FakeDevice dev([](Channel* ch) {
    SemanticMessage req;
    ASSERT_TRUE(ch->Receive(&req).ok());
    ASSERT_EQ(req.type, MessageType::kCompactRequest);
    CompactDone done{{SSTableMeta{1, 10, {"a", "b"}, 1}, SSTableMeta{2, 10, {"c", "d"}, 1}}, 20, 5};
    ch->Send({MessageType::kCompactDone, req.compaction_id, done});
  });
  std::unique_ptr<DeviceSession> s;
  ASSERT_TRUE(DeviceSession::Connect(dev.endpoint(), &s).ok());
  DeviceReply reply = s->RequestDeviceCompaction(Request(11)).get();
  ASSERT_TRUE(reply.status.ok()) << reply.status.ToString();
  EXPECT_EQ(reply.done.files.size(), 2u);
  EXPECT_GT(s->transfer_bytes(), 34u);
  EXPECT_TRUE(s->healthy());
}

TEST(Session, ErrorReplyIsFailure) {
  FakeDevice dev([](Channel* ch) {
    SemanticMessage req;
    ASSERT_TRUE(ch->Receive(&req).ok());
    ch->Send({MessageType::kCompactError, req.compaction_id,
              ErrorInfo{static_cast<uint32_t>(DeviceErrorCode::kMissingInput), "gone"}});
  });
  std::unique_ptr<DeviceSession> s;
  ASSERT_TRUE(DeviceSession::Connect(dev.endpoint(), &s).ok());
  DeviceReply reply = s->RequestDeviceCompaction(Request(12)).get();
  EXPECT_FALSE(reply.status.ok());
  EXPECT_NE(reply.status.ToString().find("gone"), std::string::npos);
  EXPECT_TRUE(s->healthy());
}

TEST(Session, StaleReplyDiscarded) {
  FakeDevice dev([](Channel* ch) {
    SemanticMessage req;
    ASSERT_TRUE(ch->Receive(&req).ok());
    ch->Send({MessageType::kCompactDone, req.compaction_id + 1000, CompactDone{}});
    ch->Send({MessageType::kCompactDone, req.compaction_id, CompactDone{{}, 7, 1}});
  });
  std::unique_ptr<DeviceSession> s;
  ASSERT_TRUE(DeviceSession::Connect(dev.endpoint(), &s).ok());
  DeviceReply reply = s->RequestDeviceCompaction(Request(13)).get();
  ASSERT_TRUE(reply.status.ok());
  EXPECT_EQ(reply.done.bytes_written, 7u);
  EXPECT_EQ(s->stale_replies(), 1u);
}

TEST(Session, SecondOutstandingRequestRefused) {
  std::promise<void> release;
  auto released = release.get_future().share();
  FakeDevice dev([released](Channel* ch) {
    SemanticMessage req;
    ASSERT_TRUE(ch->Receive(&req).ok());
    released.wait();
    ch->Send({MessageType::kCompactDone, req.compaction_id, CompactDone{}});
  });
  std::unique_ptr<DeviceSession> s;
  ASSERT_TRUE(DeviceSession::Connect(dev.endpoint(), &s).ok());
  auto first = s->RequestDeviceCompaction(Request(1));
  DeviceReply second = s->RequestDeviceCompaction(Request(2)).get();
  EXPECT_TRUE(second.status.IsAborted());
  release.set_value();
  EXPECT_TRUE(first.get().status.ok());
}

TEST(Session, AbandonedRequestLateReplyIsStale) {
  std::promise<void> release;
  auto released = release.get_future().share();
  FakeDevice dev([released](Channel* ch) {
    SemanticMessage req;
    ASSERT_TRUE(ch->Receive(&req).ok());
    released.wait();
    ch->Send({MessageType::kCompactDone, req.compaction_id, CompactDone{}});
    ASSERT_TRUE(ch->Receive(&req).ok());
    ch->Send({MessageType::kCompactDone, req.compaction_id, CompactDone{{}, 3, 0}});
  });
  std::unique_ptr<DeviceSession> s;
  ASSERT_TRUE(DeviceSession::Connect(dev.endpoint(), &s).ok());
  auto f = s->RequestDeviceCompaction(Request(21));
  EXPECT_EQ(f.wait_for(std::chrono::milliseconds(50)), std::future_status::timeout);
  s->Abandon(21);
  EXPECT_TRUE(f.get().status.IsTimeout());
  release.set_value();
  DeviceReply next = s->RequestDeviceCompaction(Request(22)).get();
  ASSERT_TRUE(next.status.ok());
  EXPECT_EQ(next.done.bytes_written, 3u);
  EXPECT_EQ(s->stale_replies(), 1u);
}

TEST(Session, BrokenTransportFailsRequestAndSession) {
  FakeDevice dev([](Channel* ch) {
    SemanticMessage req;
    ASSERT_TRUE(ch->Receive(&req).ok());
    ch->ShutdownBoth();
  });
  std::unique_ptr<DeviceSession> s;
  ASSERT_TRUE(DeviceSession::Connect(dev.endpoint(), &s).ok());
  DeviceReply reply = s->RequestDeviceCompaction(Request(31)).get();
  EXPECT_TRUE(reply.status.IsIOError()) << reply.status.ToString();
  EXPECT_FALSE(s->healthy());
  EXPECT_TRUE(s->RequestDeviceCompaction(Request(32)).get().status.IsIOError());
}

}  // namespace
}  // namespace cokv
