#include "cokv/wal.h"

#include "cokv/coding.h"

namespace cokv {

Status LogWriter::Create(const std::string& path, SequenceNumber base_seq,
                         std::unique_ptr<LogWriter>* out) {
  std::unique_ptr<WritableFile> file;
  Status s = WritableFile::Create(path, &file);
  if (!s.ok()) return s;
  std::string header;
  PutFixed64(&header, base_seq);
  PutFixed32(&header, Crc32(header));
  s = file->Append(header);
  if (s.ok()) s = file->Flush();
  if (!s.ok()) return s;
  out->reset(new LogWriter(std::move(file), base_seq));
  return Status::OK();
}

Status LogWriter::Add(RecordKind kind, std::string_view key, std::string_view value) {
  if (key.size() > 0xffff) return Status::InvalidArgument("key too long");
  scratch_.clear();
  scratch_.resize(8);
  scratch_.push_back(static_cast<char>(kind));
  PutFixed16(&scratch_, static_cast<uint16_t>(key.size()));
  scratch_.append(key);
  scratch_.append(value);
  std::string_view payload(scratch_.data() + 8, scratch_.size() - 8);
  std::string head;
  PutFixed32(&head, Crc32(payload));
  PutFixed32(&head, static_cast<uint32_t>(payload.size()));
  scratch_.replace(0, 8, head);
  Status s = file_->Append(scratch_);
  if (s.ok()) s = file_->Flush();
  if (s.ok()) next_seq_++;
  return s;
}

Status ReplayLog(const std::string& path, const LogRecordHandler& handler,
                 SequenceNumber* end_seq) {
  std::string contents;
  Status s = ReadFileToString(path, &contents);
  if (!s.ok()) return s;
  if (contents.size() < kLogHeaderSize ||
      Crc32(std::string_view(contents.data(), 8)) != DecodeFixed32(contents.data() + 8)) {
    return Status::Corruption(path + ": bad log header");
  }
  SequenceNumber seq = DecodeFixed64(contents.data());
  std::string_view in(contents);
  in.remove_prefix(kLogHeaderSize);
  while (in.size() >= 8) {
    uint32_t crc = DecodeFixed32(in.data());
    uint32_t len = DecodeFixed32(in.data() + 4);
    if (in.size() - 8 < len || len < 3) break;
    std::string_view payload = in.substr(8, len);
    if (Crc32(payload) != crc) break;
    auto kind = static_cast<uint8_t>(payload[0]);
    uint16_t klen = DecodeFixed16(payload.data() + 1);
    if (kind > static_cast<uint8_t>(RecordKind::kPut) || size_t{3} + klen > payload.size()) break;
    handler(seq, static_cast<RecordKind>(kind), payload.substr(3, klen), payload.substr(3 + klen));
    seq++;
    in.remove_prefix(8 + len);
  }
  *end_seq = seq;
  return Status::OK();
}

}  // namespace cokv
