#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cokv {

using SequenceNumber = uint64_t;

// Sequence numbers occupy the upper 56 bits of a record tag.
inline constexpr SequenceNumber kMaxSequenceNumber = (uint64_t{1} << 56) - 1;

enum class RecordKind : uint8_t { kDelete = 0, kPut = 1 };

inline uint64_t PackTag(SequenceNumber seq, RecordKind kind) {
  return (seq << 8) | static_cast<uint64_t>(kind);
}
inline SequenceNumber TagSequence(uint64_t tag) { return tag >> 8; }
inline RecordKind TagKind(uint64_t tag) { return static_cast<RecordKind>(tag & 0xff); }

// Non-owning view of one record. Views handed out by iterators stay valid
// until the iterator advances.
struct RecordView {
  std::string_view user_key;
  SequenceNumber seq = 0;
  RecordKind kind = RecordKind::kPut;
  std::string_view value;
};

// A user key tagged with sequence number and kind: the unit of merge.
struct InternalRecord {
  std::string user_key;
  SequenceNumber seq = 0;
  RecordKind kind = RecordKind::kPut;
  std::string value;  // empty for kDelete

  InternalRecord() = default;
  InternalRecord(std::string key, SequenceNumber s, RecordKind k, std::string v = {})
      : user_key(std::move(key)), seq(s), kind(k), value(std::move(v)) {}
  explicit InternalRecord(const RecordView& v)
      : user_key(v.user_key), seq(v.seq), kind(v.kind), value(v.value) {}

  RecordView view() const { return {user_key, seq, kind, value}; }
  bool operator==(const InternalRecord&) const = default;
};

// Internal order: user key ascending (bytewise), then sequence descending.
inline int CompareInternal(std::string_view ka, SequenceNumber sa, std::string_view kb,
                           SequenceNumber sb) {
  int c = ka.compare(kb);
  if (c != 0) return c < 0 ? -1 : 1;
  if (sa > sb) return -1;
  if (sa < sb) return 1;
  return 0;
}
inline int CompareInternal(const RecordView& a, const RecordView& b) {
  return CompareInternal(a.user_key, a.seq, b.user_key, b.seq);
}

// Closed interval [min_key, max_key] over user keys.
struct KeyRange {
  std::string min_key;
  std::string max_key;

  bool Contains(std::string_view key) const { return min_key <= key && key <= max_key; }
  bool operator==(const KeyRange&) const = default;
};

bool KeyRangesOverlap(const KeyRange& a, const KeyRange& b);

// Half-open interval [lo, hi) over user keys; an absent bound is unbounded.
struct KeyInterval {
  std::optional<std::string> lo;
  std::optional<std::string> hi;

  static KeyInterval All() { return {}; }
  static KeyInterval Below(std::string hi) { return {std::nullopt, std::move(hi)}; }
  static KeyInterval AtOrAbove(std::string lo) { return {std::move(lo), std::nullopt}; }

  bool Contains(std::string_view key) const {
    if (lo && key < std::string_view(*lo)) return false;
    if (hi && key >= std::string_view(*hi)) return false;
    return true;
  }
  bool IsEmpty() const { return lo && hi && *lo >= *hi; }
  bool operator==(const KeyInterval&) const = default;
};

// Metadata for one SSTable file.
struct SSTableMeta {
  uint64_t file_number = 0;
  uint64_t file_size = 0;
  KeyRange range;
  uint64_t record_count = 0;

  bool operator==(const SSTableMeta&) const = default;
};

// Closed range spanning every file in `files`. Requires a non-empty list.
KeyRange UnionRange(const std::vector<SSTableMeta>& files);

class Decoder;
void EncodeSSTableMeta(std::string* dst, const SSTableMeta& meta);
bool DecodeSSTableMeta(Decoder* in, SSTableMeta* meta);

std::string SSTableFileName(const std::string& db_path, uint64_t file_number);

}  // namespace cokv
