#pragma once

#include <random>
#include <string>

#include "cokv/semantic.h"

namespace cokv::test {

inline std::string RandomBytes(std::mt19937_64& rng, size_t max_len) {
  std::string s(rng() % (max_len + 1), '\0');
  for (char& c : s) c = static_cast<char>(rng() & 0xff);
  return s;
}

inline std::vector<SSTableMeta> RandomMetas(std::mt19937_64& rng, size_t max_n) {
  std::vector<SSTableMeta> out(rng() % (max_n + 1));
  for (auto& m : out) {
    m.file_number = rng();
    m.file_size = rng();
    m.range.min_key = RandomBytes(rng, 24);
    m.range.max_key = RandomBytes(rng, 24);
    m.record_count = rng();
  }
  return out;
}

// Any well-formed message, covering every type and payload shape.
inline SemanticMessage RandomMessage(std::mt19937_64& rng) {
  SemanticMessage m;
  m.compaction_id = rng();
  switch (rng() % 6) {
    case 0: {
      m.type = MessageType::kCompactRequest;
      CompactRequest r;
      r.task.side = rng() % 2 ? SplitSide::kDevice : SplitSide::kHost;
      if (rng() % 2) r.task.key_filter.lo = RandomBytes(rng, 20);
      if (rng() % 2) r.task.key_filter.hi = RandomBytes(rng, 20);
      r.task.inputs_k = RandomMetas(rng, 3);
      r.task.inputs_k1 = RandomMetas(rng, 8);
      r.task.target_level = static_cast<int>(rng() % 7);
      r.task.compaction_id = m.compaction_id;
      r.first_file_number = rng();
      r.file_number_count = rng();
      r.db_path = RandomBytes(rng, 64);
      r.target_file_size = rng();
      r.block_size = static_cast<uint32_t>(rng());
      r.drop_tombstones = rng() % 2;
      m.payload = std::move(r);
      break;
    }
    case 1: {
      m.type = MessageType::kCompactDone;
      CompactDone d;
      d.files = RandomMetas(rng, 6);
      d.bytes_written = rng();
      d.device_elapsed_us = rng();
      m.payload = std::move(d);
      break;
    }
    case 2:
      m.type = MessageType::kCompactError;
      m.payload = ErrorInfo{static_cast<uint32_t>(rng()), RandomBytes(rng, 80)};
      break;
    case 3:
      m.type = MessageType::kHello;
      break;
    case 4:
      m.type = MessageType::kHello;
      m.payload = ErrorInfo{static_cast<uint32_t>(rng()), RandomBytes(rng, 40)};
      break;
    default:
      m.type = MessageType::kShutdown;
      break;
  }
  return m;
}

}  // namespace cokv::test
