#include "cokv/format.h"

#include <zlib.h>

#include <cstdio>

#include "cokv/coding.h"

namespace cokv {

uint32_t Crc32Extend(uint32_t crc, std::string_view data) {
  // zlib takes uInt lengths; feed oversized inputs in pieces.
  const auto* p = reinterpret_cast<const Bytef*>(data.data());
  size_t n = data.size();
  while (n > 0) {
    uInt chunk = n > (1u << 30) ? (1u << 30) : static_cast<uInt>(n);
    crc = static_cast<uint32_t>(::crc32(crc, p, chunk));
    p += chunk;
    n -= chunk;
  }
  return crc;
}

uint32_t Crc32(std::string_view data) { return Crc32Extend(0, data); }

bool KeyRangesOverlap(const KeyRange& a, const KeyRange& b) {
  return a.min_key <= b.max_key && b.min_key <= a.max_key;
}

KeyRange UnionRange(const std::vector<SSTableMeta>& files) {
  KeyRange r = files.front().range;
  for (const auto& f : files) {
    if (f.range.min_key < r.min_key) r.min_key = f.range.min_key;
    if (f.range.max_key > r.max_key) r.max_key = f.range.max_key;
  }
  return r;
}

void EncodeSSTableMeta(std::string* dst, const SSTableMeta& meta) {
  PutFixed64(dst, meta.file_number);
  PutFixed64(dst, meta.file_size);
  PutLengthPrefixed(dst, meta.range.min_key);
  PutLengthPrefixed(dst, meta.range.max_key);
  PutFixed64(dst, meta.record_count);
}

bool DecodeSSTableMeta(Decoder* in, SSTableMeta* meta) {
  return in->GetFixed64(&meta->file_number) && in->GetFixed64(&meta->file_size) &&
         in->GetLengthPrefixed(&meta->range.min_key) &&
         in->GetLengthPrefixed(&meta->range.max_key) && in->GetFixed64(&meta->record_count);
}

std::string SSTableFileName(const std::string& db_path, uint64_t file_number) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "/%06llu.sst", static_cast<unsigned long long>(file_number));
  return db_path + buf;
}

}  // namespace cokv
