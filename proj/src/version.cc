#include "cokv/version.h"

#include <algorithm>
#include <unordered_set>

#include "cokv/coding.h"

namespace cokv {

std::string ManifestFileName(const std::string& db_path) { return db_path + "/MANIFEST"; }

void VersionEdit::EncodeTo(std::string* dst) const {
  dst->push_back(snapshot ? 1 : 0);
  dst->push_back(next_seq ? 1 : 0);
  if (next_seq) PutFixed64(dst, *next_seq);
  dst->push_back(next_file_number ? 1 : 0);
  if (next_file_number) PutFixed64(dst, *next_file_number);
  PutFixed32(dst, static_cast<uint32_t>(deleted_files.size()));
  for (const auto& [level, number] : deleted_files) {
    PutFixed32(dst, static_cast<uint32_t>(level));
    PutFixed64(dst, number);
  }
  PutFixed32(dst, static_cast<uint32_t>(added_files.size()));
  for (const auto& [level, meta] : added_files) {
    PutFixed32(dst, static_cast<uint32_t>(level));
    EncodeSSTableMeta(dst, meta);
  }
  PutFixed32(dst, static_cast<uint32_t>(cursors.size()));
  for (const auto& [level, key] : cursors) {
    PutFixed32(dst, static_cast<uint32_t>(level));
    PutLengthPrefixed(dst, key);
  }
}

Status VersionEdit::DecodeFrom(std::string_view src) {
  *this = VersionEdit();
  Decoder d(src);
  uint8_t flag;
  uint64_t v64;
  uint32_t n, level;
  auto bad = [] { return Status::Corruption("malformed version edit"); };
  if (!d.GetFixed8(&flag)) return bad();
  snapshot = flag != 0;
  if (!d.GetFixed8(&flag)) return bad();
  if (flag) {
    if (!d.GetFixed64(&v64)) return bad();
    next_seq = v64;
  }
  if (!d.GetFixed8(&flag)) return bad();
  if (flag) {
    if (!d.GetFixed64(&v64)) return bad();
    next_file_number = v64;
  }
  if (!d.GetFixed32(&n)) return bad();
  for (uint32_t i = 0; i < n; i++) {
    if (!d.GetFixed32(&level) || !d.GetFixed64(&v64)) return bad();
    deleted_files.emplace_back(static_cast<int>(level), v64);
  }
  if (!d.GetFixed32(&n)) return bad();
  for (uint32_t i = 0; i < n; i++) {
    SSTableMeta meta;
    if (!d.GetFixed32(&level) || !DecodeSSTableMeta(&d, &meta)) return bad();
    added_files.emplace_back(static_cast<int>(level), std::move(meta));
  }
  if (!d.GetFixed32(&n)) return bad();
  for (uint32_t i = 0; i < n; i++) {
    std::string key;
    if (!d.GetFixed32(&level) || !d.GetLengthPrefixed(&key)) return bad();
    cursors.emplace_back(static_cast<int>(level), std::move(key));
  }
  if (!d.empty()) return bad();
  return Status::OK();
}

TableFile::~TableFile() {
  if (obsolete_.load()) {
    table_.reset();
    RemoveFile(path_);
  }
}

uint64_t Version::LevelBytes(int level) const {
  uint64_t total = 0;
  for (const auto& f : levels_[level]) total += f.file_size;
  return total;
}

size_t Version::TotalFiles() const {
  size_t n = 0;
  for (const auto& l : levels_) n += l.size();
  return n;
}

std::vector<SSTableMeta> Version::Overlapping(int level, const KeyRange& range) const {
  std::vector<SSTableMeta> out;
  for (const auto& f : levels_[level]) {
    if (KeyRangesOverlap(f.range, range)) out.push_back(f);
  }
  return out;
}

std::shared_ptr<TableFile> Version::handle(uint64_t file_number) const {
  auto it = handles_.find(file_number);
  return it == handles_.end() ? nullptr : it->second;
}

void Version::AddFileForTest(int level, SSTableMeta meta) {
  levels_[level].push_back(std::move(meta));
  auto& files = levels_[level];
  if (level == 0) {
    std::sort(files.begin(), files.end(),
              [](const SSTableMeta& a, const SSTableMeta& b) { return a.file_number < b.file_number; });
  } else {
    std::sort(files.begin(), files.end(), [](const SSTableMeta& a, const SSTableMeta& b) {
      return a.range.min_key < b.range.min_key;
    });
  }
}

Status Version::Apply(const VersionEdit& edit, Version* out) const {
  Version v(*this);
  for (const auto& [level, number] : edit.deleted_files) {
    if (level < 0 || level >= num_levels()) return Status::InvalidArgument("bad level in edit");
    auto& files = v.levels_[level];
    auto it = std::find_if(files.begin(), files.end(),
                           [n = number](const SSTableMeta& f) { return f.file_number == n; });
    if (it == files.end()) {
      return Status::InvalidArgument("deleted file " + std::to_string(number) +
                                     " not present in level " + std::to_string(level));
    }
    files.erase(it);
    v.handles_.erase(number);
  }
  for (const auto& [level, meta] : edit.added_files) {
    if (level < 0 || level >= num_levels()) return Status::InvalidArgument("bad level in edit");
    v.levels_[level].push_back(meta);
  }
  std::sort(v.levels_[0].begin(), v.levels_[0].end(),
            [](const SSTableMeta& a, const SSTableMeta& b) { return a.file_number < b.file_number; });
  for (int level = 1; level < num_levels(); level++) {
    std::sort(v.levels_[level].begin(), v.levels_[level].end(),
              [](const SSTableMeta& a, const SSTableMeta& b) {
                return a.range.min_key < b.range.min_key;
              });
  }
  Status s = v.CheckInvariants();
  if (!s.ok()) return s;
  *out = std::move(v);
  return Status::OK();
}

Status Version::CheckInvariants() const {
  std::unordered_set<uint64_t> seen;
  for (int level = 0; level < num_levels(); level++) {
    const auto& files = levels_[level];
    for (size_t i = 0; i < files.size(); i++) {
      if (!seen.insert(files[i].file_number).second) {
        return Status::InvalidArgument("file " + std::to_string(files[i].file_number) +
                                       " referenced more than once");
      }
      if (files[i].range.min_key > files[i].range.max_key) {
        return Status::InvalidArgument("inverted key range");
      }
      if (level > 0 && i > 0 && files[i - 1].range.max_key >= files[i].range.min_key) {
        return Status::InvalidArgument("overlapping files " +
                                       std::to_string(files[i - 1].file_number) + " and " +
                                       std::to_string(files[i].file_number) + " in level " +
                                       std::to_string(level));
      }
    }
  }
  return Status::OK();
}

VersionSet::VersionSet(std::string db_path, int num_levels)
    : db_path_(std::move(db_path)),
      num_levels_(num_levels),
      current_(std::make_shared<const Version>(num_levels)),
      cursors_(num_levels) {}

std::shared_ptr<const Version> VersionSet::current() const {
  std::lock_guard<std::mutex> l(mu_);
  return current_;
}

std::string VersionSet::cursor(int level) const {
  std::lock_guard<std::mutex> l(mu_);
  return cursors_[level];
}

void VersionSet::MarkFileNumberUsed(uint64_t number) {
  uint64_t cur = next_file_number_.load();
  while (cur <= number && !next_file_number_.compare_exchange_weak(cur, number + 1)) {
  }
}

Status VersionSet::OpenHandles(Version* v, const Version* reuse) {
  for (const auto& files : v->levels_) {
    for (const auto& f : files) {
      if (v->handles_.count(f.file_number)) continue;
      std::shared_ptr<TableFile> h = reuse ? reuse->handle(f.file_number) : nullptr;
      if (!h) {
        std::string path = SSTableFileName(db_path_, f.file_number);
        std::shared_ptr<const Table> table;
        Status s = Table::Open(path, &table);
        // A live table that is gone means the store is damaged.
        if (!s.ok() && !FileExists(path)) return Status::Corruption(path + ": live table missing");
        if (!s.ok()) return s;
        if (table->file_size() != f.file_size || table->record_count() != f.record_count) {
          return Status::Corruption(path + ": file does not match its metadata");
        }
        h = std::make_shared<TableFile>(f, path, std::move(table));
      }
      v->handles_.emplace(f.file_number, std::move(h));
    }
  }
  return Status::OK();
}

Status VersionSet::Recover() {
  std::string path = ManifestFileName(db_path_);
  if (!FileExists(path)) return Status::OK();
  std::string contents;
  Status s = ReadFileToString(path, &contents);
  if (!s.ok()) return s;
  Version v(num_levels_);
  std::string_view in(contents);
  while (in.size() >= 8) {
    uint32_t crc = DecodeFixed32(in.data());
    uint32_t len = DecodeFixed32(in.data() + 4);
    if (in.size() - 8 < len) break;  // torn tail
    std::string_view body = in.substr(8, len);
    if (Crc32(body) != crc) break;
    in.remove_prefix(8 + len);
    VersionEdit edit;
    s = edit.DecodeFrom(body);
    if (!s.ok()) return s;
    if (edit.snapshot) v = Version(num_levels_);
    Version next(num_levels_);
    s = v.Apply(edit, &next);
    if (!s.ok()) return Status::Corruption("manifest replay: " + s.message());
    v = std::move(next);
    if (edit.next_seq) log_watermark_ = std::max(log_watermark_, *edit.next_seq);
    if (edit.next_file_number) MarkFileNumberUsed(*edit.next_file_number - 1);
    for (auto& [level, key] : edit.cursors) cursors_[level] = key;
  }
  for (const auto& files : v.levels_) {
    for (const auto& f : files) MarkFileNumberUsed(f.file_number);
  }
  s = OpenHandles(&v, nullptr);
  if (!s.ok()) return s;
  std::lock_guard<std::mutex> l(mu_);
  current_ = std::make_shared<const Version>(std::move(v));
  return Status::OK();
}

Status VersionSet::WriteSnapshot() {
  auto cur = current();
  VersionEdit edit;
  edit.snapshot = true;
  edit.next_seq = log_watermark_;
  for (int level = 0; level < num_levels_; level++) {
    for (const auto& f : cur->files(level)) edit.AddFile(level, f);
    std::string c = cursor(level);
    if (!c.empty()) edit.cursors.emplace_back(level, std::move(c));
  }
  manifest_.reset();
  std::string tmp = ManifestFileName(db_path_) + ".tmp";
  std::unique_ptr<WritableFile> file;
  Status s = WritableFile::Create(tmp, &file);
  if (!s.ok()) return s;
  manifest_ = std::move(file);
  s = AppendRecord(edit);
  if (s.ok()) s = manifest_->Close();
  if (s.ok()) s = RenameFile(tmp, ManifestFileName(db_path_));
  if (s.ok()) s = WritableFile::OpenAppend(ManifestFileName(db_path_), &manifest_);
  return s;
}

Status VersionSet::AppendRecord(const VersionEdit& edit) {
  VersionEdit e = edit;
  e.next_file_number = next_file_number_.load();
  std::string body;
  e.EncodeTo(&body);
  std::string record;
  PutFixed32(&record, Crc32(body));
  PutFixed32(&record, static_cast<uint32_t>(body.size()));
  record += body;
  Status s = manifest_->Append(record);
  if (s.ok()) s = manifest_->Flush();
  if (s.ok()) manifest_bytes_ += record.size();
  return s;
}

Status VersionSet::LogAndApply(VersionEdit edit) {
  auto cur = current();
  Version next(num_levels_);
  Status s = cur->Apply(edit, &next);
  if (!s.ok()) return s;
  s = OpenHandles(&next, cur.get());
  if (!s.ok()) return s;
  s = AppendRecord(edit);
  if (!s.ok()) return s;
  for (const auto& [number, h] : cur->handles_) {
    if (!next.handles_.count(number)) h->MarkObsolete();
  }
  std::lock_guard<std::mutex> l(mu_);
  current_ = std::make_shared<const Version>(std::move(next));
  if (edit.next_seq) log_watermark_ = std::max(log_watermark_, *edit.next_seq);
  for (auto& [level, key] : edit.cursors) cursors_[level] = key;
  return Status::OK();
}

}  // namespace cokv
