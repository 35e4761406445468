#pragma once

// Thin POSIX file layer. Every writer counts the bytes it hands to the OS so
// the engine can account physical writes exactly.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cokv/status.h"

namespace cokv {

class WritableFile {
 public:
  // Creates or truncates `path`.
  static Status Create(const std::string& path, std::unique_ptr<WritableFile>* out);
  // Opens `path` for appending, creating it if needed.
  static Status OpenAppend(const std::string& path, std::unique_ptr<WritableFile>* out);

  ~WritableFile();
  WritableFile(const WritableFile&) = delete;
  WritableFile& operator=(const WritableFile&) = delete;

  Status Append(std::string_view data);
  // Pushes buffered bytes to the OS.
  Status Flush();
  Status Sync();
  Status Close();

  uint64_t size() const { return size_; }
  const std::string& path() const { return path_; }

 private:
  WritableFile(int fd, std::string path, uint64_t size)
      : fd_(fd), path_(std::move(path)), size_(size) {}
  Status WriteRaw(const char* p, size_t n);

  int fd_;
  std::string path_;
  uint64_t size_;
  std::string buf_;
};

class RandomAccessFile {
 public:
  static Status Open(const std::string& path, std::unique_ptr<RandomAccessFile>* out);
  ~RandomAccessFile();
  RandomAccessFile(const RandomAccessFile&) = delete;
  RandomAccessFile& operator=(const RandomAccessFile&) = delete;

  // Reads exactly n bytes at offset into *dst; a short read is corruption.
  Status Read(uint64_t offset, size_t n, std::string* dst) const;
  uint64_t size() const { return size_; }
  const std::string& path() const { return path_; }

 private:
  RandomAccessFile(int fd, std::string path, uint64_t size)
      : fd_(fd), path_(std::move(path)), size_(size) {}
  int fd_;
  std::string path_;
  uint64_t size_;
};

Status ReadFileToString(const std::string& path, std::string* out);
bool FileExists(const std::string& path);
Status RemoveFile(const std::string& path);
Status RenameFile(const std::string& from, const std::string& to);
Status CreateDirIfMissing(const std::string& path);
Status ListDir(const std::string& path, std::vector<std::string>* names);
Status GetFileSize(const std::string& path, uint64_t* size);

}  // namespace cokv
