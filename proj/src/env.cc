#include "cokv/env.h"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <system_error>

namespace cokv {

namespace {

constexpr size_t kWriteBufferSize = 64 * 1024;

Status PosixError(const std::string& context, int err) {
  return Status::IOError(context + ": " + std::strerror(err));
}

}  // namespace

Status WritableFile::Create(const std::string& path, std::unique_ptr<WritableFile>* out) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) return PosixError(path, errno);
  out->reset(new WritableFile(fd, path, 0));
  return Status::OK();
}

Status WritableFile::OpenAppend(const std::string& path, std::unique_ptr<WritableFile>* out) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) return PosixError(path, errno);
  struct stat st;
  if (::fstat(fd, &st) != 0) {
    int err = errno;
    ::close(fd);
    return PosixError(path, err);
  }
  out->reset(new WritableFile(fd, path, static_cast<uint64_t>(st.st_size)));
  return Status::OK();
}

WritableFile::~WritableFile() {
  if (fd_ >= 0) {
    Flush();
    ::close(fd_);
  }
}

Status WritableFile::WriteRaw(const char* p, size_t n) {
  while (n > 0) {
    ssize_t r = ::write(fd_, p, n);
    if (r < 0) {
      if (errno == EINTR) continue;
      return PosixError(path_, errno);
    }
    p += r;
    n -= static_cast<size_t>(r);
  }
  return Status::OK();
}

Status WritableFile::Append(std::string_view data) {
  if (fd_ < 0) return Status::IOError(path_ + ": append after close");
  size_ += data.size();
  if (buf_.size() + data.size() < kWriteBufferSize) {
    buf_.append(data.data(), data.size());
    return Status::OK();
  }
  Status s = Flush();
  if (!s.ok()) return s;
  if (data.size() < kWriteBufferSize) {
    buf_.append(data.data(), data.size());
    return Status::OK();
  }
  return WriteRaw(data.data(), data.size());
}

Status WritableFile::Flush() {
  if (buf_.empty()) return Status::OK();
  Status s = WriteRaw(buf_.data(), buf_.size());
  buf_.clear();
  return s;
}

Status WritableFile::Sync() {
  Status s = Flush();
  if (!s.ok()) return s;
  if (::fdatasync(fd_) != 0) return PosixError(path_, errno);
  return Status::OK();
}

Status WritableFile::Close() {
  if (fd_ < 0) return Status::OK();
  Status s = Flush();
  if (::close(fd_) != 0 && s.ok()) s = PosixError(path_, errno);
  fd_ = -1;
  return s;
}

Status RandomAccessFile::Open(const std::string& path, std::unique_ptr<RandomAccessFile>* out) {
  int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) return PosixError(path, errno);
  struct stat st;
  if (::fstat(fd, &st) != 0) {
    int err = errno;
    ::close(fd);
    return PosixError(path, err);
  }
  out->reset(new RandomAccessFile(fd, path, static_cast<uint64_t>(st.st_size)));
  return Status::OK();
}

RandomAccessFile::~RandomAccessFile() { ::close(fd_); }

Status RandomAccessFile::Read(uint64_t offset, size_t n, std::string* dst) const {
  dst->resize(n);
  size_t done = 0;
  while (done < n) {
    ssize_t r = ::pread(fd_, dst->data() + done, n - done, static_cast<off_t>(offset + done));
    if (r < 0) {
      if (errno == EINTR) continue;
      return PosixError(path_, errno);
    }
    if (r == 0) return Status::Corruption(path_ + ": short read");
    done += static_cast<size_t>(r);
  }
  return Status::OK();
}

Status ReadFileToString(const std::string& path, std::string* out) {
  std::unique_ptr<RandomAccessFile> f;
  Status s = RandomAccessFile::Open(path, &f);
  if (!s.ok()) return s;
  return f->Read(0, f->size(), out);
}

bool FileExists(const std::string& path) { return ::access(path.c_str(), F_OK) == 0; }

Status RemoveFile(const std::string& path) {
  if (::unlink(path.c_str()) != 0) return PosixError(path, errno);
  return Status::OK();
}

Status RenameFile(const std::string& from, const std::string& to) {
  if (::rename(from.c_str(), to.c_str()) != 0) return PosixError(from, errno);
  return Status::OK();
}

Status CreateDirIfMissing(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) return Status::IOError(path + ": " + ec.message());
  return Status::OK();
}

Status ListDir(const std::string& path, std::vector<std::string>* names) {
  names->clear();
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(path, ec)) {
    names->push_back(entry.path().filename().string());
  }
  if (ec) return Status::IOError(path + ": " + ec.message());
  return Status::OK();
}

Status GetFileSize(const std::string& path, uint64_t* size) {
  struct stat st;
  if (::stat(path.c_str(), &st) != 0) return PosixError(path, errno);
  *size = static_cast<uint64_t>(st.st_size);
  return Status::OK();
}

}  // namespace cokv
