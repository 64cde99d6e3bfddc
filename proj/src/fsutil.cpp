#include "wms/fsutil.hpp"

#include <cerrno>
#include <cstring>
#include <utility>

#include <fcntl.h>
#include <unistd.h>

#include "wms/error.hpp"

namespace wms::fsutil {

namespace {

class FileDescriptor {
public:
  explicit FileDescriptor(int fd) noexcept : fd_(fd) {}
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;
  ~FileDescriptor() {
    if (fd_ >= 0) ::close(fd_);
  }
  [[nodiscard]] int get() const noexcept { return fd_; }
  int release() noexcept { return std::exchange(fd_, -1); }

private:
  int fd_;
};

[[noreturn]] void io_error(const std::string& what, const fs::path& path) {
  fail(Errc::Io, what + " " + path.string() + ": " + std::strerror(errno));
}

void write_all(int fd, std::string_view data, const fs::path& path) {
  while (!data.empty()) {
    const auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error("write", path);
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace

void write_atomic(const fs::path& target, std::string_view data, const WriteOptions& options) {
  fs::path tmp = target;
  tmp += ".tmp";
  FileDescriptor fd(::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
  if (fd.get() < 0) io_error("open", tmp);

  try {
    const auto half = data.size() / 2;
    write_all(fd.get(), data.substr(0, half), tmp);
    if (options.fault_hook) (*options.fault_hook)(WriteStage::TmpPartial, target);
    write_all(fd.get(), data.substr(half), tmp);
    if (options.sync && ::fdatasync(fd.get()) != 0) io_error("fdatasync", tmp);
    if (::close(fd.release()) != 0) io_error("close", tmp);
    if (options.fault_hook) (*options.fault_hook)(WriteStage::BeforeRename, target);
  } catch (const InjectedFault&) {
    throw;
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }

  if (::rename(tmp.c_str(), target.c_str()) != 0) {
    const int saved = errno;
    std::error_code ec;
    fs::remove(tmp, ec);
    errno = saved;
    io_error("rename", target);
  }
  if (options.sync) sync_directory(target.parent_path());
}

std::optional<std::string> read_file(const fs::path& path) {
  FileDescriptor fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
  if (fd.get() < 0) {
    if (errno == ENOENT) return std::nullopt;
    io_error("open", path);
  }
  std::string out;
  char buf[1 << 16];
  while (true) {
    const auto n = ::read(fd.get(), buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error("read", path);
    }
    if (n == 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

void sync_directory(const fs::path& dir) {
  FileDescriptor fd(::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC));
  if (fd.get() < 0) io_error("open", dir);
  if (::fsync(fd.get()) != 0 && errno != EINVAL) io_error("fsync", dir);
}

}  // namespace wms::fsutil
