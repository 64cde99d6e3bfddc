#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wms::fsutil {

namespace fs = std::filesystem;

// Points inside an atomic write where a test hook may simulate a crash.
enum class WriteStage {
  TmpPartial,    // half of the bytes are in the tmp file
  BeforeRename,  // tmp file complete and synced, target untouched
};

// Thrown by test fault hooks. Writers let it escape without cleaning up,
// leaving the on-disk state exactly as a crash would.
struct InjectedFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using FaultHook = std::function<void(WriteStage, const fs::path&)>;

struct WriteOptions {
  bool sync = true;
  const FaultHook* fault_hook = nullptr;
};

/// Writes `data` to `<target>.tmp`, syncs it, then renames over `target` and
/// syncs the parent directory.
void write_atomic(const fs::path& target, std::string_view data, const WriteOptions& options);

/// Whole-file read; nullopt if the file does not exist.
[[nodiscard]] std::optional<std::string> read_file(const fs::path& path);

void sync_directory(const fs::path& dir);

}  // namespace wms::fsutil
