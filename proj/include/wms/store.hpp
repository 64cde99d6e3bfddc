#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wms/domain.hpp"
#include "wms/error.hpp"
#include "wms/fsutil.hpp"

namespace wms {

namespace fs = std::filesystem;

enum class Collection : std::uint8_t { Tasks, Users };

[[nodiscard]] std::string_view to_string(Collection c) noexcept;

struct Manifest {
  int format_version = 1;
  std::int64_t last_event_seq = 0;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline constexpr int kFormatVersion = 1;
inline constexpr std::size_t kMaxPageLimit = 500;

// Conjunction of optional predicates over task documents.
struct TaskFilter {
  std::optional<TaskStatus> status;
  std::optional<Priority> priority;
  std::optional<std::string> assignee;
  std::optional<bool> trashed;
};

struct Page {
  std::size_t offset = 0;
  std::size_t limit = 50;
};

struct ListResult {
  std::vector<Json> items;
  std::size_t total_count = 0;
};

struct BlobRef {
  std::string content_hash;
  std::uint64_t size_bytes = 0;

  friend bool operator==(const BlobRef&, const BlobRef&) = default;
};

struct StoreOptions {
  std::uint64_t blob_size_limit = 10 * 1024 * 1024;
  bool sync = true;
  fsutil::FaultHook fault_hook;  // tests only
};

// Runs while the document's write lock is still held, right after the new
// version became visible. The service layer appends the mutation event here
// so the log order per entity matches the revision order.
using CommitCallback = std::function<void(const Json& committed)>;

/// File-backed JSON document store.
///
/// Layout under data_dir:
///   manifest.json, tasks/<id>.json, users/<id>.json, blobs/<hh>/<sha256-hex>,
///   events.jsonl (written by EventLog).
///
/// Writes are serialized per document id; reads never lock. Every write goes
/// through tmp-file + fsync + rename, so a reader or a restart sees either the
/// previous or the new committed version.
class Store {
public:
  /// Initializes the layout if absent, removes leftover `*.tmp` files, and
  /// validates the manifest. Throws CorruptManifest.
  static std::unique_ptr<Store> open(const fs::path& data_dir, StoreOptions options = {});

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  [[nodiscard]] const fs::path& data_dir() const noexcept { return data_dir_; }
  [[nodiscard]] fs::path events_path() const { return data_dir_ / "events.jsonl"; }
  [[nodiscard]] const StoreOptions& options() const noexcept { return options_; }

  [[nodiscard]] Manifest manifest() const;
  void set_last_event_seq(std::int64_t seq);

  /// Create when `expected_revision` is empty (doc.revision must be 1),
  /// otherwise replace revision `expected` with doc.revision == expected + 1.
  /// Returns the new revision. Throws StaleRevision{current_revision},
  /// AlreadyExists, NotFound.
  std::int64_t compare_and_put(Collection c, const Json& doc,
                               std::optional<std::int64_t> expected_revision,
                               const CommitCallback& on_commit = {});

  [[nodiscard]] Json get(Collection c, std::string_view id) const;
  [[nodiscard]] std::optional<Json> find(Collection c, std::string_view id) const;

  template <typename T>
  [[nodiscard]] T get_as(Collection c, std::string_view id) const {
    return decode<T>(get(c, id));
  }

  /// Ordered by (created_at, id). Throws BadPage unless limit in [1, 500].
  [[nodiscard]] ListResult list(Collection c, const TaskFilter& filter, Page page) const;

  /// Every document of the collection, ordered by (created_at, id).
  [[nodiscard]] std::vector<Json> scan(Collection c) const;

  void hard_delete(Collection c, std::string_view id, std::optional<std::int64_t> expected_revision,
                   const CommitCallback& on_commit = {});

  BlobRef put_blob(std::span<const std::uint8_t> bytes);
  [[nodiscard]] std::vector<std::uint8_t> get_blob(std::string_view content_hash) const;
  [[nodiscard]] bool has_blob(std::string_view content_hash) const;

  /// Re-hashes every blob; returns the paths whose content does not match.
  [[nodiscard]] std::vector<fs::path> verify_blobs() const;

  /// gzip'd tar of the whole data directory, taken while writers are paused.
  void export_snapshot(const fs::path& out) const;

  /// Populates an empty data directory from an archive produced by
  /// export_snapshot. Throws NotEmpty or BadArchive. Open the directory
  /// afterwards to use it.
  static void import_snapshot(const fs::path& data_dir, const fs::path& archive);

  /// True when the directory holds any document, blob or event.
  [[nodiscard]] static bool holds_data(const fs::path& data_dir);

  /// Shared for the duration of any write; exclusive for snapshot export.
  [[nodiscard]] std::shared_lock<std::shared_mutex> write_guard() const {
    return std::shared_lock(snapshot_mutex_);
  }

  template <typename T>
  [[nodiscard]] static T decode(const Json& doc) {
    try {
      return doc.get<T>();
    } catch (const Json::exception& e) {
      fail(Errc::CorruptDocument, std::string("document does not match schema: ") + e.what());
    } catch (const Error& e) {
      fail(Errc::CorruptDocument, std::string("document does not match schema: ") + e.what());
    }
  }

private:
  Store(fs::path data_dir, StoreOptions options);

  [[nodiscard]] fs::path doc_path(Collection c, std::string_view id) const;
  [[nodiscard]] fs::path blob_path(std::string_view hash) const;
  [[nodiscard]] std::mutex& lock_for(Collection c, std::string_view id) const;
  [[nodiscard]] fsutil::WriteOptions write_options() const;
  [[nodiscard]] std::optional<Json> load(const fs::path& path) const;
  void write_manifest(const Manifest& m);

  fs::path data_dir_;
  StoreOptions options_;

  mutable std::mutex manifest_mutex_;
  Manifest manifest_;

  mutable std::shared_mutex snapshot_mutex_;
  mutable std::array<std::mutex, 64> doc_locks_;
  mutable std::mutex blob_mutex_;
};

}  // namespace wms
