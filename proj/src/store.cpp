#include "wms/store.hpp"

#include <algorithm>
#include <regex>

#include "wms/archive.hpp"
#include "wms/crypto.hpp"
#include "wms/error.hpp"

namespace wms {

namespace {

constexpr std::string_view kCollections[] = {"tasks", "users"};

Manifest parse_manifest(const std::string& text) {
  auto j = Json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(Errc::CorruptManifest, "manifest.json is not JSON");
  Manifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.last_event_seq = j.at("last_event_seq").get<std::int64_t>();
  } catch (const Json::exception&) {
    fail(Errc::CorruptManifest, "manifest.json is missing required fields");
  }
  if (m.format_version != kFormatVersion) {
    fail(Errc::CorruptManifest,
         "unsupported manifest format_version " + std::to_string(m.format_version));
  }
  if (m.last_event_seq < 0) fail(Errc::CorruptManifest, "negative last_event_seq");
  return m;
}

std::string dump_manifest(const Manifest& m) {
  return canonical_dump(
             Json{{"format_version", m.format_version}, {"last_event_seq", m.last_event_seq}}) +
         "\n";
}

std::string dump_document(const Json& doc) { return canonical_dump(doc) + "\n"; }

std::int64_t revision_of(const Json& doc) {
  auto it = doc.find("revision");
  if (it == doc.end() || !it->is_number_integer()) {
    fail(Errc::InvalidValue, "document lacks an integer revision");
  }
  return it->get<std::int64_t>();
}

std::string id_of(const Json& doc) {
  auto it = doc.find("id");
  if (it == doc.end() || !it->is_string()) fail(Errc::InvalidValue, "document lacks a string id");
  return it->get<std::string>();
}

bool safe_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
           c == '-' || c == '_';
  });
}

bool matches(const Json& doc, const TaskFilter& f) {
  if (f.status && doc.value("status", "") != to_string(*f.status)) return false;
  if (f.priority && doc.value("priority", "") != to_string(*f.priority)) return false;
  if (f.trashed && doc.value("trashed", false) != *f.trashed) return false;
  if (f.assignee) {
    const auto it = doc.find("assignee_ids");
    if (it == doc.end() || !it->is_array()) return false;
    if (std::find(it->begin(), it->end(), *f.assignee) == it->end()) return false;
  }
  return true;
}

struct SortKey {
  Timestamp created_at;
  std::string id;
  auto operator<=>(const SortKey&) const = default;
};

SortKey sort_key(const Json& doc) {
  const auto created = parse_rfc3339(doc.value("created_at", ""));
  return SortKey{created.value_or(Timestamp{}), doc.value("id", "")};
}

void sort_documents(std::vector<Json>& docs) {
  std::vector<std::pair<SortKey, std::size_t>> keys;
  keys.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) keys.emplace_back(sort_key(docs[i]), i);
  std::sort(keys.begin(), keys.end());
  std::vector<Json> sorted;
  sorted.reserve(docs.size());
  for (const auto& [key, i] : keys) sorted.push_back(std::move(docs[i]));
  docs = std::move(sorted);
}

bool is_tmp(const fs::path& p) { return p.extension() == ".tmp"; }

void remove_orphans(const fs::path& root) {
  std::vector<fs::path> stale;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && is_tmp(entry.path())) stale.push_back(entry.path());
  }
  for (const auto& p : stale) fs::remove(p);
}

// Relative paths allowed inside a snapshot archive.
enum class ArchivePath { Manifest, Events, Dir, Document, Blob, Invalid };

ArchivePath classify(const std::string& path, bool is_dir) {
  static const std::regex doc(R"((tasks|users)/[A-Za-z0-9_-]{1,64}\.json)");
  static const std::regex blob(R"(blobs/([0-9a-f]{2})/([0-9a-f]{64}))");
  static const std::regex blob_dir(R"(blobs/[0-9a-f]{2})");
  if (is_dir) {
    if (path == "tasks" || path == "users" || path == "blobs" || std::regex_match(path, blob_dir)) {
      return ArchivePath::Dir;
    }
    return ArchivePath::Invalid;
  }
  if (path == "manifest.json") return ArchivePath::Manifest;
  if (path == "events.jsonl") return ArchivePath::Events;
  if (std::regex_match(path, doc)) return ArchivePath::Document;
  std::smatch m;
  if (std::regex_match(path, m, blob) && m[2].str().substr(0, 2) == m[1].str()) {
    return ArchivePath::Blob;
  }
  return ArchivePath::Invalid;
}

}  // namespace

std::string_view to_string(Collection c) noexcept {
  return kCollections[static_cast<std::size_t>(c)];
}

Store::Store(fs::path data_dir, StoreOptions options)
    : data_dir_(std::move(data_dir)), options_(std::move(options)) {}

std::unique_ptr<Store> Store::open(const fs::path& data_dir, StoreOptions options) {
  std::error_code ec;
  fs::create_directories(data_dir, ec);
  if (ec) fail(Errc::Io, "cannot create data directory " + data_dir.string() + ": " + ec.message());

  std::unique_ptr<Store> store(new Store(fs::absolute(data_dir), std::move(options)));
  const auto& root = store->data_dir_;
  for (auto name : kCollections) fs::create_directories(root / name);
  fs::create_directories(root / "blobs");
  remove_orphans(root);

  const auto manifest_path = root / "manifest.json";
  if (auto text = fsutil::read_file(manifest_path)) {
    store->manifest_ = parse_manifest(*text);
  } else {
    store->write_manifest(Manifest{});
  }
  if (!fs::exists(store->events_path())) {
    fsutil::write_atomic(store->events_path(), "", store->write_options());
  }
  return store;
}

fsutil::WriteOptions Store::write_options() const {
  return fsutil::WriteOptions{options_.sync, options_.fault_hook ? &options_.fault_hook : nullptr};
}

Manifest Store::manifest() const {
  std::lock_guard lock(manifest_mutex_);
  return manifest_;
}

void Store::set_last_event_seq(std::int64_t seq) {
  std::lock_guard lock(manifest_mutex_);
  Manifest next = manifest_;
  next.last_event_seq = seq;
  write_manifest(next);
}

void Store::write_manifest(const Manifest& m) {
  fsutil::write_atomic(data_dir_ / "manifest.json", dump_manifest(m),
                       fsutil::WriteOptions{options_.sync, nullptr});
  manifest_ = m;
}

fs::path Store::doc_path(Collection c, std::string_view id) const {
  if (!safe_id(id)) fail(Errc::NotFound, "invalid document id");
  return data_dir_ / to_string(c) / (std::string(id) + ".json");
}

fs::path Store::blob_path(std::string_view hash) const {
  return data_dir_ / "blobs" / std::string(hash.substr(0, 2)) / std::string(hash);
}

std::mutex& Store::lock_for(Collection c, std::string_view id) const {
  const auto h = std::hash<std::string_view>{}(id) ^ static_cast<std::size_t>(c);
  return doc_locks_[h % doc_locks_.size()];
}

std::optional<Json> Store::load(const fs::path& path) const {
  auto text = fsutil::read_file(path);
  if (!text) return std::nullopt;
  auto j = Json::parse(*text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    fail(Errc::CorruptDocument, "document " + path.filename().string() + " does not parse");
  }
  if (j.value("id", "") + ".json" != path.filename().string()) {
    fail(Errc::CorruptDocument, "document id does not match file name " + path.string());
  }
  return j;
}

std::int64_t Store::compare_and_put(Collection c, const Json& doc,
                                    std::optional<std::int64_t> expected_revision,
                                    const CommitCallback& on_commit) {
  const auto id = id_of(doc);
  const auto new_revision = revision_of(doc);
  const auto path = doc_path(c, id);

  auto guard = write_guard();
  std::lock_guard lock(lock_for(c, id));
  const auto current = load(path);
  if (!expected_revision) {
    if (current) {
      fail(Errc::AlreadyExists, std::string(to_string(c)) + "/" + id + " already exists");
    }
    if (new_revision != 1) fail(Errc::InvalidValue, "a new document must have revision 1");
  } else {
    if (!current) fail(Errc::NotFound, std::string(to_string(c)) + "/" + id + " not found");
    const auto current_revision = revision_of(*current);
    if (current_revision != *expected_revision) {
      fail(Errc::StaleRevision,
           "expected revision " + std::to_string(*expected_revision) + " but current is " +
               std::to_string(current_revision),
           Json{{"current_revision", current_revision}});
    }
    if (new_revision != *expected_revision + 1) {
      fail(Errc::InvalidValue, "new revision must be expected + 1");
    }
  }
  fsutil::write_atomic(path, dump_document(doc), write_options());
  if (on_commit) on_commit(doc);
  return new_revision;
}

Json Store::get(Collection c, std::string_view id) const {
  auto doc = find(c, id);
  if (!doc) fail(Errc::NotFound, std::string(to_string(c)) + "/" + std::string(id) + " not found");
  return std::move(*doc);
}

std::optional<Json> Store::find(Collection c, std::string_view id) const {
  if (!safe_id(id)) return std::nullopt;
  return load(doc_path(c, id));
}

std::vector<Json> Store::scan(Collection c) const {
  std::vector<Json> docs;
  for (const auto& entry : fs::directory_iterator(data_dir_ / to_string(c))) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    // A concurrent hard_delete may remove the file between listing and reading.
    if (auto doc = load(entry.path())) docs.push_back(std::move(*doc));
  }
  sort_documents(docs);
  return docs;
}

ListResult Store::list(Collection c, const TaskFilter& filter, Page page) const {
  if (page.limit < 1 || page.limit > kMaxPageLimit) {
    fail(Errc::BadPage, "limit must be between 1 and " + std::to_string(kMaxPageLimit),
         Json{{"limit", page.limit}});
  }
  auto docs = scan(c);
  ListResult result;
  for (auto& doc : docs) {
    if (!matches(doc, filter)) continue;
    if (result.total_count >= page.offset && result.items.size() < page.limit) {
      result.items.push_back(std::move(doc));
    }
    ++result.total_count;
  }
  return result;
}

void Store::hard_delete(Collection c, std::string_view id,
                        std::optional<std::int64_t> expected_revision,
                        const CommitCallback& on_commit) {
  const auto path = doc_path(c, id);
  auto guard = write_guard();
  std::lock_guard lock(lock_for(c, id));
  const auto current = load(path);
  if (!current) fail(Errc::NotFound, std::string(to_string(c)) + "/" + std::string(id) + " not found");
  if (expected_revision && revision_of(*current) != *expected_revision) {
    fail(Errc::StaleRevision, "stale revision for delete",
         Json{{"current_revision", revision_of(*current)}});
  }
  if (!fs::remove(path)) fail(Errc::NotFound, "document vanished during delete");
  if (options_.sync) fsutil::sync_directory(path.parent_path());
  if (on_commit) on_commit(*current);
}

BlobRef Store::put_blob(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) fail(Errc::InvalidValue, "blob must not be empty");
  if (bytes.size() > options_.blob_size_limit) {
    fail(Errc::BlobTooLarge,
         "blob exceeds " + std::to_string(options_.blob_size_limit) + " bytes",
         Json{{"limit_bytes", options_.blob_size_limit}});
  }
  BlobRef ref{crypto::sha256_hex(bytes), bytes.size()};
  const auto path = blob_path(ref.content_hash);
  auto guard = write_guard();
  std::lock_guard lock(blob_mutex_);
  if (fs::exists(path)) return ref;
  fs::create_directories(path.parent_path());
  fsutil::write_atomic(
      path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
      write_options());
  return ref;
}

std::vector<std::uint8_t> Store::get_blob(std::string_view content_hash) const {
  if (!crypto::is_hex_digest(content_hash)) fail(Errc::BlobNotFound, "not a content hash");
  auto data = fsutil::read_file(blob_path(content_hash));
  if (!data) fail(Errc::BlobNotFound, "blob " + std::string(content_hash) + " not found");
  std::vector<std::uint8_t> bytes(data->begin(), data->end());
  if (crypto::sha256_hex(bytes) != content_hash) {
    fail(Errc::HashMismatch, "blob " + std::string(content_hash) + " is corrupt");
  }
  return bytes;
}

bool Store::has_blob(std::string_view content_hash) const {
  return crypto::is_hex_digest(content_hash) && fs::exists(blob_path(content_hash));
}

std::vector<fs::path> Store::verify_blobs() const {
  std::vector<fs::path> bad;
  for (const auto& entry : fs::recursive_directory_iterator(data_dir_ / "blobs")) {
    if (!entry.is_regular_file() || is_tmp(entry.path())) continue;
    auto data = fsutil::read_file(entry.path());
    if (!data || crypto::sha256_hex(crypto::as_bytes(*data)) != entry.path().filename().string()) {
      bad.push_back(entry.path());
    }
  }
  std::sort(bad.begin(), bad.end());
  return bad;
}

void Store::export_snapshot(const fs::path& out) const {
  std::unique_lock exclusive(snapshot_mutex_);
  std::vector<archive::Entry> entries;
  for (const auto& entry : fs::recursive_directory_iterator(data_dir_)) {
    if (is_tmp(entry.path())) continue;
    const auto rel = entry.path().lexically_relative(data_dir_).generic_string();
    if (entry.is_directory()) {
      entries.push_back(archive::Entry{rel, true, {}});
    } else if (entry.is_regular_file()) {
      if (classify(rel, false) == ArchivePath::Invalid) continue;
      entries.push_back(archive::Entry{rel, false, fsutil::read_file(entry.path()).value_or("")});
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.path < b.path; });
  archive::write_tar_gz(out, entries);
}

bool Store::holds_data(const fs::path& data_dir) {
  if (!fs::exists(data_dir)) return false;
  for (auto name : {"tasks", "users", "blobs"}) {
    const auto dir = data_dir / name;
    if (!fs::exists(dir)) continue;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (entry.is_regular_file() && !is_tmp(entry.path())) return true;
    }
  }
  const auto events = data_dir / "events.jsonl";
  if (fs::exists(events) && fs::file_size(events) > 0) return true;
  if (auto text = fsutil::read_file(data_dir / "manifest.json")) {
    auto j = Json::parse(*text, nullptr, false);
    if (j.is_discarded() || j.value("last_event_seq", 0) != 0) return true;
  }
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    const auto name = entry.path().filename().string();
    if (name != "tasks" && name != "users" && name != "blobs" && name != "events.jsonl" &&
        name != "manifest.json" && !is_tmp(entry.path())) {
      return true;
    }
  }
  return false;
}

void Store::import_snapshot(const fs::path& data_dir, const fs::path& archive_path) {
  if (holds_data(data_dir)) {
    fail(Errc::NotEmpty, "import target " + data_dir.string() + " already holds data");
  }
  const auto entries = archive::read_tar_gz(archive_path);

  bool has_manifest = false;
  for (const auto& e : entries) {
    const auto kind = classify(e.path, e.is_directory);
    switch (kind) {
      case ArchivePath::Invalid:
        fail(Errc::BadArchive, "unexpected archive member: " + e.path);
      case ArchivePath::Manifest:
        try {
          (void)parse_manifest(e.data);
        } catch (const Error& err) {
          fail(Errc::BadArchive, std::string("archive manifest: ") + err.what());
        }
        has_manifest = true;
        break;
      case ArchivePath::Document: {
        auto j = Json::parse(e.data, nullptr, false);
        const auto stem = fs::path(e.path).stem().string();
        if (j.is_discarded() || !j.is_object() || j.value("id", "") != stem) {
          fail(Errc::BadArchive, "archive document does not parse: " + e.path);
        }
        break;
      }
      case ArchivePath::Blob:
        if (crypto::sha256_hex(crypto::as_bytes(e.data)) != fs::path(e.path).filename().string()) {
          fail(Errc::BadArchive, "archive blob fails its hash: " + e.path);
        }
        break;
      case ArchivePath::Events:
      case ArchivePath::Dir:
        break;
    }
  }
  if (!has_manifest) fail(Errc::BadArchive, "archive has no manifest.json");

  fs::create_directories(data_dir);
  for (auto name : kCollections) fs::create_directories(data_dir / name);
  fs::create_directories(data_dir / "blobs");
  for (const auto& e : entries) {
    const auto target = data_dir / e.path;
    if (e.is_directory) {
      fs::create_directories(target);
    } else {
      fs::create_directories(target.parent_path());
      fsutil::write_atomic(target, e.data, {});
    }
  }
  if (!fs::exists(data_dir / "events.jsonl")) fsutil::write_atomic(data_dir / "events.jsonl", "", {});
}

}  // namespace wms
