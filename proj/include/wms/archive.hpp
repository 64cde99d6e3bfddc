#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace wms::archive {

struct Entry {
  std::string path;  // relative, '/'-separated; directories end without '/'
  bool is_directory = false;
  std::string data;

  friend bool operator==(const Entry&, const Entry&) = default;
};

// Deterministic gzip'd ustar: entries are written in the given order with
// zeroed mtime/uid/gid and fixed modes, so identical input yields identical
// bytes.
void write_tar_gz(const std::filesystem::path& out, const std::vector<Entry>& entries);

/// Throws Error{BadArchive} on any gzip or tar framing problem.
[[nodiscard]] std::vector<Entry> read_tar_gz(const std::filesystem::path& in);

}  // namespace wms::archive
