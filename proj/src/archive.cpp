#include "wms/archive.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstring>

#include <zlib.h>

#include "wms/error.hpp"
#include "wms/fsutil.hpp"

namespace wms::archive {

namespace {

constexpr std::size_t kBlock = 512;

void put_octal(char* field, std::size_t width, std::uint64_t value) {
  // width-1 digits followed by NUL
  std::snprintf(field, width, "%0*llo", static_cast<int>(width - 1),
                static_cast<unsigned long long>(value));
}

std::array<char, kBlock> make_header(const Entry& e) {
  std::array<char, kBlock> h{};
  std::string name = e.path;
  if (e.is_directory) name += '/';
  if (name.size() >= 100) fail(Errc::BadArchive, "archive path too long: " + name);
  std::memcpy(h.data(), name.data(), name.size());
  put_octal(h.data() + 100, 8, e.is_directory ? 0755 : 0644);
  put_octal(h.data() + 108, 8, 0);
  put_octal(h.data() + 116, 8, 0);
  put_octal(h.data() + 124, 12, e.is_directory ? 0 : e.data.size());
  put_octal(h.data() + 136, 12, 0);
  h[156] = e.is_directory ? '5' : '0';
  std::memcpy(h.data() + 257, "ustar", 6);
  std::memcpy(h.data() + 263, "00", 2);

  std::memset(h.data() + 148, ' ', 8);
  unsigned sum = 0;
  for (char c : h) sum += static_cast<unsigned char>(c);
  std::snprintf(h.data() + 148, 7, "%06o", sum);
  h[154] = '\0';
  h[155] = ' ';
  return h;
}

std::uint64_t read_octal(const char* field, std::size_t width) {
  std::uint64_t v = 0;
  std::size_t i = 0;
  while (i < width && field[i] == ' ') ++i;
  for (; i < width && field[i] >= '0' && field[i] <= '7'; ++i) v = v * 8 + (field[i] - '0');
  if (i < width && field[i] != '\0' && field[i] != ' ') {
    fail(Errc::BadArchive, "bad octal field in tar header");
  }
  return v;
}

std::string gzip(std::string_view raw) {
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    fail(Errc::Io, "deflateInit2 failed");
  }
  std::string out;
  std::array<char, 1 << 16> buf{};
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(raw.data()));
  zs.avail_in = static_cast<uInt>(raw.size());
  int rc = Z_OK;
  do {
    zs.next_out = reinterpret_cast<Bytef*>(buf.data());
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = deflate(&zs, Z_FINISH);
    out.append(buf.data(), buf.size() - zs.avail_out);
  } while (rc == Z_OK);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) fail(Errc::Io, "deflate failed");
  return out;
}

std::string gunzip(std::string_view packed) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) fail(Errc::Io, "inflateInit2 failed");
  std::string out;
  std::array<char, 1 << 16> buf{};
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(packed.data()));
  zs.avail_in = static_cast<uInt>(packed.size());
  int rc = Z_OK;
  while (rc == Z_OK) {
    zs.next_out = reinterpret_cast<Bytef*>(buf.data());
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    out.append(buf.data(), buf.size() - zs.avail_out);
    if (rc == Z_BUF_ERROR && zs.avail_in == 0) break;
  }
  const bool trailing = zs.avail_in != 0;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || trailing) fail(Errc::BadArchive, "archive is not a valid gzip stream");
  return out;
}

}  // namespace

void write_tar_gz(const std::filesystem::path& out, const std::vector<Entry>& entries) {
  std::string tar;
  for (const auto& e : entries) {
    const auto h = make_header(e);
    tar.append(h.data(), h.size());
    if (!e.is_directory) {
      tar += e.data;
      tar.append((kBlock - e.data.size() % kBlock) % kBlock, '\0');
    }
  }
  tar.append(2 * kBlock, '\0');
  fsutil::write_atomic(out, gzip(tar), {});
}

std::vector<Entry> read_tar_gz(const std::filesystem::path& in) {
  auto packed = fsutil::read_file(in);
  if (!packed) fail(Errc::BadArchive, "archive not found: " + in.string());
  const std::string tar = gunzip(*packed);

  std::vector<Entry> entries;
  std::size_t pos = 0;
  while (true) {
    if (pos + kBlock > tar.size()) fail(Errc::BadArchive, "truncated tar stream");
    const char* h = tar.data() + pos;
    if (std::all_of(h, h + kBlock, [](char c) { return c == '\0'; })) break;

    unsigned sum = 0;
    for (std::size_t i = 0; i < kBlock; ++i) {
      sum += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(h[i]);
    }
    if (read_octal(h + 148, 8) != sum) fail(Errc::BadArchive, "tar header checksum mismatch");

    Entry e;
    e.path.assign(h, strnlen(h, 100));
    const char type = h[156];
    const auto size = read_octal(h + 124, 12);
    pos += kBlock;
    if (type == '5') {
      e.is_directory = true;
      while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
    } else if (type == '0' || type == '\0') {
      if (pos + size > tar.size()) fail(Errc::BadArchive, "truncated tar member");
      e.data.assign(tar.data() + pos, size);
      pos += (size + kBlock - 1) / kBlock * kBlock;
    } else {
      fail(Errc::BadArchive, std::string("unsupported tar entry type '") + type + "'");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace wms::archive
