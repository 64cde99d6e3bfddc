#include "wms/random.hpp"

#include <array>
#include <stdexcept>

#include <openssl/rand.h>

namespace wms {

namespace {
constexpr char kCrockford[] = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";
}

void SecureRandom::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw std::runtime_error("RAND_bytes failed");
  }
}

void SeededRandom::fill(std::span<std::uint8_t> out) {
  std::lock_guard lock(mutex_);
  std::size_t i = 0;
  while (i < out.size()) {
    std::uint64_t word = engine_();
    for (int b = 0; b < 8 && i < out.size(); ++b, ++i) {
      out[i] = static_cast<std::uint8_t>(word >> (8 * b));
    }
  }
}

std::string make_id(Timestamp ts, RandomSource& random) {
  std::array<std::uint8_t, 16> raw{};
  const auto millis = static_cast<std::uint64_t>(ts.millis) & 0xFFFF'FFFF'FFFFULL;
  for (int i = 0; i < 6; ++i) raw[i] = static_cast<std::uint8_t>(millis >> (8 * (5 - i)));
  random.fill(std::span(raw).subspan(6));

  // 128 bits encoded as 26 symbols of 5 bits, the leading symbol holding 3.
  std::string out(26, '0');
  unsigned __int128 value = 0;
  for (auto byte : raw) value = (value << 8) | byte;
  for (int i = 25; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kCrockford[static_cast<unsigned>(value & 0x1F)];
    value >>= 5;
  }
  return out;
}

bool is_valid_id(std::string_view id) noexcept {
  if (id.size() != 26 || id[0] > '7') return false;
  for (char c : id) {
    bool found = false;
    for (char k : std::string_view(kCrockford)) found = found || k == c;
    if (!found) return false;
  }
  return true;
}

}  // namespace wms
