#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wms::crypto {

using Bytes = std::vector<std::uint8_t>;

[[nodiscard]] inline std::span<const std::uint8_t> as_bytes(std::string_view s) noexcept {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// SHA-256, lowercase hex (64 chars). The blob store and asset references
/// depend on this exact encoding.
[[nodiscard]] std::string sha256_hex(std::span<const std::uint8_t> data);

[[nodiscard]] std::array<std::uint8_t, 32> hmac_sha256(std::span<const std::uint8_t> key,
                                                       std::span<const std::uint8_t> data);

// scrypt (RFC 7914).
[[nodiscard]] Bytes scrypt(std::string_view password, std::span<const std::uint8_t> salt,
                           std::uint64_t n, std::uint64_t r, std::uint64_t p,
                           std::size_t out_len);

/// Compares in time dependent only on the lengths, never on where the inputs differ.
[[nodiscard]] bool constant_time_equal(std::span<const std::uint8_t> a,
                                       std::span<const std::uint8_t> b) noexcept;

[[nodiscard]] std::string base64_encode(std::span<const std::uint8_t> data, bool url_safe,
                                        bool pad);
[[nodiscard]] std::optional<Bytes> base64_decode(std::string_view text, bool url_safe);

[[nodiscard]] std::string hex_encode(std::span<const std::uint8_t> data);
[[nodiscard]] bool is_hex_digest(std::string_view s) noexcept;

}  // namespace wms::crypto
