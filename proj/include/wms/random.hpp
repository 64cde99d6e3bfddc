#pragma once

#include <cstdint>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <string_view>

#include "wms/time.hpp"

namespace wms {

// Byte source for identifiers, salts and token ids.
class RandomSource {
public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;
};

// OS-backed CSPRNG.
class SecureRandom final : public RandomSource {
public:
  void fill(std::span<std::uint8_t> out) override;
};

// Reproducible stream from a fixed seed. Only for seeding demo data and tests.
class SeededRandom final : public RandomSource {
public:
  explicit SeededRandom(std::uint64_t seed) : engine_(seed) {}
  void fill(std::span<std::uint8_t> out) override;

private:
  std::mutex mutex_;
  std::mt19937_64 engine_;
};

/// 26-char Crockford base32 identifier: 48-bit millisecond timestamp followed
/// by 80 random bits, so lexical order follows creation time.
[[nodiscard]] std::string make_id(Timestamp ts, RandomSource& random);

[[nodiscard]] bool is_valid_id(std::string_view id) noexcept;

}  // namespace wms
