#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "wms/crypto.hpp"
#include "wms/domain.hpp"
#include "wms/random.hpp"
#include "wms/time.hpp"

namespace wms::auth {

// ---------------------------------------------------------------------------
// Password hashing.
//
// Records are scrypt-derived and serialized as
//   $scrypt$ln=<log2 N>,r=<r>,p=<p>$<salt b64>$<digest b64>
// with standard base64 alphabet and no padding.

struct PasswordParams {
  std::uint32_t log2_n = 14;
  std::uint32_t r = 8;
  std::uint32_t p = 1;

  friend bool operator==(const PasswordParams&, const PasswordParams&) = default;
};

inline constexpr std::size_t kMinPasswordChars = 8;
inline constexpr std::size_t kMaxPasswordChars = 128;
inline constexpr std::size_t kSaltBytes = 16;
inline constexpr std::size_t kDigestBytes = 32;

struct HashRecord {
  std::string algorithm_id;
  PasswordParams params;
  crypto::Bytes salt;
  crypto::Bytes digest;

  [[nodiscard]] std::string to_string() const;
  [[nodiscard]] static std::optional<HashRecord> parse(std::string_view text);
};

[[nodiscard]] HashRecord hash_password(std::string_view plaintext, RandomSource& random,
                                       const PasswordParams& params = {});

/// False for a wrong password or an unparseable record.
[[nodiscard]] bool verify_password(std::string_view plaintext, const HashRecord& record);
[[nodiscard]] bool verify_password(std::string_view plaintext, std::string_view record);

// ---------------------------------------------------------------------------
// Bearer tokens: RFC 7519 compact JWS, HS256 only. Signed, not encrypted.

struct TokenClaims {
  std::string sub;
  Role role = Role::User;
  std::int64_t iat = 0;  // seconds since epoch
  std::int64_t exp = 0;
  std::string jti;

  friend bool operator==(const TokenClaims&, const TokenClaims&) = default;
};

inline constexpr std::size_t kMinKeyBytes = 32;
inline constexpr std::string_view kTokenHeader = R"({"alg":"HS256","typ":"JWT"})";

[[nodiscard]] std::string issue_token(const TokenClaims& claims,
                                      std::span<const std::uint8_t> key);

/// Returns the claims iff the header names HS256, the signature verifies under
/// `key`, and `now` is before `exp`.
[[nodiscard]] TokenClaims verify_token(std::string_view token, std::span<const std::uint8_t> key,
                                       Timestamp now);

[[nodiscard]] std::string new_token_id(RandomSource& random);

// ---------------------------------------------------------------------------
// Authorization.

enum class Action : std::uint8_t {
  TaskRead,
  TaskCreate,
  TaskEdit,
  TaskTrash,
  TaskRestore,
  TrashPurge,
  AssetUpload,
  DashboardRead,
  UserList,
  UserCreate,
  UserEditRole,
  UserDeactivate,
  ExportImport,
};

inline constexpr std::size_t kActionCount = 13;

inline constexpr std::array<Action, kActionCount> kAllActions{
    Action::TaskRead,      Action::TaskCreate, Action::TaskEdit,     Action::TaskTrash,
    Action::TaskRestore,   Action::TrashPurge, Action::AssetUpload,  Action::DashboardRead,
    Action::UserList,      Action::UserCreate, Action::UserEditRole, Action::UserDeactivate,
    Action::ExportImport};

enum class Decision : std::uint8_t { Deny, Allow };

[[nodiscard]] std::string_view to_string(Action a) noexcept;
[[nodiscard]] std::optional<Action> parse_action(std::string_view s) noexcept;

/// Pure lookup in the role x action matrix.
[[nodiscard]] Decision authorize(Role role, Action action) noexcept;

}  // namespace wms::auth
