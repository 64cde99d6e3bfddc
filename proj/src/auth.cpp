#include "wms/auth.hpp"

#include <charconv>

#include "wms/error.hpp"

namespace wms::auth {

namespace {

constexpr std::string_view kScrypt = "scrypt";
constexpr std::uint32_t kMaxLog2N = 20;

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::optional<std::uint32_t> parse_param(std::string_view kv, std::string_view key) {
  if (kv.size() <= key.size() + 1 || kv.substr(0, key.size()) != key || kv[key.size()] != '=') {
    return std::nullopt;
  }
  const auto digits = kv.substr(key.size() + 1);
  std::uint32_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  return value;
}

bool params_in_range(const PasswordParams& p) {
  return p.log2_n >= 1 && p.log2_n <= kMaxLog2N && p.r >= 1 && p.r <= 32 && p.p >= 1 &&
         p.p <= 16;
}

void check_plaintext(std::string_view plaintext) {
  const auto n = utf8_length(plaintext);
  if (n < kMinPasswordChars) {
    fail(Errc::PasswordTooShort,
         "password must be at least " + std::to_string(kMinPasswordChars) + " characters");
  }
  if (n > kMaxPasswordChars) {
    fail(Errc::PasswordTooLong,
         "password must be at most " + std::to_string(kMaxPasswordChars) + " characters");
  }
}

crypto::Bytes derive(std::string_view plaintext, const HashRecord& rec, std::size_t len) {
  return crypto::scrypt(plaintext, rec.salt, std::uint64_t{1} << rec.params.log2_n, rec.params.r,
                        rec.params.p, len);
}

std::string signing_input(std::string_view header_b64, std::string_view payload_b64) {
  std::string s;
  s.reserve(header_b64.size() + payload_b64.size() + 1);
  s += header_b64;
  s += '.';
  s += payload_b64;
  return s;
}

void check_key(std::span<const std::uint8_t> key) {
  if (key.size() < kMinKeyBytes) {
    fail(Errc::WeakKey, "token key must be at least " + std::to_string(kMinKeyBytes) + " bytes");
  }
}

Json parse_segment(std::string_view segment, const char* what) {
  auto raw = crypto::base64_decode(segment, true);
  if (!raw) fail(Errc::Malformed, std::string("token ") + what + " is not base64url");
  auto j = Json::parse(raw->begin(), raw->end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    fail(Errc::Malformed, std::string("token ") + what + " is not a JSON object");
  }
  return j;
}

constexpr std::array<std::string_view, kActionCount> kActionNames{
    "task_read",      "task_create",  "task_edit",     "task_trash",     "task_restore",
    "trash_purge",    "asset_upload", "dashboard_read", "user_list",     "user_create",
    "user_edit_role", "user_deactivate", "export_import"};

using Row = std::array<Decision, kActionCount>;
constexpr Decision A = Decision::Allow;
constexpr Decision D = Decision::Deny;

// Columns follow kAllActions order.
constexpr std::array<Row, 2> kPolicy{{
    /* admin */ {A, A, A, A, A, A, A, A, A, A, A, A, A},
    /* user  */ {A, A, A, A, A, D, A, A, A, D, D, D, D},
}};

}  // namespace

// --- HashRecord --------------------------------------------------------------

std::string HashRecord::to_string() const {
  std::string out = "$" + algorithm_id + "$ln=" + std::to_string(params.log2_n) +
                    ",r=" + std::to_string(params.r) + ",p=" + std::to_string(params.p) + "$";
  out += crypto::base64_encode(salt, false, false);
  out += '$';
  out += crypto::base64_encode(digest, false, false);
  return out;
}

std::optional<HashRecord> HashRecord::parse(std::string_view text) {
  const auto parts = split(text, '$');
  if (parts.size() != 5 || !parts[0].empty() || parts[1] != kScrypt) return std::nullopt;
  const auto kv = split(parts[2], ',');
  if (kv.size() != 3) return std::nullopt;
  auto ln = parse_param(kv[0], "ln");
  auto r = parse_param(kv[1], "r");
  auto p = parse_param(kv[2], "p");
  if (!ln || !r || !p) return std::nullopt;
  HashRecord rec;
  rec.algorithm_id = std::string(parts[1]);
  rec.params = PasswordParams{*ln, *r, *p};
  if (!params_in_range(rec.params)) return std::nullopt;
  auto salt = crypto::base64_decode(parts[3], false);
  auto digest = crypto::base64_decode(parts[4], false);
  if (!salt || !digest || salt->size() < kSaltBytes || digest->empty()) return std::nullopt;
  rec.salt = std::move(*salt);
  rec.digest = std::move(*digest);
  return rec;
}

HashRecord hash_password(std::string_view plaintext, RandomSource& random,
                         const PasswordParams& params) {
  check_plaintext(plaintext);
  if (!params_in_range(params)) fail(Errc::InvalidValue, "scrypt parameters out of range");
  HashRecord rec;
  rec.algorithm_id = std::string(kScrypt);
  rec.params = params;
  rec.salt.resize(kSaltBytes);
  random.fill(rec.salt);
  rec.digest = derive(plaintext, rec, kDigestBytes);
  return rec;
}

bool verify_password(std::string_view plaintext, const HashRecord& record) {
  const auto n = utf8_length(plaintext);
  if (n < kMinPasswordChars || n > kMaxPasswordChars) return false;
  if (record.algorithm_id != kScrypt || !params_in_range(record.params)) return false;
  const auto candidate = derive(plaintext, record, record.digest.size());
  return crypto::constant_time_equal(candidate, record.digest);
}

bool verify_password(std::string_view plaintext, std::string_view record) {
  auto parsed = HashRecord::parse(record);
  return parsed && verify_password(plaintext, *parsed);
}

// --- tokens -----------------------------------------------------------------

std::string issue_token(const TokenClaims& claims, std::span<const std::uint8_t> key) {
  check_key(key);
  if (claims.exp <= claims.iat) fail(Errc::InvalidValue, "token exp must be after iat");
  const Json payload{{"sub", claims.sub},
                     {"role", to_string(claims.role)},
                     {"iat", claims.iat},
                     {"exp", claims.exp},
                     {"jti", claims.jti}};
  const auto header_b64 = crypto::base64_encode(crypto::as_bytes(kTokenHeader), true, false);
  const auto payload_b64 =
      crypto::base64_encode(crypto::as_bytes(canonical_dump(payload)), true, false);
  auto input = signing_input(header_b64, payload_b64);
  const auto mac = crypto::hmac_sha256(key, crypto::as_bytes(input));
  input += '.';
  input += crypto::base64_encode(mac, true, false);
  return input;
}

TokenClaims verify_token(std::string_view token, std::span<const std::uint8_t> key,
                         Timestamp now) {
  check_key(key);
  const auto parts = split(token, '.');
  if (parts.size() != 3) fail(Errc::Malformed, "token must have three segments");

  const auto header = parse_segment(parts[0], "header");
  const auto alg = header.find("alg");
  if (alg == header.end() || !alg->is_string()) fail(Errc::Malformed, "token header lacks alg");
  if (alg->get<std::string>() != "HS256") {
    fail(Errc::AlgRejected, "token algorithm " + alg->get<std::string>() + " is not accepted");
  }

  auto signature = crypto::base64_decode(parts[2], true);
  if (!signature) fail(Errc::Malformed, "token signature is not base64url");
  const auto expected =
      crypto::hmac_sha256(key, crypto::as_bytes(signing_input(parts[0], parts[1])));
  if (!crypto::constant_time_equal(expected, *signature)) {
    fail(Errc::BadSignature, "token signature does not verify");
  }

  const auto payload = parse_segment(parts[1], "payload");
  TokenClaims claims;
  try {
    claims.sub = payload.at("sub").get<std::string>();
    auto role = parse_role(payload.at("role").get<std::string>());
    if (!role) fail(Errc::Malformed, "token role is unknown");
    claims.role = *role;
    claims.iat = payload.at("iat").get<std::int64_t>();
    claims.exp = payload.at("exp").get<std::int64_t>();
    claims.jti = payload.at("jti").get<std::string>();
  } catch (const Json::exception&) {
    fail(Errc::Malformed, "token claims are incomplete");
  }
  if (now.millis >= claims.exp * 1000) fail(Errc::Expired, "token has expired");
  return claims;
}

std::string new_token_id(RandomSource& random) {
  std::array<std::uint8_t, 16> raw{};
  random.fill(raw);
  return crypto::hex_encode(raw);
}

// --- policy -------------------------------------------------------------------

std::string_view to_string(Action a) noexcept { return kActionNames[static_cast<std::size_t>(a)]; }

std::optional<Action> parse_action(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kActionCount; ++i) {
    if (kActionNames[i] == s) return static_cast<Action>(i);
  }
  return std::nullopt;
}

Decision authorize(Role role, Action action) noexcept {
  return kPolicy[static_cast<std::size_t>(role)][static_cast<std::size_t>(action)];
}

}  // namespace wms::auth
