#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace wms {

enum class Errc : std::uint8_t {
  // domain_core
  EmptyTitle,
  TitleTooLong,
  DescriptionTooLong,
  TaskTrashed,
  AlreadyTrashed,
  NotTrashed,
  AssetTooLarge,
  InvalidValue,
  // store
  CorruptManifest,
  SeqMismatch,
  StaleRevision,
  AlreadyExists,
  NotFound,
  CorruptDocument,
  BadPage,
  BlobTooLarge,
  BlobNotFound,
  HashMismatch,
  NotEmpty,
  BadArchive,
  Io,
  // auth
  PasswordTooShort,
  PasswordTooLong,
  WeakKey,
  BadSignature,
  Expired,
  Malformed,
  AlgRejected,
  // event log
  LogWriteFailed,
  GapDetected,
  OutOfOrder,
};

[[nodiscard]] std::string_view to_string(Errc code) noexcept;

// Every fallible operation in the library throws this. `details` carries
// structured context (e.g. current_revision for StaleRevision).
class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& message, nlohmann::json details = nullptr)
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }
  [[nodiscard]] const nlohmann::json& details() const noexcept { return details_; }

private:
  Errc code_;
  nlohmann::json details_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message,
                              nlohmann::json details = nullptr) {
  throw Error(code, message, std::move(details));
}

}  // namespace wms
