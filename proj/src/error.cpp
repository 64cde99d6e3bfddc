#include "wms/error.hpp"

namespace wms {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::EmptyTitle: return "empty_title";
    case Errc::TitleTooLong: return "title_too_long";
    case Errc::DescriptionTooLong: return "description_too_long";
    case Errc::TaskTrashed: return "task_trashed";
    case Errc::AlreadyTrashed: return "already_trashed";
    case Errc::NotTrashed: return "not_trashed";
    case Errc::AssetTooLarge: return "asset_too_large";
    case Errc::InvalidValue: return "invalid_value";
    case Errc::CorruptManifest: return "corrupt_manifest";
    case Errc::SeqMismatch: return "seq_mismatch";
    case Errc::StaleRevision: return "stale_revision";
    case Errc::AlreadyExists: return "already_exists";
    case Errc::NotFound: return "not_found";
    case Errc::CorruptDocument: return "corrupt_document";
    case Errc::BadPage: return "bad_page";
    case Errc::BlobTooLarge: return "blob_too_large";
    case Errc::BlobNotFound: return "blob_not_found";
    case Errc::HashMismatch: return "hash_mismatch";
    case Errc::NotEmpty: return "not_empty";
    case Errc::BadArchive: return "bad_archive";
    case Errc::Io: return "io";
    case Errc::PasswordTooShort: return "password_too_short";
    case Errc::PasswordTooLong: return "password_too_long";
    case Errc::WeakKey: return "weak_key";
    case Errc::BadSignature: return "bad_signature";
    case Errc::Expired: return "expired";
    case Errc::Malformed: return "malformed";
    case Errc::AlgRejected: return "alg_rejected";
    case Errc::LogWriteFailed: return "log_write_failed";
    case Errc::GapDetected: return "gap_detected";
    case Errc::OutOfOrder: return "out_of_order";
  }
  return "unknown";
}

}  // namespace wms
