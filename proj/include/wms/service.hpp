#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wms/auth.hpp"
#include "wms/dashboard.hpp"
#include "wms/domain.hpp"
#include "wms/error.hpp"
#include "wms/event_log.hpp"
#include "wms/random.hpp"
#include "wms/store.hpp"

namespace wms {

// Error as seen by API clients. Serializes to {"error":{code,message,details?}}.
class ApiError : public std::runtime_error {
public:
  ApiError(int http_status, std::string code, const std::string& message,
           Json details = nullptr)
      : std::runtime_error(message),
        http_status_(http_status),
        code_(std::move(code)),
        details_(std::move(details)) {}

  [[nodiscard]] int http_status() const noexcept { return http_status_; }
  [[nodiscard]] const std::string& code() const noexcept { return code_; }
  [[nodiscard]] const Json& details() const noexcept { return details_; }
  [[nodiscard]] Json body() const;

private:
  int http_status_;
  std::string code_;
  Json details_;
};

/// Fixed mapping from library error codes to wire errors.
[[nodiscard]] ApiError to_api_error(const Error& e);

/// Status for each wire error code; the table is closed.
[[nodiscard]] int status_for_code(std::string_view code) noexcept;

// Store + event log opened together, with reconciliation applied.
class Workspace {
public:
  static std::unique_ptr<Workspace> open(const fs::path& data_dir, const Clock& clock,
                                         StoreOptions store_options = {},
                                         EventLogOptions log_options = {});

  [[nodiscard]] Store& store() noexcept { return *store_; }
  [[nodiscard]] EventLog& log() noexcept { return *log_; }

private:
  std::unique_ptr<Store> store_;
  std::unique_ptr<EventLog> log_;
};

struct ServiceConfig {
  DomainLimits limits;
  std::int64_t token_ttl_seconds = 8 * 3600;
  std::vector<std::uint8_t> token_key;
  auth::PasswordParams password_params;
};

struct LoginResult {
  std::string token;
  auth::TokenClaims claims;
  UserAccount account;
};

struct TaskPage {
  std::vector<Task> items;
  std::size_t total_count = 0;
};

struct UploadResult {
  AssetRef asset;
  Task task;
};

struct AssetContent {
  AssetRef asset;
  std::vector<std::uint8_t> bytes;
};

struct NewAccount {
  std::string name;
  std::string email;
  std::string password;
  Role role = Role::User;
};

struct AccountUpdate {
  std::optional<Role> role;
  std::optional<bool> active;
};

/// Business operations behind the HTTP surface and the CLI.
///
/// Every accepted state change is persisted with compare_and_put and then
/// appended to the event log while the document lock is held, so each change
/// produces exactly one event and per-entity event order matches revision
/// order. Requests that change nothing persist nothing and log nothing.
class Service {
public:
  Service(Store& store, EventLog& log, const Clock& clock, RandomSource& random,
          ServiceConfig config);

  // --- authentication ---
  [[nodiscard]] LoginResult login(std::string_view email, std::string_view password);
  /// Verifies the bearer token and loads the (active) account it names.
  [[nodiscard]] UserAccount authenticate(std::string_view token) const;
  void require(const UserAccount& actor, auth::Action action) const;

  // --- tasks ---
  Task create_task(const UserAccount& actor, const TaskDraft& draft);
  [[nodiscard]] Task get_task(const UserAccount& actor, std::string_view id) const;
  [[nodiscard]] TaskPage list_tasks(const UserAccount& actor, TaskFilter filter, Page page) const;
  Task patch_task(const UserAccount& actor, std::string_view id, const TaskPatch& patch,
                  std::int64_t if_match);
  Task trash_task(const UserAccount& actor, std::string_view id,
                  std::optional<std::int64_t> if_match);
  [[nodiscard]] std::vector<ActivityEntry> task_activity(const UserAccount& actor,
                                                         std::string_view id) const;
  UploadResult upload_asset(const UserAccount& actor, std::string_view task_id,
                            std::string_view filename, std::string_view media_type,
                            std::span<const std::uint8_t> bytes,
                            std::optional<std::int64_t> if_match);
  [[nodiscard]] AssetContent download_asset(const UserAccount& actor,
                                            std::string_view asset_id) const;

  // --- trash ---
  [[nodiscard]] TaskPage list_trash(const UserAccount& actor, Page page) const;
  Task restore_task(const UserAccount& actor, std::string_view id,
                    std::optional<std::int64_t> if_match);
  void purge_task(const UserAccount& actor, std::string_view id,
                  std::optional<std::int64_t> if_match);

  // --- dashboard ---
  [[nodiscard]] dashboard::Summary dashboard_summary(const UserAccount& actor) const;
  [[nodiscard]] std::vector<dashboard::WorkloadRow> dashboard_workload(
      const UserAccount& actor) const;
  [[nodiscard]] dashboard::PriorityBreakdown dashboard_priority(const UserAccount& actor) const;
  [[nodiscard]] std::vector<dashboard::ActivityItem> dashboard_activity(const UserAccount& actor,
                                                                        std::size_t n) const;

  // --- team ---
  [[nodiscard]] std::vector<UserAccount> list_team(const UserAccount& actor) const;
  UserAccount create_account(const UserAccount& actor, const NewAccount& request);
  /// Operator path (CLI). The first account ever created must be an admin.
  UserAccount bootstrap_account(const NewAccount& request);
  UserAccount update_account(const UserAccount& actor, std::string_view id,
                             const AccountUpdate& update, std::optional<std::int64_t> if_match);

  // --- operator ---
  void export_snapshot(const UserAccount& actor, const fs::path& out) const;

  [[nodiscard]] std::vector<Task> all_tasks() const;
  [[nodiscard]] std::vector<UserAccount> all_accounts() const;
  [[nodiscard]] std::optional<UserAccount> find_account(std::string_view id) const;

  [[nodiscard]] const ServiceConfig& config() const noexcept { return config_; }
  [[nodiscard]] Store& store() noexcept { return store_; }
  [[nodiscard]] EventLog& log() noexcept { return log_; }

private:
  template <typename Mutation>
  Task mutate_task(const UserAccount& actor, std::string_view id,
                   std::optional<std::int64_t> if_match, Mutation&& mutation);

  UserAccount insert_account(const std::string& actor_id, const NewAccount& request,
                             bool require_admin_when_empty);
  void put_account(const std::string& actor_id, const UserAccount& before,
                   const UserAccount& after, Timestamp now);
  void validate_assignees(const std::set<std::string>& ids) const;
  [[nodiscard]] Task load_task(std::string_view id) const;
  [[nodiscard]] std::vector<Task> live_tasks() const;

  Store& store_;
  EventLog& log_;
  const Clock& clock_;
  RandomSource& random_;
  ServiceConfig config_;
  std::string dummy_hash_;

  // Serializes account creation and role/active changes (email uniqueness and
  // the last-admin guard are cross-document checks).
  std::mutex accounts_mutex_;
};

}  // namespace wms
