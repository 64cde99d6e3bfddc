#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wms/time.hpp"

namespace wms {

using Json = nlohmann::json;

enum class TaskStatus : std::uint8_t { Todo, InProgress, Done };
enum class Priority : std::uint8_t { High, Medium, Low };
enum class Role : std::uint8_t { Admin, User };

enum class ActivityKind : std::uint8_t {
  Created,
  StatusChanged,
  PriorityChanged,
  Assigned,
  AssetAdded,
  Trashed,
  Restored,
  Edited,
};

inline constexpr TaskStatus kAllStatuses[] = {TaskStatus::Todo, TaskStatus::InProgress,
                                              TaskStatus::Done};
inline constexpr Priority kAllPriorities[] = {Priority::High, Priority::Medium, Priority::Low};
inline constexpr Role kAllRoles[] = {Role::Admin, Role::User};

[[nodiscard]] std::string_view to_string(TaskStatus v) noexcept;
[[nodiscard]] std::string_view to_string(Priority v) noexcept;
[[nodiscard]] std::string_view to_string(Role v) noexcept;
[[nodiscard]] std::string_view to_string(ActivityKind v) noexcept;

[[nodiscard]] std::optional<TaskStatus> parse_status(std::string_view s) noexcept;
[[nodiscard]] std::optional<Priority> parse_priority(std::string_view s) noexcept;
[[nodiscard]] std::optional<Role> parse_role(std::string_view s) noexcept;
[[nodiscard]] std::optional<ActivityKind> parse_activity_kind(std::string_view s) noexcept;

/// Display color for a priority label, `#RRGGBB`.
[[nodiscard]] std::string_view priority_color(Priority p) noexcept;

struct DomainLimits {
  std::size_t max_title_chars = 200;
  std::size_t max_description_chars = 10'000;
  std::uint64_t asset_size_limit_bytes = 10 * 1024 * 1024;
};

struct ActivityEntry {
  Timestamp at;
  std::string actor_id;
  ActivityKind kind = ActivityKind::Created;
  std::string detail;

  friend bool operator==(const ActivityEntry&, const ActivityEntry&) = default;
};

struct AssetRef {
  std::string id;
  std::string content_hash;
  std::string filename;
  std::string media_type;
  std::uint64_t size_bytes = 0;
  Timestamp uploaded_at;
  std::string uploaded_by;

  friend bool operator==(const AssetRef&, const AssetRef&) = default;
};

struct Task {
  std::string id;
  std::string title;
  std::string description;
  TaskStatus status = TaskStatus::Todo;
  Priority priority = Priority::Medium;
  std::set<std::string> assignee_ids;
  std::optional<CivilDate> due_date;
  std::vector<AssetRef> asset_refs;
  std::vector<ActivityEntry> activity;
  bool trashed = false;
  Timestamp created_at;
  Timestamp updated_at;
  std::string created_by;
  std::int64_t revision = 1;

  friend bool operator==(const Task&, const Task&) = default;
};

struct UserAccount {
  std::string id;
  std::string name;
  std::string email;
  Role role = Role::User;
  std::string password_hash;
  bool active = true;
  Timestamp created_at;
  std::int64_t revision = 1;

  friend bool operator==(const UserAccount&, const UserAccount&) = default;
};

// Canonical JSON. Field names match the wire format; keys serialize sorted.
void to_json(Json& j, const ActivityEntry& v);
void from_json(const Json& j, ActivityEntry& v);
void to_json(Json& j, const AssetRef& v);
void from_json(const Json& j, AssetRef& v);
void to_json(Json& j, const Task& v);
void from_json(const Json& j, Task& v);
void to_json(Json& j, const UserAccount& v);
void from_json(const Json& j, UserAccount& v);

/// Account view safe to send to clients (no credential material).
[[nodiscard]] Json public_view(const UserAccount& account);

/// Serialized form used for files, the event log and HTTP bodies.
[[nodiscard]] std::string canonical_dump(const Json& j);

// ---------------------------------------------------------------------------
// Task rules. Every function is pure: the caller injects `now` and ids, and
// receives a new value. No-op requests return the input unchanged.

struct TaskDraft {
  std::string title;
  std::string description;
  Priority priority = Priority::Medium;
  std::set<std::string> assignee_ids;
  std::optional<CivilDate> due_date;
};

[[nodiscard]] Task create_task(std::string id, const TaskDraft& draft, const UserAccount& actor,
                               Timestamp now, const DomainLimits& limits = {});

[[nodiscard]] Task transition_status(const Task& task, TaskStatus status,
                                     const UserAccount& actor, Timestamp now);

[[nodiscard]] Task set_priority(const Task& task, Priority priority, const UserAccount& actor,
                                Timestamp now);

[[nodiscard]] Task assign(const Task& task, const std::set<std::string>& assignee_ids,
                          const UserAccount& actor, Timestamp now);

[[nodiscard]] Task soft_delete(const Task& task, const UserAccount& actor, Timestamp now);

[[nodiscard]] Task restore(const Task& task, const UserAccount& actor, Timestamp now);

[[nodiscard]] Task attach_asset(const Task& task, const AssetRef& ref, const UserAccount& actor,
                                Timestamp now, const DomainLimits& limits = {});

// Partial update as sent by a client. Every present field is applied; the
// result carries one activity entry per changed aspect but a single revision
// bump, since it is one accepted mutation.
struct TaskPatch {
  std::optional<std::string> title;
  std::optional<std::string> description;
  std::optional<TaskStatus> status;
  std::optional<Priority> priority;
  std::optional<std::set<std::string>> assignee_ids;
  std::optional<std::optional<CivilDate>> due_date;
};

[[nodiscard]] Task apply_patch(const Task& task, const TaskPatch& patch, const UserAccount& actor,
                               Timestamp now, const DomainLimits& limits = {});

// ---------------------------------------------------------------------------
// Account rules.

[[nodiscard]] std::optional<std::string> normalize_email(std::string_view email);

[[nodiscard]] UserAccount create_account(std::string id, std::string_view name,
                                         std::string_view email, Role role,
                                         std::string password_hash, Timestamp now);

[[nodiscard]] UserAccount set_role(const UserAccount& account, Role role);
[[nodiscard]] UserAccount set_active(const UserAccount& account, bool active);

/// Unicode scalar count of a UTF-8 string (invalid bytes count as one each).
[[nodiscard]] std::size_t utf8_length(std::string_view s) noexcept;

[[nodiscard]] std::string_view trim(std::string_view s) noexcept;

}  // namespace wms
