#include "wms/domain.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "wms/error.hpp"

namespace wms {

namespace {

constexpr std::array<std::string_view, 3> kStatusNames{"todo", "in_progress", "done"};
constexpr std::array<std::string_view, 3> kPriorityNames{"high", "medium", "low"};
constexpr std::array<std::string_view, 3> kPriorityColors{"#D32F2F", "#F9A825", "#388E3C"};
constexpr std::array<std::string_view, 2> kRoleNames{"admin", "user"};
constexpr std::array<std::string_view, 8> kActivityNames{
    "created", "status_changed", "priority_changed", "assigned",
    "asset_added", "trashed", "restored", "edited"};

template <typename E, std::size_t N>
std::optional<E> parse_token(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

std::string arrow(std::string_view from, std::string_view to) {
  std::string out(from);
  out += "\xE2\x86\x92";  // U+2192
  out += to;
  return out;
}

// Next activity timestamp: never earlier than the last entry, keeping the list
// non-decreasing even if the injected clock steps backwards.
Timestamp activity_time(const Task& task, Timestamp now) {
  if (!task.activity.empty() && task.activity.back().at > now) return task.activity.back().at;
  return now;
}

void record(Task& task, const UserAccount& actor, Timestamp now, ActivityKind kind,
            std::string detail) {
  const Timestamp at = activity_time(task, now);
  task.activity.push_back(ActivityEntry{at, actor.id, kind, std::move(detail)});
  task.updated_at = std::max(task.updated_at, at);
}

void require_live(const Task& task) {
  if (task.trashed) fail(Errc::TaskTrashed, "task " + task.id + " is in the trash");
}

std::string validated_title(std::string_view raw, const DomainLimits& limits) {
  const auto title = trim(raw);
  if (title.empty()) fail(Errc::EmptyTitle, "title must not be empty");
  if (utf8_length(title) > limits.max_title_chars) {
    fail(Errc::TitleTooLong,
         "title exceeds " + std::to_string(limits.max_title_chars) + " characters");
  }
  return std::string(title);
}

void validate_description(std::string_view text, const DomainLimits& limits) {
  if (utf8_length(text) > limits.max_description_chars) {
    fail(Errc::DescriptionTooLong,
         "description exceeds " + std::to_string(limits.max_description_chars) + " characters");
  }
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ',';
    out += s;
  }
  return out;
}

std::string assignment_detail(const std::set<std::string>& before,
                              const std::set<std::string>& after) {
  std::vector<std::string> added;
  std::vector<std::string> removed;
  std::set_difference(after.begin(), after.end(), before.begin(), before.end(),
                      std::back_inserter(added));
  std::set_difference(before.begin(), before.end(), after.begin(), after.end(),
                      std::back_inserter(removed));
  std::string detail;
  if (!added.empty()) detail = "added: " + join(added);
  if (!removed.empty()) detail += (detail.empty() ? "" : "; ") + ("removed: " + join(removed));
  return detail;
}

std::string due_text(const std::optional<CivilDate>& d) {
  return d ? format_date(*d) : std::string("none");
}

template <typename T>
T required(const Json& j, const char* key) {
  if (!j.contains(key)) fail(Errc::InvalidValue, std::string("missing field: ") + key);
  return j.at(key).get<T>();
}

Timestamp required_time(const Json& j, const char* key) {
  auto ts = parse_rfc3339(required<std::string>(j, key));
  if (!ts) fail(Errc::InvalidValue, std::string("bad timestamp in field: ") + key);
  return *ts;
}

}  // namespace

std::string_view to_string(TaskStatus v) noexcept { return kStatusNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(Priority v) noexcept { return kPriorityNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(Role v) noexcept { return kRoleNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(ActivityKind v) noexcept {
  return kActivityNames[static_cast<std::size_t>(v)];
}

std::optional<TaskStatus> parse_status(std::string_view s) noexcept {
  return parse_token<TaskStatus>(kStatusNames, s);
}
std::optional<Priority> parse_priority(std::string_view s) noexcept {
  return parse_token<Priority>(kPriorityNames, s);
}
std::optional<Role> parse_role(std::string_view s) noexcept {
  return parse_token<Role>(kRoleNames, s);
}
std::optional<ActivityKind> parse_activity_kind(std::string_view s) noexcept {
  return parse_token<ActivityKind>(kActivityNames, s);
}

std::string_view priority_color(Priority p) noexcept {
  return kPriorityColors[static_cast<std::size_t>(p)];
}

// --- serialization ---------------------------------------------------------

void to_json(Json& j, const ActivityEntry& v) {
  j = Json{{"at", format_rfc3339(v.at)},
           {"actor_id", v.actor_id},
           {"kind", to_string(v.kind)},
           {"detail", v.detail}};
}

void from_json(const Json& j, ActivityEntry& v) {
  v.at = required_time(j, "at");
  v.actor_id = required<std::string>(j, "actor_id");
  auto kind = parse_activity_kind(required<std::string>(j, "kind"));
  if (!kind) fail(Errc::InvalidValue, "unknown activity kind");
  v.kind = *kind;
  v.detail = required<std::string>(j, "detail");
}

void to_json(Json& j, const AssetRef& v) {
  j = Json{{"id", v.id},
           {"content_hash", v.content_hash},
           {"filename", v.filename},
           {"media_type", v.media_type},
           {"size_bytes", v.size_bytes},
           {"uploaded_at", format_rfc3339(v.uploaded_at)},
           {"uploaded_by", v.uploaded_by}};
}

void from_json(const Json& j, AssetRef& v) {
  v.id = required<std::string>(j, "id");
  v.content_hash = required<std::string>(j, "content_hash");
  v.filename = required<std::string>(j, "filename");
  v.media_type = required<std::string>(j, "media_type");
  v.size_bytes = required<std::uint64_t>(j, "size_bytes");
  v.uploaded_at = required_time(j, "uploaded_at");
  v.uploaded_by = required<std::string>(j, "uploaded_by");
}

void to_json(Json& j, const Task& v) {
  j = Json{{"id", v.id},
           {"title", v.title},
           {"description", v.description},
           {"status", to_string(v.status)},
           {"priority", to_string(v.priority)},
           {"assignee_ids", v.assignee_ids},
           {"due_date", v.due_date ? Json(format_date(*v.due_date)) : Json(nullptr)},
           {"asset_refs", v.asset_refs},
           {"activity", v.activity},
           {"trashed", v.trashed},
           {"created_at", format_rfc3339(v.created_at)},
           {"updated_at", format_rfc3339(v.updated_at)},
           {"created_by", v.created_by},
           {"revision", v.revision}};
}

void from_json(const Json& j, Task& v) {
  v.id = required<std::string>(j, "id");
  v.title = required<std::string>(j, "title");
  v.description = required<std::string>(j, "description");
  auto status = parse_status(required<std::string>(j, "status"));
  if (!status) fail(Errc::InvalidValue, "unknown task status");
  v.status = *status;
  auto priority = parse_priority(required<std::string>(j, "priority"));
  if (!priority) fail(Errc::InvalidValue, "unknown priority");
  v.priority = *priority;
  v.assignee_ids = required<std::set<std::string>>(j, "assignee_ids");
  v.due_date.reset();
  if (j.contains("due_date") && !j.at("due_date").is_null()) {
    v.due_date = parse_date(j.at("due_date").get<std::string>());
    if (!v.due_date) fail(Errc::InvalidValue, "bad due_date");
  }
  v.asset_refs = required<std::vector<AssetRef>>(j, "asset_refs");
  v.activity = required<std::vector<ActivityEntry>>(j, "activity");
  v.trashed = required<bool>(j, "trashed");
  v.created_at = required_time(j, "created_at");
  v.updated_at = required_time(j, "updated_at");
  v.created_by = required<std::string>(j, "created_by");
  v.revision = required<std::int64_t>(j, "revision");
  if (v.revision < 1) fail(Errc::InvalidValue, "revision must be positive");
}

void to_json(Json& j, const UserAccount& v) {
  j = Json{{"id", v.id},
           {"name", v.name},
           {"email", v.email},
           {"role", to_string(v.role)},
           {"password_hash", v.password_hash},
           {"active", v.active},
           {"created_at", format_rfc3339(v.created_at)},
           {"revision", v.revision}};
}

void from_json(const Json& j, UserAccount& v) {
  v.id = required<std::string>(j, "id");
  v.name = required<std::string>(j, "name");
  v.email = required<std::string>(j, "email");
  auto role = parse_role(required<std::string>(j, "role"));
  if (!role) fail(Errc::InvalidValue, "unknown role");
  v.role = *role;
  v.password_hash = required<std::string>(j, "password_hash");
  v.active = required<bool>(j, "active");
  v.created_at = required_time(j, "created_at");
  v.revision = required<std::int64_t>(j, "revision");
  if (v.revision < 1) fail(Errc::InvalidValue, "revision must be positive");
}

Json public_view(const UserAccount& account) {
  Json j = account;
  j.erase("password_hash");
  return j;
}

std::string canonical_dump(const Json& j) {
  return j.dump(-1, ' ', false, Json::error_handler_t::strict);
}

// --- task rules ---------------------------------------------------------------

Task create_task(std::string id, const TaskDraft& draft, const UserAccount& actor, Timestamp now,
                 const DomainLimits& limits) {
  Task task;
  task.id = std::move(id);
  task.title = validated_title(draft.title, limits);
  validate_description(draft.description, limits);
  task.description = draft.description;
  task.status = TaskStatus::Todo;
  task.priority = draft.priority;
  task.assignee_ids = draft.assignee_ids;
  task.due_date = draft.due_date;
  task.trashed = false;
  task.created_at = now;
  task.updated_at = now;
  task.created_by = actor.id;
  task.revision = 1;
  task.activity.push_back(ActivityEntry{now, actor.id, ActivityKind::Created, task.title});
  return task;
}

Task transition_status(const Task& task, TaskStatus status, const UserAccount& actor,
                       Timestamp now) {
  require_live(task);
  if (task.status == status) return task;
  Task next = task;
  next.status = status;
  record(next, actor, now, ActivityKind::StatusChanged,
         arrow(to_string(task.status), to_string(status)));
  ++next.revision;
  return next;
}

Task set_priority(const Task& task, Priority priority, const UserAccount& actor, Timestamp now) {
  require_live(task);
  if (task.priority == priority) return task;
  Task next = task;
  next.priority = priority;
  record(next, actor, now, ActivityKind::PriorityChanged,
         arrow(to_string(task.priority), to_string(priority)));
  ++next.revision;
  return next;
}

Task assign(const Task& task, const std::set<std::string>& assignee_ids, const UserAccount& actor,
            Timestamp now) {
  require_live(task);
  if (task.assignee_ids == assignee_ids) return task;
  Task next = task;
  next.assignee_ids = assignee_ids;
  record(next, actor, now, ActivityKind::Assigned,
         assignment_detail(task.assignee_ids, assignee_ids));
  ++next.revision;
  return next;
}

Task soft_delete(const Task& task, const UserAccount& actor, Timestamp now) {
  if (task.trashed) fail(Errc::AlreadyTrashed, "task " + task.id + " is already in the trash");
  Task next = task;
  next.trashed = true;
  record(next, actor, now, ActivityKind::Trashed, "");
  ++next.revision;
  return next;
}

Task restore(const Task& task, const UserAccount& actor, Timestamp now) {
  if (!task.trashed) fail(Errc::NotTrashed, "task " + task.id + " is not in the trash");
  Task next = task;
  next.trashed = false;
  record(next, actor, now, ActivityKind::Restored, "");
  ++next.revision;
  return next;
}

Task attach_asset(const Task& task, const AssetRef& ref, const UserAccount& actor, Timestamp now,
                  const DomainLimits& limits) {
  require_live(task);
  if (ref.size_bytes > limits.asset_size_limit_bytes) {
    fail(Errc::AssetTooLarge, "asset exceeds " + std::to_string(limits.asset_size_limit_bytes) +
                                  " bytes",
         Json{{"limit_bytes", limits.asset_size_limit_bytes}});
  }
  Task next = task;
  next.asset_refs.push_back(ref);
  record(next, actor, now, ActivityKind::AssetAdded, ref.filename);
  ++next.revision;
  return next;
}

Task apply_patch(const Task& task, const TaskPatch& patch, const UserAccount& actor, Timestamp now,
                 const DomainLimits& limits) {
  require_live(task);
  Task next = task;

  std::vector<std::string> edits;
  if (patch.title) {
    auto title = validated_title(*patch.title, limits);
    if (title != next.title) {
      edits.push_back("title");
      next.title = std::move(title);
    }
  }
  if (patch.description) {
    validate_description(*patch.description, limits);
    if (*patch.description != next.description) {
      edits.push_back("description");
      next.description = *patch.description;
    }
  }
  if (patch.due_date && *patch.due_date != next.due_date) {
    edits.push_back("due_date " + arrow(due_text(next.due_date), due_text(*patch.due_date)));
    next.due_date = *patch.due_date;
  }
  if (!edits.empty()) {
    std::string detail;
    for (const auto& e : edits) {
      if (!detail.empty()) detail += "; ";
      detail += e;
    }
    record(next, actor, now, ActivityKind::Edited, std::move(detail));
  }
  if (patch.status && *patch.status != next.status) {
    record(next, actor, now, ActivityKind::StatusChanged,
           arrow(to_string(next.status), to_string(*patch.status)));
    next.status = *patch.status;
  }
  if (patch.priority && *patch.priority != next.priority) {
    record(next, actor, now, ActivityKind::PriorityChanged,
           arrow(to_string(next.priority), to_string(*patch.priority)));
    next.priority = *patch.priority;
  }
  if (patch.assignee_ids && *patch.assignee_ids != next.assignee_ids) {
    record(next, actor, now, ActivityKind::Assigned,
           assignment_detail(next.assignee_ids, *patch.assignee_ids));
    next.assignee_ids = *patch.assignee_ids;
  }

  if (next.activity.size() == task.activity.size()) return task;
  next.revision = task.revision + 1;
  return next;
}

// --- account rules -----------------------------------------------------------

std::optional<std::string> normalize_email(std::string_view email) {
  email = trim(email);
  const auto at = email.find('@');
  if (at == std::string_view::npos || at == 0 || email.find('@', at + 1) != std::string_view::npos) {
    return std::nullopt;
  }
  const auto domain = email.substr(at + 1);
  const auto dot = domain.find('.');
  if (domain.empty() || dot == 0 || dot == std::string_view::npos || domain.back() == '.') {
    return std::nullopt;
  }
  std::string out;
  out.reserve(email.size());
  for (char c : email) {
    const auto u = static_cast<unsigned char>(c);
    if (u <= 0x20 || u == 0x7F) return std::nullopt;
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return out;
}

UserAccount create_account(std::string id, std::string_view name, std::string_view email,
                           Role role, std::string password_hash, Timestamp now) {
  const auto trimmed = trim(name);
  if (trimmed.empty()) fail(Errc::InvalidValue, "name must not be empty");
  auto normalized = normalize_email(email);
  if (!normalized) fail(Errc::InvalidValue, "email is not valid");
  UserAccount account;
  account.id = std::move(id);
  account.name = std::string(trimmed);
  account.email = std::move(*normalized);
  account.role = role;
  account.password_hash = std::move(password_hash);
  account.active = true;
  account.created_at = now;
  account.revision = 1;
  return account;
}

UserAccount set_role(const UserAccount& account, Role role) {
  if (account.role == role) return account;
  UserAccount next = account;
  next.role = role;
  ++next.revision;
  return next;
}

UserAccount set_active(const UserAccount& account, bool active) {
  if (account.active == active) return account;
  UserAccount next = account;
  next.active = active;
  ++next.revision;
  return next;
}

std::size_t utf8_length(std::string_view s) noexcept {
  std::size_t n = 0;
  for (char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string_view trim(std::string_view s) noexcept {
  constexpr std::string_view ws = " \t\r\n\v\f";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

}  // namespace wms
