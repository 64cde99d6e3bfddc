#include "wms/service.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace wms {

namespace {

struct CodeStatus {
  std::string_view code;
  int status;
};

constexpr std::array<CodeStatus, 11> kCodeTable{{
    {"bad_request", 400},
    {"unauthorized", 401},
    {"forbidden", 403},
    {"not_found", 404},
    {"stale_revision", 409},
    {"invalid_state", 409},
    {"already_exists", 409},
    {"payload_too_large", 413},
    {"unsupported_media_type", 415},
    {"validation", 422},
    {"precondition_required", 428},
}};

ApiError make(std::string_view code, const std::string& message, Json details = nullptr) {
  return ApiError(status_for_code(code), std::string(code), message, std::move(details));
}

std::string_view code_for(Errc e) noexcept {
  switch (e) {
    case Errc::EmptyTitle:
    case Errc::TitleTooLong:
    case Errc::DescriptionTooLong:
    case Errc::InvalidValue:
    case Errc::PasswordTooShort:
    case Errc::PasswordTooLong:
    case Errc::BadPage:
      return "validation";
    case Errc::TaskTrashed:
    case Errc::AlreadyTrashed:
    case Errc::NotTrashed:
      return "invalid_state";
    case Errc::AssetTooLarge:
    case Errc::BlobTooLarge:
      return "payload_too_large";
    case Errc::StaleRevision:
      return "stale_revision";
    case Errc::AlreadyExists:
      return "already_exists";
    case Errc::NotFound:
    case Errc::BlobNotFound:
      return "not_found";
    case Errc::BadSignature:
    case Errc::Expired:
    case Errc::Malformed:
    case Errc::AlgRejected:
      return "unauthorized";
    default:
      return "internal";
  }
}

Json field_details(Errc e) {
  switch (e) {
    case Errc::EmptyTitle: return Json{{"title", "must not be empty"}};
    case Errc::TitleTooLong: return Json{{"title", "too long"}};
    case Errc::DescriptionTooLong: return Json{{"description", "too long"}};
    case Errc::PasswordTooShort: return Json{{"password", "too short"}};
    case Errc::PasswordTooLong: return Json{{"password", "too long"}};
    default: return nullptr;
  }
}

}  // namespace

Json ApiError::body() const {
  Json err{{"code", code_}, {"message", what()}};
  if (!details_.is_null()) err["details"] = details_;
  return Json{{"error", std::move(err)}};
}

int status_for_code(std::string_view code) noexcept {
  for (const auto& entry : kCodeTable) {
    if (entry.code == code) return entry.status;
  }
  return 500;
}

ApiError to_api_error(const Error& e) {
  const auto code = code_for(e.code());
  Json details = e.details();
  if (details.is_null()) details = field_details(e.code());
  if (code == "unauthorized") return make(code, "invalid or expired token");
  if (code == "internal") return ApiError(500, "internal", e.what());
  return make(code, e.what(), std::move(details));
}

// --- Workspace ---------------------------------------------------------------

std::unique_ptr<Workspace> Workspace::open(const fs::path& data_dir, const Clock& clock,
                                           StoreOptions store_options,
                                           EventLogOptions log_options) {
  auto ws = std::unique_ptr<Workspace>(new Workspace());
  ws->store_ = Store::open(data_dir, std::move(store_options));
  ws->log_ = EventLog::open(*ws->store_, clock, std::move(log_options));
  return ws;
}

// --- Service -----------------------------------------------------------------

Service::Service(Store& store, EventLog& log, const Clock& clock, RandomSource& random,
                 ServiceConfig config)
    : store_(store), log_(log), clock_(clock), random_(random), config_(std::move(config)) {}

LoginResult Service::login(std::string_view email, std::string_view password) {
  {
    std::lock_guard lock(accounts_mutex_);
    if (dummy_hash_.empty()) {
      dummy_hash_ =
          auth::hash_password("not-a-real-password", random_, config_.password_params).to_string();
    }
  }
  const auto rejected = [] {
    return make("unauthorized", "email or password is incorrect");
  };

  std::optional<UserAccount> account;
  if (auto normalized = normalize_email(email)) {
    for (auto& a : all_accounts()) {
      if (a.email == *normalized) account = std::move(a);
    }
  }
  // Unknown emails still pay for one verification so timing does not reveal them.
  const bool password_ok =
      auth::verify_password(password, account ? account->password_hash : dummy_hash_);
  if (!account || !password_ok || !account->active) throw rejected();

  const auto now_s = clock_.now().millis / 1000;
  auth::TokenClaims claims{account->id, account->role, now_s, now_s + config_.token_ttl_seconds,
                           auth::new_token_id(random_)};
  return LoginResult{auth::issue_token(claims, config_.token_key), claims, std::move(*account)};
}

UserAccount Service::authenticate(std::string_view token) const {
  if (token.empty()) throw make("unauthorized", "missing bearer token");
  auth::TokenClaims claims;
  try {
    claims = auth::verify_token(token, config_.token_key, clock_.now());
  } catch (const Error& e) {
    throw to_api_error(e);
  }
  auto account = find_account(claims.sub);
  if (!account || !account->active) throw make("unauthorized", "account is not active");
  return *account;
}

void Service::require(const UserAccount& actor, auth::Action action) const {
  if (auth::authorize(actor.role, action) == auth::Decision::Deny) {
    throw make("forbidden", "role " + std::string(to_string(actor.role)) + " may not perform " +
                                std::string(auth::to_string(action)));
  }
}

Task Service::load_task(std::string_view id) const {
  return Store::decode<Task>(store_.get(Collection::Tasks, id));
}

std::vector<Task> Service::all_tasks() const {
  std::vector<Task> out;
  for (const auto& doc : store_.scan(Collection::Tasks)) out.push_back(Store::decode<Task>(doc));
  return out;
}

std::vector<Task> Service::live_tasks() const {
  auto tasks = all_tasks();
  std::erase_if(tasks, [](const Task& t) { return t.trashed; });
  return tasks;
}

std::vector<UserAccount> Service::all_accounts() const {
  std::vector<UserAccount> out;
  for (const auto& doc : store_.scan(Collection::Users)) {
    out.push_back(Store::decode<UserAccount>(doc));
  }
  return out;
}

std::optional<UserAccount> Service::find_account(std::string_view id) const {
  auto doc = store_.find(Collection::Users, id);
  if (!doc) return std::nullopt;
  return Store::decode<UserAccount>(*doc);
}

void Service::validate_assignees(const std::set<std::string>& ids) const {
  std::vector<std::string> bad;
  for (const auto& id : ids) {
    auto account = find_account(id);
    if (!account || !account->active) bad.push_back(id);
  }
  if (!bad.empty()) {
    throw make("validation", "assignees must be existing active accounts",
               Json{{"assignee_ids", bad}});
  }
}

template <typename Mutation>
Task Service::mutate_task(const UserAccount& actor, std::string_view id,
                          std::optional<std::int64_t> if_match, Mutation&& mutation) {
  constexpr int kRetries = 5;
  for (int attempt = 0;; ++attempt) {
    const Task current = load_task(id);
    if (if_match && *if_match != current.revision) {
      fail(Errc::StaleRevision,
           "task changed since revision " + std::to_string(*if_match),
           Json{{"current_revision", current.revision}});
    }
    const Timestamp now = clock_.now();
    Task next = mutation(current, now);
    if (next == current) return current;
    try {
      store_.compare_and_put(Collection::Tasks, Json(next), current.revision,
                             [&](const Json& doc) {
                               log_.append(EventDraft{now, actor.id, EntityKind::Task, next.id,
                                                      OpKind::Upsert, doc});
                             });
      return next;
    } catch (const Error& e) {
      // Without a client precondition a concurrent writer just means re-read.
      if (e.code() == Errc::StaleRevision && !if_match && attempt < kRetries) continue;
      throw;
    }
  }
}

Task Service::create_task(const UserAccount& actor, const TaskDraft& draft) {
  require(actor, auth::Action::TaskCreate);
  validate_assignees(draft.assignee_ids);
  const Timestamp now = clock_.now();
  Task task = wms::create_task(make_id(now, random_), draft, actor, now, config_.limits);
  store_.compare_and_put(Collection::Tasks, Json(task), std::nullopt, [&](const Json& doc) {
    log_.append(EventDraft{now, actor.id, EntityKind::Task, task.id, OpKind::Upsert, doc});
  });
  return task;
}

Task Service::get_task(const UserAccount& actor, std::string_view id) const {
  require(actor, auth::Action::TaskRead);
  return load_task(id);
}

TaskPage Service::list_tasks(const UserAccount& actor, TaskFilter filter, Page page) const {
  require(actor, auth::Action::TaskRead);
  filter.trashed = false;
  auto result = store_.list(Collection::Tasks, filter, page);
  TaskPage out{{}, result.total_count};
  for (const auto& doc : result.items) out.items.push_back(Store::decode<Task>(doc));
  return out;
}

Task Service::patch_task(const UserAccount& actor, std::string_view id, const TaskPatch& patch,
                         std::int64_t if_match) {
  require(actor, auth::Action::TaskEdit);
  if (patch.assignee_ids) validate_assignees(*patch.assignee_ids);
  return mutate_task(actor, id, if_match, [&](const Task& current, Timestamp now) {
    return apply_patch(current, patch, actor, now, config_.limits);
  });
}

Task Service::trash_task(const UserAccount& actor, std::string_view id,
                         std::optional<std::int64_t> if_match) {
  require(actor, auth::Action::TaskTrash);
  return mutate_task(actor, id, if_match, [&](const Task& current, Timestamp now) {
    return soft_delete(current, actor, now);
  });
}

std::vector<ActivityEntry> Service::task_activity(const UserAccount& actor,
                                                  std::string_view id) const {
  require(actor, auth::Action::TaskRead);
  return load_task(id).activity;
}

UploadResult Service::upload_asset(const UserAccount& actor, std::string_view task_id,
                                   std::string_view filename, std::string_view media_type,
                                   std::span<const std::uint8_t> bytes,
                                   std::optional<std::int64_t> if_match) {
  require(actor, auth::Action::AssetUpload);
  const Task before = load_task(task_id);
  if (before.trashed) fail(Errc::TaskTrashed, "task " + before.id + " is in the trash");
  if (bytes.size() > config_.limits.asset_size_limit_bytes) {
    fail(Errc::AssetTooLarge,
         "asset exceeds " + std::to_string(config_.limits.asset_size_limit_bytes) + " bytes",
         Json{{"limit_bytes", config_.limits.asset_size_limit_bytes}});
  }
  if (bytes.empty()) throw make("validation", "uploaded file is empty", Json{{"file", "empty"}});

  const auto blob = store_.put_blob(bytes);
  AssetRef ref;
  const Timestamp now = clock_.now();
  ref.id = make_id(now, random_);
  ref.content_hash = blob.content_hash;
  ref.filename = std::string(filename);
  ref.media_type = std::string(media_type);
  ref.size_bytes = blob.size_bytes;
  ref.uploaded_at = now;
  ref.uploaded_by = actor.id;

  Task task = mutate_task(actor, task_id, if_match, [&](const Task& current, Timestamp at) {
    return attach_asset(current, ref, actor, at, config_.limits);
  });
  return UploadResult{std::move(ref), std::move(task)};
}

AssetContent Service::download_asset(const UserAccount& actor, std::string_view asset_id) const {
  require(actor, auth::Action::TaskRead);
  for (const auto& task : all_tasks()) {
    for (const auto& ref : task.asset_refs) {
      if (ref.id == asset_id) return AssetContent{ref, store_.get_blob(ref.content_hash)};
    }
  }
  fail(Errc::NotFound, "asset " + std::string(asset_id) + " not found");
}

TaskPage Service::list_trash(const UserAccount& actor, Page page) const {
  require(actor, auth::Action::TaskRead);
  TaskFilter filter;
  filter.trashed = true;
  auto result = store_.list(Collection::Tasks, filter, page);
  TaskPage out{{}, result.total_count};
  for (const auto& doc : result.items) out.items.push_back(Store::decode<Task>(doc));
  return out;
}

Task Service::restore_task(const UserAccount& actor, std::string_view id,
                           std::optional<std::int64_t> if_match) {
  require(actor, auth::Action::TaskRestore);
  return mutate_task(actor, id, if_match, [&](const Task& current, Timestamp now) {
    return restore(current, actor, now);
  });
}

void Service::purge_task(const UserAccount& actor, std::string_view id,
                         std::optional<std::int64_t> if_match) {
  require(actor, auth::Action::TrashPurge);
  const Task current = load_task(id);
  if (!current.trashed) fail(Errc::NotTrashed, "only trashed tasks can be purged");
  const Timestamp now = clock_.now();
  // Pinning the revision read above keeps a concurrent restore from being purged.
  store_.hard_delete(Collection::Tasks, id, if_match.value_or(current.revision),
                     [&](const Json&) {
                       log_.append(EventDraft{now, actor.id, EntityKind::Task, current.id,
                                              OpKind::HardDelete, std::nullopt});
                     });
}

dashboard::Summary Service::dashboard_summary(const UserAccount& actor) const {
  require(actor, auth::Action::DashboardRead);
  return dashboard::summary(all_tasks());
}

std::vector<dashboard::WorkloadRow> Service::dashboard_workload(const UserAccount& actor) const {
  require(actor, auth::Action::DashboardRead);
  return dashboard::workload_by_assignee(all_tasks(), all_accounts());
}

dashboard::PriorityBreakdown Service::dashboard_priority(const UserAccount& actor) const {
  require(actor, auth::Action::DashboardRead);
  return dashboard::priority_breakdown(all_tasks());
}

std::vector<dashboard::ActivityItem> Service::dashboard_activity(const UserAccount& actor,
                                                                 std::size_t n) const {
  require(actor, auth::Action::DashboardRead);
  return dashboard::recent_activity(live_tasks(), n);
}

std::vector<UserAccount> Service::list_team(const UserAccount& actor) const {
  require(actor, auth::Action::UserList);
  return all_accounts();
}

UserAccount Service::create_account(const UserAccount& actor, const NewAccount& request) {
  require(actor, auth::Action::UserCreate);
  return insert_account(actor.id, request, false);
}

UserAccount Service::bootstrap_account(const NewAccount& request) {
  return insert_account(std::string(kSystemActor), request, true);
}

UserAccount Service::insert_account(const std::string& actor_id, const NewAccount& request,
                                    bool require_admin_when_empty) {
  std::lock_guard lock(accounts_mutex_);
  auto email = normalize_email(request.email);
  if (!email) throw make("validation", "email is not valid", Json{{"email", "invalid"}});
  const auto existing = all_accounts();
  for (const auto& a : existing) {
    if (a.email == *email) {
      fail(Errc::AlreadyExists, "an account with email " + *email + " already exists",
           Json{{"email", "taken"}});
    }
  }
  if (require_admin_when_empty && existing.empty() && request.role != Role::Admin) {
    throw make("validation", "the first account must have the admin role",
               Json{{"role", "first account must be admin"}});
  }
  auto hash = auth::hash_password(request.password, random_, config_.password_params);
  const Timestamp now = clock_.now();
  UserAccount account = wms::create_account(make_id(now, random_), request.name, *email,
                                            request.role, hash.to_string(), now);
  store_.compare_and_put(Collection::Users, Json(account), std::nullopt, [&](const Json& doc) {
    log_.append(EventDraft{now, actor_id, EntityKind::User, account.id, OpKind::Upsert, doc});
  });
  return account;
}

void Service::put_account(const std::string& actor_id, const UserAccount& before,
                          const UserAccount& after, Timestamp now) {
  store_.compare_and_put(Collection::Users, Json(after), before.revision, [&](const Json& doc) {
    log_.append(EventDraft{now, actor_id, EntityKind::User, after.id, OpKind::Upsert, doc});
  });
}

UserAccount Service::update_account(const UserAccount& actor, std::string_view id,
                                    const AccountUpdate& update,
                                    std::optional<std::int64_t> if_match) {
  if (update.role) require(actor, auth::Action::UserEditRole);
  if (update.active) require(actor, auth::Action::UserDeactivate);
  if (!update.role && !update.active) require(actor, auth::Action::UserEditRole);

  std::lock_guard lock(accounts_mutex_);
  auto found = find_account(id);
  if (!found) fail(Errc::NotFound, "account " + std::string(id) + " not found");
  const UserAccount before = *found;
  if (if_match && *if_match != before.revision) {
    fail(Errc::StaleRevision, "account changed since revision " + std::to_string(*if_match),
         Json{{"current_revision", before.revision}});
  }

  UserAccount after = before;
  if (update.role) after = set_role(after, *update.role);
  if (update.active) after = set_active(after, *update.active);
  if (after == before) return before;
  after.revision = before.revision + 1;

  const bool loses_admin = before.active && before.role == Role::Admin &&
                           (!after.active || after.role != Role::Admin);
  if (loses_admin) {
    const auto accounts = all_accounts();
    const auto admins = std::count_if(accounts.begin(), accounts.end(), [](const auto& a) {
      return a.active && a.role == Role::Admin;
    });
    if (admins <= 1) {
      throw make("invalid_state", "cannot demote or deactivate the last active admin");
    }
  }
  put_account(actor.id, before, after, clock_.now());
  return after;
}

void Service::export_snapshot(const UserAccount& actor, const fs::path& out) const {
  require(actor, auth::Action::ExportImport);
  store_.export_snapshot(out);
}

}  // namespace wms
