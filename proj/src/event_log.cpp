#include "wms/event_log.hpp"

#include <cerrno>
#include <cstring>

#include <fcntl.h>
#include <unistd.h>

#include "wms/error.hpp"
#include "wms/fsutil.hpp"

namespace wms {

namespace {

constexpr std::string_view kEntityNames[] = {"task", "user"};
constexpr std::string_view kOpNames[] = {"upsert", "hard_delete"};

std::int64_t revision_or_zero(const Json& doc) { return doc.value("revision", std::int64_t{0}); }

}  // namespace

std::string_view to_string(EntityKind k) noexcept { return kEntityNames[static_cast<std::size_t>(k)]; }
std::string_view to_string(OpKind k) noexcept { return kOpNames[static_cast<std::size_t>(k)]; }

Collection collection_of(EntityKind k) noexcept {
  return k == EntityKind::Task ? Collection::Tasks : Collection::Users;
}

void to_json(Json& j, const MutationEvent& e) {
  j = Json{{"seq", e.seq},
           {"at", format_rfc3339(e.at)},
           {"actor_id", e.actor_id},
           {"entity_kind", to_string(e.entity_kind)},
           {"entity_id", e.entity_id},
           {"op_kind", to_string(e.op_kind)}};
  if (e.snapshot) j["snapshot"] = *e.snapshot;
}

void from_json(const Json& j, MutationEvent& e) {
  e.seq = j.at("seq").get<std::int64_t>();
  auto at = parse_rfc3339(j.at("at").get<std::string>());
  if (!at) fail(Errc::InvalidValue, "event has a bad timestamp");
  e.at = *at;
  e.actor_id = j.at("actor_id").get<std::string>();
  const auto kind = j.at("entity_kind").get<std::string>();
  if (kind == "task") {
    e.entity_kind = EntityKind::Task;
  } else if (kind == "user") {
    e.entity_kind = EntityKind::User;
  } else {
    fail(Errc::InvalidValue, "event has an unknown entity_kind");
  }
  e.entity_id = j.at("entity_id").get<std::string>();
  const auto op = j.at("op_kind").get<std::string>();
  if (op == "upsert") {
    e.op_kind = OpKind::Upsert;
  } else if (op == "hard_delete") {
    e.op_kind = OpKind::HardDelete;
  } else {
    fail(Errc::InvalidValue, "event has an unknown op_kind");
  }
  e.snapshot.reset();
  if (auto it = j.find("snapshot"); it != j.end() && !it->is_null()) e.snapshot = *it;
  if (e.op_kind == OpKind::Upsert && !e.snapshot) fail(Errc::InvalidValue, "upsert without snapshot");
}

EntityMap replay(std::span<const MutationEvent> events) {
  EntityMap state;
  std::int64_t expected = 1;
  for (const auto& e : events) {
    if (e.seq < expected) {
      fail(Errc::OutOfOrder, "event seq " + std::to_string(e.seq) + " after " +
                                 std::to_string(expected - 1));
    }
    if (e.seq > expected) {
      fail(Errc::GapDetected, "missing event seq " + std::to_string(expected),
           Json{{"expected", expected}, {"found", e.seq}});
    }
    auto key = std::make_pair(e.entity_kind, e.entity_id);
    if (e.op_kind == OpKind::Upsert) {
      state[key] = e.snapshot.value_or(Json::object());
    } else {
      state.erase(key);
    }
    ++expected;
  }
  return state;
}

EntityMap store_state(const Store& store) {
  EntityMap state;
  for (auto kind : {EntityKind::Task, EntityKind::User}) {
    for (auto& doc : store.scan(collection_of(kind))) {
      auto id = doc.at("id").get<std::string>();
      state.emplace(std::make_pair(kind, std::move(id)), std::move(doc));
    }
  }
  return state;
}

// --- Subscription ------------------------------------------------------------

Subscription::Result Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
  if (!queue_.empty()) {
    Result r{Status::Event, std::move(queue_.front())};
    queue_.pop_front();
    return r;
  }
  return Result{closed_ ? Status::Closed : Status::Timeout, {}};
}

bool Subscription::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

void Subscription::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Subscription::push(const MutationEvent& e) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return false;
    if (queue_.size() >= capacity_) {
      // Slow consumer: drop it rather than block the appender.
      closed_ = true;
      queue_.clear();
    } else {
      queue_.push_back(e);
    }
  }
  cv_.notify_all();
  return true;
}

// --- EventLog ----------------------------------------------------------------

EventLog::EventLog(Store& store, EventLogOptions options)
    : store_(store), options_(std::move(options)) {}

EventLog::~EventLog() {
  close_subscribers();
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<EventLog> EventLog::open(Store& store, const Clock& clock,
                                         EventLogOptions options) {
  std::unique_ptr<EventLog> log(new EventLog(store, std::move(options)));
  log->load();
  log->reconcile(clock);
  return log;
}

void EventLog::load() {
  const auto path = store_.events_path();
  std::string text = fsutil::read_file(path).value_or("");

  // A torn tail (crash mid-append) never reached the manifest; drop it.
  const auto last_newline = text.rfind('\n');
  const std::size_t complete = last_newline == std::string::npos ? 0 : last_newline + 1;
  if (complete != text.size()) {
    if (::truncate(path.c_str(), static_cast<off_t>(complete)) != 0) {
      fail(Errc::Io, "cannot truncate torn event log tail: " + std::string(std::strerror(errno)));
    }
    text.resize(complete);
  }

  std::size_t start = 0;
  std::int64_t expected = 1;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    const auto line = std::string_view(text).substr(start, end - start);
    start = end + 1;
    auto j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) fail(Errc::CorruptDocument, "events.jsonl has an unparseable line");
    MutationEvent e;
    try {
      e = j.get<MutationEvent>();
    } catch (const std::exception& ex) {
      fail(Errc::CorruptDocument, std::string("events.jsonl has an invalid event: ") + ex.what());
    }
    if (e.seq != expected) {
      fail(Errc::SeqMismatch, "events.jsonl sequence breaks at " + std::to_string(expected));
    }
    ++expected;
    events_.push_back(std::move(e));
  }

  const auto log_last = static_cast<std::int64_t>(events_.size());
  const auto manifest_last = store_.manifest().last_event_seq;
  if (manifest_last > log_last) {
    fail(Errc::SeqMismatch,
         "manifest last_event_seq " + std::to_string(manifest_last) +
             " is ahead of the event log (" + std::to_string(log_last) + ")",
         Json{{"manifest", manifest_last}, {"log", log_last}});
  }
  if (manifest_last < log_last) store_.set_last_event_seq(log_last);

  fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) fail(Errc::Io, "cannot open events.jsonl: " + std::string(std::strerror(errno)));
}

void EventLog::reconcile(const Clock& clock) {
  const auto logged = replay(events_);
  const auto current = store_state(store_);

  std::vector<EventDraft> repairs;
  for (const auto& [key, doc] : current) {
    auto it = logged.find(key);
    if (it != logged.end() && it->second == doc) continue;
    if (it != logged.end() && revision_or_zero(it->second) >= revision_or_zero(doc)) {
      fail(Errc::SeqMismatch, "event log is ahead of stored document " + key.second);
    }
    repairs.push_back(EventDraft{clock.now(), std::string(kSystemActor), key.first, key.second,
                                 OpKind::Upsert, doc});
  }
  for (const auto& [key, doc] : logged) {
    if (!current.contains(key)) {
      repairs.push_back(EventDraft{clock.now(), std::string(kSystemActor), key.first, key.second,
                                   OpKind::HardDelete, std::nullopt});
    }
  }
  for (auto& draft : repairs) append(std::move(draft));
  reconciled_ = repairs.size();
}

MutationEvent EventLog::append(EventDraft draft) {
  std::lock_guard serial(append_mutex_);
  MutationEvent e{last_seq() + 1,         draft.at,           std::move(draft.actor_id),
                  draft.entity_kind,       std::move(draft.entity_id), draft.op_kind,
                  std::move(draft.snapshot)};
  if (e.op_kind == OpKind::HardDelete) e.snapshot.reset();

  const std::string line = canonical_dump(Json(e)) + "\n";
  if (options_.fail_append && options_.fail_append()) {
    fail(Errc::LogWriteFailed, "injected event log failure");
  }

  const off_t before = ::lseek(fd_, 0, SEEK_END);
  std::string_view rest = line;
  while (!rest.empty()) {
    const auto n = ::write(fd_, rest.data(), rest.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string reason = std::strerror(errno);
      if (before >= 0) (void)::ftruncate(fd_, before);
      fail(Errc::LogWriteFailed, "event log write failed: " + reason);
    }
    rest.remove_prefix(static_cast<std::size_t>(n));
  }
  if (store_.options().sync && ::fdatasync(fd_) != 0) {
    fail(Errc::LogWriteFailed, "event log sync failed: " + std::string(std::strerror(errno)));
  }

  {
    std::unique_lock lock(events_mutex_);
    events_.push_back(e);
  }
  store_.set_last_event_seq(e.seq);

  std::lock_guard lock(subscribers_mutex_);
  std::erase_if(subscribers_, [&](const std::weak_ptr<Subscription>& weak) {
    auto sub = weak.lock();
    return !sub || !sub->push(e);
  });
  return e;
}

std::vector<MutationEvent> EventLog::read_since(std::int64_t after_seq, std::size_t limit) const {
  std::shared_lock lock(events_mutex_);
  std::vector<MutationEvent> out;
  const auto total = static_cast<std::int64_t>(events_.size());
  const std::int64_t first = std::max<std::int64_t>(after_seq, 0);
  for (std::int64_t i = first; i < total && out.size() < limit; ++i) {
    out.push_back(events_[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::int64_t EventLog::last_seq() const {
  std::shared_lock lock(events_mutex_);
  return static_cast<std::int64_t>(events_.size());
}

std::shared_ptr<Subscription> EventLog::subscribe() {
  auto sub = std::make_shared<Subscription>(options_.subscriber_capacity);
  std::lock_guard lock(subscribers_mutex_);
  subscribers_.push_back(sub);
  return sub;
}

void EventLog::close_subscribers() {
  std::lock_guard lock(subscribers_mutex_);
  for (auto& weak : subscribers_) {
    if (auto sub = weak.lock()) sub->close();
  }
  subscribers_.clear();
}

}  // namespace wms
