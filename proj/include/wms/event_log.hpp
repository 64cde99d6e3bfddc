#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wms/domain.hpp"
#include "wms/store.hpp"
#include "wms/time.hpp"

namespace wms {

enum class EntityKind : std::uint8_t { Task, User };
enum class OpKind : std::uint8_t { Upsert, HardDelete };

[[nodiscard]] std::string_view to_string(EntityKind k) noexcept;
[[nodiscard]] std::string_view to_string(OpKind k) noexcept;
[[nodiscard]] Collection collection_of(EntityKind k) noexcept;

// One accepted state change. Upserts carry the full post-mutation document.
struct MutationEvent {
  std::int64_t seq = 0;
  Timestamp at;
  std::string actor_id;
  EntityKind entity_kind = EntityKind::Task;
  std::string entity_id;
  OpKind op_kind = OpKind::Upsert;
  std::optional<Json> snapshot;

  friend bool operator==(const MutationEvent&, const MutationEvent&) = default;
};

void to_json(Json& j, const MutationEvent& e);
void from_json(const Json& j, MutationEvent& e);

/// Actor id recorded on events synthesized by the open-time reconciliation.
inline constexpr std::string_view kSystemActor = "system";

// (entity kind, id) -> document.
using EntityMap = std::map<std::pair<EntityKind, std::string>, Json>;

/// Folds events from seq 1. Throws GapDetected when a sequence number is
/// skipped and OutOfOrder when one repeats or decreases.
[[nodiscard]] EntityMap replay(std::span<const MutationEvent> events);

/// Current document state of every collection.
[[nodiscard]] EntityMap store_state(const Store& store);

// Live feed handle. Events appended after subscribe() are queued here in
// order; a subscriber whose queue overflows is closed and must resume by seq.
class Subscription {
public:
  enum class Status { Event, Timeout, Closed };
  struct Result {
    Status status = Status::Timeout;
    MutationEvent event;
  };

  explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

  [[nodiscard]] Result next(std::chrono::milliseconds timeout);
  [[nodiscard]] bool closed() const;
  void close();

private:
  friend class EventLog;
  bool push(const MutationEvent& e);

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<MutationEvent> queue_;
  std::size_t capacity_;
  bool closed_ = false;
};

struct EventLogOptions {
  std::size_t subscriber_capacity = 1024;
  // Test hook: returning true makes the next append fail with LogWriteFailed.
  std::function<bool()> fail_append;
};

struct EventDraft {
  Timestamp at;
  std::string actor_id;
  EntityKind entity_kind = EntityKind::Task;
  std::string entity_id;
  OpKind op_kind = OpKind::Upsert;
  std::optional<Json> snapshot;
};

/// Append-only `events.jsonl`, one canonical JSON event per line.
///
/// open() drops a torn final line, checks the sequence against the manifest
/// (SeqMismatch if the manifest is ahead), and appends reconciliation events
/// for documents whose committed state never reached the log.
class EventLog {
public:
  static std::unique_ptr<EventLog> open(Store& store, const Clock& clock,
                                        EventLogOptions options = {});
  ~EventLog();

  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  /// Assigns seq = last + 1, writes and syncs the line, updates the manifest,
  /// then fans the event out to subscribers.
  MutationEvent append(EventDraft draft);

  [[nodiscard]] std::vector<MutationEvent> read_since(std::int64_t after_seq,
                                                      std::size_t limit = SIZE_MAX) const;
  [[nodiscard]] std::int64_t last_seq() const;

  [[nodiscard]] std::shared_ptr<Subscription> subscribe();

  /// Closes every live subscription; used at shutdown.
  void close_subscribers();

  /// Number of reconciliation events appended by open().
  [[nodiscard]] std::size_t reconciled() const noexcept { return reconciled_; }

private:
  EventLog(Store& store, EventLogOptions options);
  void load();
  void reconcile(const Clock& clock);

  Store& store_;
  EventLogOptions options_;
  int fd_ = -1;
  std::size_t reconciled_ = 0;

  std::mutex append_mutex_;
  mutable std::shared_mutex events_mutex_;
  std::vector<MutationEvent> events_;

  std::mutex subscribers_mutex_;
  std::vector<std::weak_ptr<Subscription>> subscribers_;
};

}  // namespace wms
