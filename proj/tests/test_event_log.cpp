#include <doctest.h>

#include "support/test_support.hpp"
#include "wms/fsutil.hpp"

using namespace wms;
using wms::testing::TempDir;

namespace {

StoreOptions fast() {
  StoreOptions o;
  o.sync = false;
  return o;
}

Json doc(const std::string& id, std::int64_t revision = 1) {
  Task t = create_task(id, {"task " + id, "", Priority::Low, {}, std::nullopt},
                       testing::make_user("c"), Timestamp{1000});
  t.revision = revision;
  return t;
}

EventDraft upsert(const std::string& id, const Json& snapshot) {
  return EventDraft{Timestamp{5}, "actor", EntityKind::Task, id, OpKind::Upsert, snapshot};
}

MutationEvent event(std::int64_t seq, const std::string& id, OpKind op = OpKind::Upsert) {
  MutationEvent e;
  e.seq = seq;
  e.entity_id = id;
  e.op_kind = op;
  if (op == OpKind::Upsert) e.snapshot = doc(id, seq);
  return e;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::Io;
}

// Writes through the store and logs, the way the service layer does.
void put(Store& s, EventLog& log, const Json& d, std::optional<std::int64_t> expected) {
  s.compare_and_put(Collection::Tasks, d, expected, [&](const Json& committed) {
    log.append(upsert(d["id"].get<std::string>(), committed));
  });
}

}  // namespace

TEST_CASE("append assigns consecutive seqs and survives reopen") {
  TempDir dir;
  SteppingClock clock(Timestamp{0}, 1);
  {
    auto s = Store::open(dir.path(), fast());
    auto log = EventLog::open(*s, clock);
    CHECK(log->last_seq() == 0);
    CHECK(log->read_since(0).empty());
    put(*s, *log, doc("a"), std::nullopt);
    CHECK(log->last_seq() == 1);
    CHECK(s->manifest().last_event_seq == 1);
    put(*s, *log, doc("a", 2), 1);
  }
  auto s = Store::open(dir.path(), fast());
  auto log = EventLog::open(*s, clock);
  CHECK(log->reconciled() == 0);
  CHECK(log->last_seq() == 2);
  put(*s, *log, doc("b"), std::nullopt);
  CHECK(log->read_since(0).back().seq == 3);
  CHECK(log->read_since(3).empty());
  CHECK(log->read_since(99).empty());
}

TEST_CASE("1000 appends from 8 threads form the exact range 1..1000") {
  TempDir dir;
  SteppingClock clock(Timestamp{0}, 1);
  auto s = Store::open(dir.path(), fast());
  auto log = EventLog::open(*s, clock);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 125; ++i) {
        put(*s, *log, doc("w" + std::to_string(t) + "_" + std::to_string(i)), std::nullopt);
      }
    });
  }
  for (auto& t : threads) t.join();
  const auto events = log->read_since(0);
  REQUIRE(events.size() == 1000);
  for (std::size_t i = 0; i < events.size(); ++i) CHECK(events[i].seq == static_cast<std::int64_t>(i + 1));

  // The file agrees with memory after a reopen.
  log.reset();
  auto again = EventLog::open(*s, clock);
  CHECK(again->read_since(0) == events);
  CHECK(replay(events) == store_state(*s));
}

TEST_CASE("chunked reads concatenate to one full read") {
  TempDir dir;
  SteppingClock clock(Timestamp{0}, 1);
  auto s = Store::open(dir.path(), fast());
  auto log = EventLog::open(*s, clock);
  for (int i = 0; i < 53; ++i) put(*s, *log, doc("c" + std::to_string(i)), std::nullopt);
  std::vector<MutationEvent> chunks;
  std::int64_t after = 0;
  while (true) {
    auto part = log->read_since(after, 7);
    if (part.empty()) break;
    CHECK(part.size() <= 7);
    after = part.back().seq;
    chunks.insert(chunks.end(), part.begin(), part.end());
  }
  CHECK(chunks == log->read_since(0));
}

TEST_CASE("replay folds upserts and deletes") {
  CHECK(replay({}).empty());
  std::vector<MutationEvent> events{event(1, "a"), event(2, "b"), event(3, "a"),
                                    event(4, "b", OpKind::HardDelete)};
  const auto m = replay(events);
  REQUIRE(m.size() == 1);
  CHECK(m.at({EntityKind::Task, "a"}) == doc("a", 3));

  CHECK(code_of([] { (void)replay(std::vector{event(1, "a"), event(3, "b")}); }) == Errc::GapDetected);
  CHECK(code_of([] { (void)replay(std::vector{event(2, "a")}); }) == Errc::GapDetected);
  CHECK(code_of([] { (void)replay(std::vector{event(1, "a"), event(1, "b")}); }) == Errc::OutOfOrder);
  CHECK(code_of([] { (void)replay(std::vector{event(1, "a"), event(2, "b"), event(1, "c")}); }) ==
        Errc::OutOfOrder);
}

TEST_CASE("event json shape") {
  auto e = event(7, "x");
  e.at = Timestamp{1'700'000'000'000};
  const Json j = e;
  CHECK(j["seq"] == 7);
  CHECK(j["at"] == "2023-11-14T22:13:20.000Z");
  CHECK(j["entity_kind"] == "task");
  CHECK(j["op_kind"] == "upsert");
  CHECK(j.get<MutationEvent>() == e);
  const Json d = event(8, "x", OpKind::HardDelete);
  CHECK(d["op_kind"] == "hard_delete");
  CHECK_FALSE(d.contains("snapshot"));
}

TEST_CASE("torn final line is dropped on open") {
  TempDir dir;
  SteppingClock clock(Timestamp{0}, 1);
  {
    auto s = Store::open(dir.path(), fast());
    auto log = EventLog::open(*s, clock);
    put(*s, *log, doc("a"), std::nullopt);
  }
  {
    std::ofstream out(dir / "events.jsonl", std::ios::app | std::ios::binary);
    out << R"({"seq":2,"actor_id":"x","entity)";
  }
  auto s = Store::open(dir.path(), fast());
  auto log = EventLog::open(*s, clock);
  CHECK(log->last_seq() == 1);
  CHECK(fsutil::read_file(dir / "events.jsonl")->back() == '\n');
  put(*s, *log, doc("b"), std::nullopt);
  CHECK(log->last_seq() == 2);
}

TEST_CASE("manifest ahead of the log is a mismatch, behind is repaired") {
  TempDir dir;
  SteppingClock clock(Timestamp{0}, 1);
  {
    auto s = Store::open(dir.path(), fast());
    auto log = EventLog::open(*s, clock);
    put(*s, *log, doc("a"), std::nullopt);
    put(*s, *log, doc("b"), std::nullopt);
  }
  {
    auto s = Store::open(dir.path(), fast());
    s->set_last_event_seq(5);
    CHECK(code_of([&] { (void)EventLog::open(*s, clock); }) == Errc::SeqMismatch);
    s->set_last_event_seq(1);
    auto log = EventLog::open(*s, clock);
    CHECK(s->manifest().last_event_seq == 2);
  }
}

TEST_CASE("a log with a hole is refused") {
  TempDir dir;
  SteppingClock clock(Timestamp{0}, 1);
  auto s = Store::open(dir.path(), fast());
  std::string lines = canonical_dump(Json(event(1, "a"))) + "\n" + canonical_dump(Json(event(3, "a"))) + "\n";
  fsutil::write_atomic(dir / "events.jsonl", lines, {});
  CHECK(code_of([&] { (void)EventLog::open(*s, clock); }) == Errc::SeqMismatch);
}

TEST_CASE("reconciliation appends events for commits that never reached the log") {
  TempDir dir;
  SteppingClock clock(Timestamp{0}, 1);
  bool fail_next = false;
  EventLogOptions opts;
  opts.fail_append = [&] { return std::exchange(fail_next, false); };
  {
    auto s = Store::open(dir.path(), fast());
    auto log = EventLog::open(*s, clock, opts);
    put(*s, *log, doc("a"), std::nullopt);
    put(*s, *log, doc("b"), std::nullopt);
    fail_next = true;
    CHECK(code_of([&] { put(*s, *log, doc("a", 2), 1); }) == Errc::LogWriteFailed);
    fail_next = true;
    CHECK(code_of([&] {
            s->hard_delete(Collection::Tasks, "b", 1, [&](const Json&) {
              log->append(EventDraft{Timestamp{9}, "actor", EntityKind::Task, "b", OpKind::HardDelete, {}});
            });
          }) == Errc::LogWriteFailed);
    // The store moved on without the log.
    CHECK(log->last_seq() == 2);
    CHECK(replay(log->read_since(0)) != store_state(*s));
  }
  auto s = Store::open(dir.path(), fast());
  auto log = EventLog::open(*s, clock);
  CHECK(log->reconciled() == 2);
  const auto events = log->read_since(2);
  REQUIRE(events.size() == 2);
  for (const auto& e : events) CHECK(e.actor_id == kSystemActor);
  CHECK(replay(log->read_since(0)) == store_state(*s));

  auto settled = EventLog::open(*s, clock);
  CHECK(settled->reconciled() == 0);
}

TEST_CASE("subscribers receive events in order") {
  TempDir dir;
  SteppingClock clock(Timestamp{0}, 1);
  auto s = Store::open(dir.path(), fast());
  auto log = EventLog::open(*s, clock);
  auto sub = log->subscribe();
  CHECK(sub->next(std::chrono::milliseconds(1)).status == Subscription::Status::Timeout);
  for (int i = 0; i < 5; ++i) put(*s, *log, doc("s" + std::to_string(i)), std::nullopt);
  for (int i = 1; i <= 5; ++i) {
    auto r = sub->next(std::chrono::milliseconds(100));
    REQUIRE(r.status == Subscription::Status::Event);
    CHECK(r.event.seq == i);
  }
  log->close_subscribers();
  CHECK(sub->next(std::chrono::milliseconds(1)).status == Subscription::Status::Closed);
}

TEST_CASE("a subscriber that falls behind is closed") {
  TempDir dir;
  SteppingClock clock(Timestamp{0}, 1);
  auto s = Store::open(dir.path(), fast());
  EventLogOptions opts;
  opts.subscriber_capacity = 3;
  auto log = EventLog::open(*s, clock, opts);
  auto slow = log->subscribe();
  for (int i = 0; i < 5; ++i) put(*s, *log, doc("o" + std::to_string(i)), std::nullopt);
  CHECK(slow->closed());
  auto fresh = log->subscribe();
  CHECK_FALSE(fresh->closed());
}
