#include <doctest.h>

#include <random>

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

Json task_doc(const std::string& id, std::int64_t created_ms, TaskStatus status = TaskStatus::Todo,
              Priority priority = Priority::Medium, std::set<std::string> assignees = {},
              bool trashed = false, std::int64_t revision = 1) {
  Task t = create_task(id, {"task " + id, "", priority, std::move(assignees), std::nullopt},
                       testing::make_user("creator"), Timestamp{created_ms});
  t.status = status;
  t.trashed = trashed;
  t.revision = revision;
  return t;
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

}  // namespace

TEST_CASE("open initializes an empty directory") {
  TempDir dir;
  auto s = Store::open(dir / "data", fast());
  CHECK(s->manifest() == Manifest{1, 0});
  CHECK(fs::is_directory(dir / "data/tasks"));
  CHECK(fs::is_directory(dir / "data/users"));
  CHECK(fs::is_directory(dir / "data/blobs"));
  CHECK(fs::exists(dir / "data/events.jsonl"));
  CHECK_FALSE(Store::holds_data(dir / "data"));
}

TEST_CASE("open removes stray tmp files and keeps committed documents") {
  TempDir dir;
  {
    auto s = Store::open(dir.path(), fast());
    s->compare_and_put(Collection::Tasks, task_doc("a", 1), std::nullopt);
  }
  fsutil::write_atomic(dir / "tasks/a.json.tmp", "{half", {false, nullptr});
  fsutil::write_atomic(dir / "tasks/x.json.tmp", "junk", {false, nullptr});
  auto s = Store::open(dir.path(), fast());
  CHECK_FALSE(fs::exists(dir / "tasks/a.json.tmp"));
  CHECK_FALSE(fs::exists(dir / "tasks/x.json.tmp"));
  CHECK(s->get(Collection::Tasks, "a") == task_doc("a", 1));
}

TEST_CASE("open rejects an unknown manifest version") {
  TempDir dir;
  (void)Store::open(dir.path(), fast());
  fsutil::write_atomic(dir / "manifest.json", R"({"format_version":99,"last_event_seq":0})", {});
  CHECK(code_of([&] { (void)Store::open(dir.path(), fast()); }) == Errc::CorruptManifest);
  fsutil::write_atomic(dir / "manifest.json", "not json", {});
  CHECK(code_of([&] { (void)Store::open(dir.path(), fast()); }) == Errc::CorruptManifest);
}

TEST_CASE("compare_and_put revision protocol") {
  TempDir dir;
  auto s = Store::open(dir.path(), fast());
  CHECK(s->compare_and_put(Collection::Tasks, task_doc("a", 1), std::nullopt) == 1);
  CHECK(code_of([&] { s->compare_and_put(Collection::Tasks, task_doc("a", 1), std::nullopt); }) ==
        Errc::AlreadyExists);
  auto v2 = task_doc("a", 1, TaskStatus::Done, Priority::Medium, {}, false, 2);
  CHECK(s->compare_and_put(Collection::Tasks, v2, 1) == 2);
  CHECK(code_of([&] {
          s->compare_and_put(Collection::Tasks, task_doc("zz", 1, {}, {}, {}, false, 6), 5);
        }) == Errc::NotFound);
  CHECK(code_of([&] { s->compare_and_put(Collection::Tasks, task_doc("a", 1, {}, {}, {}, false, 9), 2); }) ==
        Errc::InvalidValue);
  CHECK(code_of([&] { (void)s->get(Collection::Tasks, "nope"); }) == Errc::NotFound);
  CHECK(code_of([&] { (void)s->get(Collection::Tasks, "../manifest"); }) == Errc::NotFound);
}

TEST_CASE("two writers at the same revision: one wins, one is stale") {
  TempDir dir;
  auto s = Store::open(dir.path(), fast());
  s->compare_and_put(Collection::Tasks, task_doc("a", 1), std::nullopt);
  s->compare_and_put(Collection::Tasks, task_doc("a", 1, {}, {}, {}, false, 2), 1);
  s->compare_and_put(Collection::Tasks, task_doc("a", 1, {}, {}, {}, false, 3), 2);

  const auto read_a = s->get(Collection::Tasks, "a");
  const auto read_b = s->get(Collection::Tasks, "a");
  REQUIRE(read_a["revision"] == 3);
  REQUIRE(read_b["revision"] == 3);
  auto first = task_doc("a", 1, TaskStatus::Done, {}, {}, false, 4);
  auto second = task_doc("a", 1, TaskStatus::InProgress, {}, {}, false, 4);
  CHECK(s->compare_and_put(Collection::Tasks, first, 3) == 4);
  try {
    s->compare_and_put(Collection::Tasks, second, 3);
    FAIL("second writer should be stale");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::StaleRevision);
    CHECK(e.details()["current_revision"] == 4);
  }
  CHECK(s->get(Collection::Tasks, "a") == first);
}

TEST_CASE("concurrent writers on one document never lose an update") {
  TempDir dir;
  auto s = Store::open(dir.path(), fast());
  s->compare_and_put(Collection::Tasks, task_doc("a", 1), std::nullopt);
  std::atomic<int> wins{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 50; ++i) {
        while (true) {
          const auto rev = s->get(Collection::Tasks, "a")["revision"].get<std::int64_t>();
          try {
            s->compare_and_put(Collection::Tasks, task_doc("a", 1, {}, {}, {}, false, rev + 1), rev);
            ++wins;
            break;
          } catch (const Error& e) {
            REQUIRE(e.code() == Errc::StaleRevision);
          }
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(wins == 200);
  CHECK(s->get(Collection::Tasks, "a")["revision"] == 201);
}

TEST_CASE("random put/get/delete against a map oracle") {
  TempDir dir;
  auto s = Store::open(dir.path(), fast());
  std::map<std::string, Json> oracle;
  std::mt19937 rng(42);
  for (int step = 0; step < 100; ++step) {
    const std::string id = "d" + std::to_string(rng() % 8);
    const int op = static_cast<int>(rng() % 3);
    auto it = oracle.find(id);
    if (op == 0) {
      const auto rev = it == oracle.end() ? 1 : it->second["revision"].get<std::int64_t>() + 1;
      auto doc = task_doc(id, step, kAllStatuses[rng() % 3], kAllPriorities[rng() % 3], {}, false, rev);
      s->compare_and_put(Collection::Tasks, doc,
                         it == oracle.end() ? std::nullopt : std::optional<std::int64_t>(rev - 1));
      oracle[id] = doc;
    } else if (op == 1) {
      if (it == oracle.end()) {
        CHECK_FALSE(s->find(Collection::Tasks, id));
      } else {
        CHECK(s->get(Collection::Tasks, id) == it->second);
      }
    } else if (it != oracle.end()) {
      s->hard_delete(Collection::Tasks, id, std::nullopt);
      oracle.erase(it);
    }
  }
  const auto scan = s->scan(Collection::Tasks);
  CHECK(scan.size() == oracle.size());
  for (const auto& doc : scan) CHECK(oracle.at(doc["id"].get<std::string>()) == doc);
}

TEST_CASE("list filters, orders and pages like a brute-force scan") {
  TempDir dir;
  auto s = Store::open(dir.path(), fast());
  CHECK(s->list(Collection::Tasks, {}, {}).items.empty());
  CHECK(s->list(Collection::Tasks, {}, {}).total_count == 0);

  std::mt19937 rng(9);
  std::vector<Json> all;
  for (int i = 0; i < 60; ++i) {
    std::set<std::string> who;
    if (rng() % 2) who.insert("u" + std::to_string(rng() % 3));
    // Repeated created_at values exercise the id tie-break.
    auto doc = task_doc("t" + std::to_string(100 + (rng() % 900)) + "_" + std::to_string(i),
                        static_cast<std::int64_t>(rng() % 20), kAllStatuses[rng() % 3],
                        kAllPriorities[rng() % 3], who, rng() % 4 == 0);
    s->compare_and_put(Collection::Tasks, doc, std::nullopt);
    all.push_back(doc);
  }
  std::sort(all.begin(), all.end(), [](const Json& a, const Json& b) {
    return std::make_pair(a["created_at"].get<std::string>(), a["id"].get<std::string>()) <
           std::make_pair(b["created_at"].get<std::string>(), b["id"].get<std::string>());
  });

  std::vector<TaskFilter> filters{{}, {TaskStatus::Done, {}, {}, {}},
                                  {{}, Priority::High, {}, false},
                                  {{}, {}, "u1", {}},
                                  {TaskStatus::Todo, Priority::Low, "u0", false},
                                  {{}, {}, {}, true}};
  for (const auto& f : filters) {
    std::vector<Json> expected;
    for (const auto& d : all) {
      if (f.status && d["status"] != to_string(*f.status)) continue;
      if (f.priority && d["priority"] != to_string(*f.priority)) continue;
      if (f.trashed && d["trashed"] != *f.trashed) continue;
      if (f.assignee) {
        bool found = false;
        for (const auto& a : d["assignee_ids"]) found = found || a == *f.assignee;
        if (!found) continue;
      }
      expected.push_back(d);
    }
    for (std::size_t offset : {0, 3, 7, 100}) {
      for (std::size_t limit : {1, 5, 500}) {
        const auto r = s->list(Collection::Tasks, f, {offset, limit});
        CHECK(r.total_count == expected.size());
        std::vector<Json> want;
        for (std::size_t i = offset; i < expected.size() && want.size() < limit; ++i) want.push_back(expected[i]);
        CHECK(r.items == want);
      }
    }
  }
  CHECK(code_of([&] { (void)s->list(Collection::Tasks, {}, {0, 0}); }) == Errc::BadPage);
  CHECK(code_of([&] { (void)s->list(Collection::Tasks, {}, {0, 501}); }) == Errc::BadPage);
}

TEST_CASE("list example: 7 of 10 live, first page of 5") {
  TempDir dir;
  auto s = Store::open(dir.path(), fast());
  for (int i = 0; i < 10; ++i) {
    s->compare_and_put(Collection::Tasks, task_doc("t" + std::to_string(i), i, {}, {}, {}, i >= 7),
                       std::nullopt);
  }
  const auto r = s->list(Collection::Tasks, {{}, {}, {}, false}, {0, 5});
  CHECK(r.items.size() == 5);
  CHECK(r.total_count == 7);
  CHECK(s->list(Collection::Tasks, {{}, {}, {}, false}, {7, 5}).items.empty());
}

TEST_CASE("hard_delete leaves siblings byte-identical") {
  TempDir dir;
  auto s = Store::open(dir.path(), fast());
  for (const char* id : {"a", "b", "c"}) s->compare_and_put(Collection::Tasks, task_doc(id, 1), std::nullopt);
  const auto before = testing::tree_contents(dir / "tasks");
  s->hard_delete(Collection::Tasks, "b", 1);
  auto after = testing::tree_contents(dir / "tasks");
  CHECK(after.size() == 2);
  CHECK(after["a.json"] == before.at("a.json"));
  CHECK(after["c.json"] == before.at("c.json"));
  CHECK(code_of([&] { (void)s->get(Collection::Tasks, "b"); }) == Errc::NotFound);
  CHECK(code_of([&] { s->hard_delete(Collection::Tasks, "b", std::nullopt); }) == Errc::NotFound);
  CHECK(code_of([&] { s->hard_delete(Collection::Tasks, "a", 7); }) == Errc::StaleRevision);
}

TEST_CASE("blobs roundtrip across sizes") {
  TempDir dir;
  StoreOptions o = fast();
  o.blob_size_limit = 1 << 20;
  auto s = Store::open(dir.path(), o);
  std::mt19937 rng(77);
  std::vector<std::size_t> sizes{1, 2, 255, 4096, 65537, 1 << 20};
  for (int i = 0; i < 10; ++i) sizes.push_back(1 + rng() % (1 << 20));
  for (auto n : sizes) {
    std::vector<std::uint8_t> bytes(n);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    const auto ref = s->put_blob(bytes);
    CHECK(ref.size_bytes == n);
    CHECK(ref.content_hash == crypto::sha256_hex(bytes));
    CHECK(s->get_blob(ref.content_hash) == bytes);
    CHECK(s->put_blob(bytes) == ref);
  }
  std::vector<std::uint8_t> over((1 << 20) + 1, 1);
  CHECK(code_of([&] { (void)s->put_blob(over); }) == Errc::BlobTooLarge);
  CHECK(code_of([&] { (void)s->get_blob(std::string(64, 'a')); }) == Errc::BlobNotFound);
  CHECK(s->verify_blobs().empty());
}

TEST_CASE("corrupted blob is detected") {
  TempDir dir;
  auto s = Store::open(dir.path(), fast());
  const std::string text = "hello blob";
  const auto ref = s->put_blob(crypto::as_bytes(text));
  const auto path = dir / "blobs" / ref.content_hash.substr(0, 2) / ref.content_hash;
  REQUIRE(fs::exists(path));
  fsutil::write_atomic(path, "hello blub", {false, nullptr});
  CHECK(code_of([&] { (void)s->get_blob(ref.content_hash); }) == Errc::HashMismatch);
  CHECK(s->verify_blobs().size() == 1);
}

TEST_CASE("export then import reproduces every document") {
  TempDir dir;
  auto s = Store::open(dir / "src", fast());
  for (int i = 0; i < 12; ++i) {
    s->compare_and_put(Collection::Tasks, task_doc("t" + std::to_string(i), i), std::nullopt);
  }
  auto u = create_account("u1", "Ann", "ann@example.com", Role::Admin, "$scrypt$x", Timestamp{3});
  s->compare_and_put(Collection::Users, u, std::nullopt);
  const auto blob = s->put_blob(crypto::as_bytes("payload"));
  s->export_snapshot(dir / "snap.tar.gz");

  Store::import_snapshot(dir / "dst", dir / "snap.tar.gz");
  auto d = Store::open(dir / "dst", fast());
  CHECK(d->scan(Collection::Tasks) == s->scan(Collection::Tasks));
  CHECK(d->scan(Collection::Users) == s->scan(Collection::Users));
  CHECK(d->manifest() == s->manifest());
  CHECK(d->get_blob(blob.content_hash) == s->get_blob(blob.content_hash));
  CHECK(testing::tree_contents(dir / "dst") == testing::tree_contents(dir / "src"));

  d->export_snapshot(dir / "snap2.tar.gz");
  CHECK(fsutil::read_file(dir / "snap2.tar.gz") == fsutil::read_file(dir / "snap.tar.gz"));

  CHECK(code_of([&] { Store::import_snapshot(dir / "dst", dir / "snap.tar.gz"); }) == Errc::NotEmpty);
  fsutil::write_atomic(dir / "bad.tar.gz", "garbage", {});
  CHECK(code_of([&] { Store::import_snapshot(dir / "other", dir / "bad.tar.gz"); }) == Errc::BadArchive);
}

TEST_CASE("export of a fresh store is importable") {
  TempDir dir;
  auto s = Store::open(dir / "src", fast());
  s->export_snapshot(dir / "empty.tar.gz");
  Store::import_snapshot(dir / "dst", dir / "empty.tar.gz");
  auto d = Store::open(dir / "dst", fast());
  CHECK(d->scan(Collection::Tasks).empty());
  CHECK(d->manifest() == Manifest{1, 0});
}

TEST_CASE("injected write faults keep the previous version") {
  TempDir dir;
  int armed = -1;
  StoreOptions o = fast();
  o.fault_hook = [&](fsutil::WriteStage stage, const fs::path&) {
    if (armed == static_cast<int>(stage)) throw fsutil::InjectedFault("crash");
  };
  {
    auto s = Store::open(dir.path(), o);
    s->compare_and_put(Collection::Tasks, task_doc("a", 1), std::nullopt);
    armed = 0;
    CHECK_THROWS_AS(s->compare_and_put(Collection::Tasks, task_doc("a", 1, TaskStatus::Done, {}, {}, false, 2), 1),
                    fsutil::InjectedFault);
    CHECK(s->get(Collection::Tasks, "a") == task_doc("a", 1));
  }
  armed = -1;
  auto s = Store::open(dir.path(), o);
  CHECK(s->get(Collection::Tasks, "a") == task_doc("a", 1));
  CHECK_FALSE(fs::exists(dir / "tasks/a.json.tmp"));
}
