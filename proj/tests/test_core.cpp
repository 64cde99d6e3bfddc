#include <doctest.h>

#include <random>

#include "support/test_support.hpp"
#include "wms/archive.hpp"
#include "wms/crypto.hpp"
#include "wms/fsutil.hpp"

using namespace wms;

TEST_CASE("rfc3339 formatting") {
  CHECK(format_rfc3339(Timestamp{0}) == "1970-01-01T00:00:00.000Z");
  CHECK(format_rfc3339(Timestamp{1'700'000'000'123}) == "2023-11-14T22:13:20.123Z");
  CHECK(format_rfc3339(Timestamp{951'782'400'000}) == "2000-02-29T00:00:00.000Z");
  CHECK(parse_rfc3339("2023-11-14T22:13:20.123Z") == Timestamp{1'700'000'000'123});
  CHECK_FALSE(parse_rfc3339("2023-11-14T22:13:20Z"));
  CHECK_FALSE(parse_rfc3339("2023-13-14T22:13:20.123Z"));

  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    Timestamp ts{static_cast<std::int64_t>(rng() % 4'102'444'800'000ULL)};
    CHECK(parse_rfc3339(format_rfc3339(ts)) == ts);
  }
}

TEST_CASE("calendar dates") {
  CHECK(parse_date("2024-02-29") == CivilDate{2024, 2, 29});
  CHECK_FALSE(parse_date("2023-02-29"));
  CHECK_FALSE(parse_date("2024-04-31"));
  CHECK_FALSE(parse_date("2024-4-30"));
  CHECK(format_date(CivilDate{2024, 1, 5}) == "2024-01-05");
}

TEST_CASE("ids are sortable by time and unique") {
  SeededRandom rnd(3);
  std::set<std::string> seen;
  std::string prev;
  for (std::int64_t ms = 1'000; ms < 1'000 + 500; ++ms) {
    const auto id = make_id(Timestamp{ms * 1000}, rnd);
    CHECK(id.size() == 26);
    CHECK(is_valid_id(id));
    CHECK(id > prev);
    prev = id;
    seen.insert(id);
  }
  CHECK(seen.size() == 500);
  // Known prefix: 48-bit time in Crockford base32.
  CHECK(make_id(Timestamp{0}, rnd).substr(0, 10) == "0000000000");
  CHECK_FALSE(is_valid_id("01HM65JQM022WS3SWMPXFKM6WU!"));
  CHECK_FALSE(is_valid_id("01hm65jqm022ws3swmpxfkm6wt"));

  SeededRandom a(9), b(9);
  CHECK(make_id(Timestamp{5}, a) == make_id(Timestamp{5}, b));
}

TEST_CASE("sha256 and hmac reference vectors") {
  CHECK(crypto::sha256_hex(crypto::as_bytes("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // RFC 4231 test case 2.
  const auto mac = crypto::hmac_sha256(crypto::as_bytes("Jefe"),
                                       crypto::as_bytes("what do ya want for nothing?"));
  CHECK(crypto::hex_encode(mac) ==
        "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
}

TEST_CASE("scrypt reference vector") {
  // RFC 7914 section 12, second vector.
  const auto out = crypto::scrypt("password", crypto::as_bytes("NaCl"), 1024, 8, 16, 64);
  CHECK(crypto::hex_encode(out) ==
        "fdbabe1c9d3472007856e7190d01e9fe7c6ad7cbc8237830e77376634b373162"
        "2eaf30d92e22a3886ff109279d9830dac727afb94a83ee6d8360cbdfa2cc0640");
}

TEST_CASE("base64 variants") {
  const auto b = crypto::as_bytes("any carnal pleas");
  CHECK(crypto::base64_encode(b, false, true) == "YW55IGNhcm5hbCBwbGVhcw==");
  CHECK(crypto::base64_encode(b, false, false) == "YW55IGNhcm5hbCBwbGVhcw");
  const std::uint8_t hi[] = {0xfb, 0xff};
  CHECK(crypto::base64_encode(hi, true, false) == "-_8");
  CHECK(crypto::base64_encode(hi, false, false) == "+/8");
  auto d = crypto::base64_decode("YW55IGNhcm5hbCBwbGVhcw", false);
  REQUIRE(d);
  CHECK(std::string(d->begin(), d->end()) == "any carnal pleas");
  CHECK_FALSE(crypto::base64_decode("-_8", false));
  CHECK_FALSE(crypto::base64_decode("YW9", false));  // nonzero trailing bits
}

TEST_CASE("constant_time_equal") {
  const std::uint8_t a[] = {1, 2, 3}, b[] = {1, 2, 3}, c[] = {1, 2, 4}, d[] = {1, 2};
  CHECK(crypto::constant_time_equal(a, b));
  CHECK_FALSE(crypto::constant_time_equal(a, c));
  CHECK_FALSE(crypto::constant_time_equal(a, d));
  CHECK(crypto::constant_time_equal({}, {}));
}

TEST_CASE("write_atomic leaves old or new content") {
  wms::testing::TempDir dir;
  const auto target = dir / "doc.json";
  fsutil::write_atomic(target, "old", {});
  CHECK(fsutil::read_file(target) == "old");

  for (auto stage : {fsutil::WriteStage::TmpPartial, fsutil::WriteStage::BeforeRename}) {
    fsutil::FaultHook hook = [stage](fsutil::WriteStage s, const fs::path&) {
      if (s == stage) throw fsutil::InjectedFault("boom");
    };
    CHECK_THROWS_AS(fsutil::write_atomic(target, "new-content", {true, &hook}), fsutil::InjectedFault);
    CHECK(fsutil::read_file(target) == "old");
    CHECK(fs::exists(dir / "doc.json.tmp"));
  }
  fsutil::write_atomic(target, "new", {});
  CHECK(fsutil::read_file(target) == "new");
  CHECK_FALSE(fsutil::read_file(dir / "missing"));
}

TEST_CASE("tar.gz roundtrip is deterministic") {
  wms::testing::TempDir dir;
  std::vector<archive::Entry> entries{{"a", true, ""},
                                      {"a/one.json", false, "{}"},
                                      {"b.bin", false, std::string(70'000, '\x01')},
                                      {"empty", false, ""}};
  archive::write_tar_gz(dir / "x.tar.gz", entries);
  archive::write_tar_gz(dir / "y.tar.gz", entries);
  CHECK(fsutil::read_file(dir / "x.tar.gz") == fsutil::read_file(dir / "y.tar.gz"));
  const auto back = archive::read_tar_gz(dir / "x.tar.gz");
  REQUIRE(back.size() == entries.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].path == entries[i].path);
    CHECK(back[i].is_directory == entries[i].is_directory);
    CHECK(back[i].data == entries[i].data);
  }

  auto bytes = *fsutil::read_file(dir / "x.tar.gz");
  fsutil::write_atomic(dir / "cut.tar.gz", bytes.substr(0, bytes.size() / 2), {});
  CHECK_THROWS_AS((void)archive::read_tar_gz(dir / "cut.tar.gz"), Error);
  fsutil::write_atomic(dir / "junk.tar.gz", "not gzip at all", {});
  CHECK_THROWS_AS((void)archive::read_tar_gz(dir / "junk.tar.gz"), Error);
}
