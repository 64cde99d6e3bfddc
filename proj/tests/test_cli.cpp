#include <doctest.h>

#include <csignal>
#include <cstdio>
#include <sys/wait.h>
#include <unistd.h>

#include "support/test_support.hpp"

using namespace wms;
using wms::testing::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

// Runs the binary through the shell; stdout is captured, stderr dropped.
Run wms_run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" WMS_BINARY "' " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string in(const TempDir& d) { return "--data-dir " + quoted(d.path()); }

// `wms serve` as a child process with stdout on a pipe.
class Server {
public:
  explicit Server(std::vector<std::string> args) {
    int fds[2];
    REQUIRE(::pipe(fds) == 0);
    pid_ = ::fork();
    REQUIRE(pid_ >= 0);
    if (pid_ == 0) {
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[0]);
      ::close(fds[1]);
      std::vector<char*> argv{const_cast<char*>(WMS_BINARY)};
      for (auto& a : args) argv.push_back(a.data());
      argv.push_back(nullptr);
      ::execv(WMS_BINARY, argv.data());
      ::_exit(127);
    }
    ::close(fds[1]);
    out_ = ::fdopen(fds[0], "r");
  }

  ~Server() {
    if (pid_ > 0 && code_ < 0) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
    if (out_) ::fclose(out_);
  }

  // First stdout line, or empty when the process exits without one.
  std::string first_line() {
    char buf[1024];
    if (!std::fgets(buf, sizeof buf, out_)) return {};
    return buf;
  }

  int wait() {
    int status = 0;
    ::waitpid(pid_, &status, 0);
    code_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    return code_;
  }

  void signal(int sig) { ::kill(pid_, sig); }

private:
  pid_t pid_ = -1;
  int code_ = -1;
  FILE* out_ = nullptr;
};

fs::path secret_in(const TempDir& d) {
  const auto p = d / "secret";
  std::ofstream(p) << std::string(48, 's');
  return p;
}

}  // namespace

TEST_CASE("user-create bootstraps the first admin") {
  TempDir d;
  auto first = wms_run(in(d) + " user-create --name Ann --email ann@example.com --password pw-123456 --role user");
  CHECK(first.code == 1);
  CHECK_FALSE(Store::holds_data(d.path()));

  auto admin = wms_run(in(d) + " --json user-create --name Ann --email Ann@Example.com --password pw-123456 --role admin");
  REQUIRE(admin.code == 0);
  const auto j = Json::parse(admin.out);
  CHECK(j["email"] == "ann@example.com");
  CHECK(j["role"] == "admin");
  CHECK_FALSE(j.contains("password_hash"));

  CHECK(wms_run(in(d) + " user-create --name A2 --email ann@example.com --password pw-123456").code == 1);
  CHECK(wms_run(in(d) + " user-create --name Bo --email bo@example.com --password short").code == 1);
  CHECK(wms_run(in(d) + " user-create --name Bo --email bo@example.com --password pw-123456 --role owner").code != 0);
  CHECK(wms_run(in(d) + " user-create --name Bo --email bo@example.com --password pw-123456").code == 0);

  SteppingClock clock(Timestamp{0}, 1);
  auto ws = Workspace::open(d.path(), clock);
  CHECK(ws->store().scan(Collection::Users).size() == 2);
  CHECK(ws->log().last_seq() == 2);
}

TEST_CASE("seed demo and fixture files") {
  TempDir d;
  auto r = wms_run(in(d) + " --json seed demo");
  REQUIRE(r.code == 0);
  const auto j = Json::parse(r.out);
  CHECK(j["users"] == 3);
  CHECK(j["tasks"] == 12);
  CHECK(j["last_event_seq"] == 27);

  // Never over an existing store.
  CHECK(wms_run(in(d) + " seed demo").code == 1);

  TempDir f;
  std::ofstream(f / "fixture.json") << R"({"users":[{"name":"Root","email":"root@example.com","password":"root-password","role":"admin"}],
    "tasks":[{"title":"One","status":"done","priority":"high","assignees":["root@example.com"]},
             {"title":"Two","status":"todo","priority":"low","due_date":"2025-03-01"}]})";
  TempDir e;
  auto custom = wms_run(in(e) + " --json seed " + quoted(f / "fixture.json"));
  REQUIRE(custom.code == 0);
  CHECK(Json::parse(custom.out)["tasks"] == 2);

  std::ofstream(f / "bad.json") << R"({"users":[{"name":"Root","email":"root@example.com","password":"root-password","role":"admin"}],"tasks":[{"title":"x","status":"todo","priority":"low","assignees":["ghost@example.com"]}]})";
  TempDir g;
  CHECK(wms_run(in(g) + " seed " + quoted(f / "bad.json")).code == 1);
}

TEST_CASE("export and import") {
  TempDir src, dst, tmp;
  REQUIRE(wms_run(in(src) + " seed demo").code == 0);
  const auto archive = tmp / "snap.tar.gz";
  auto ex = wms_run(in(src) + " --json export " + quoted(archive));
  REQUIRE(ex.code == 0);
  CHECK(Json::parse(ex.out)["last_event_seq"] == 27);

  auto im = wms_run(in(dst) + " --json import " + quoted(archive));
  REQUIRE(im.code == 0);
  CHECK(Json::parse(im.out) == Json{{"events", 27}, {"tasks", 12}, {"users", 3}});
  CHECK(testing::tree_contents(dst.path()) == testing::tree_contents(src.path()));

  // Non-empty target, missing archive, garbage archive.
  CHECK(wms_run(in(dst) + " import " + quoted(archive)).code == 1);
  TempDir empty;
  CHECK(wms_run(in(empty) + " import " + quoted(tmp / "missing.tar.gz")).code != 0);
  std::ofstream(tmp / "junk.tar.gz") << "not an archive";
  CHECK(wms_run(in(empty) + " import " + quoted(tmp / "junk.tar.gz")).code == 1);
  CHECK_FALSE(Store::holds_data(empty.path()));
}

TEST_CASE("configuration precedence") {
  TempDir by_env, by_flag, by_file, cfg;
  std::ofstream(cfg / "wms.json") << Json{{"data_dir", by_file.path().string()}}.dump();

  REQUIRE(wms_run("seed demo", "WMS_DATA_DIR=" + quoted(by_env.path())).code == 0);
  CHECK(Store::holds_data(by_env.path()));

  TempDir other;
  REQUIRE(wms_run(in(by_flag) + " seed demo", "WMS_DATA_DIR=" + quoted(other.path())).code == 0);
  CHECK(Store::holds_data(by_flag.path()));
  CHECK_FALSE(Store::holds_data(other.path()));

  REQUIRE(wms_run("--config " + quoted(cfg / "wms.json") + " seed demo").code == 0);
  CHECK(Store::holds_data(by_file.path()));

  CHECK(wms_run("--asset-limit nope seed demo", "WMS_DATA_DIR=" + quoted(other.path())).code != 0);
  CHECK(wms_run("seed demo", "WMS_ASSET_LIMIT=-5 WMS_DATA_DIR=" + quoted(other.path())).code == 1);
}

TEST_CASE("a corrupt manifest exits 3") {
  TempDir d;
  REQUIRE(wms_run(in(d) + " seed demo").code == 0);
  std::ofstream(d / "manifest.json", std::ios::trunc) << R"({"format_version":99,"last_event_seq":27})";
  CHECK(wms_run(in(d) + " export " + quoted(d / "x.tar.gz")).code == 3);
}

TEST_CASE("serve runs, answers, and stops on SIGINT") {
  TempDir d;
  REQUIRE(wms_run(in(d) + " seed demo").code == 0);
  const auto secret = secret_in(d);

  CHECK(wms_run(in(d) + " serve --port 0").code == 1);  // no secret

  Server server({"--data-dir", d.path().string(), "--json", "serve", "--host", "127.0.0.1",
                 "--port", "0", "--secret-file", secret.string()});
  const auto line = server.first_line();
  REQUIRE_FALSE(line.empty());
  const auto ready = Json::parse(line);
  CHECK(ready["last_event_seq"] == 27);
  const int port = ready["port"];

  testing::Client c(port);
  CHECK(c.get("/api/health").body["status"] == "ok");
  REQUIRE(c.login("admin@example.com", "demo-password").status == 200);
  CHECK(c.get("/api/dashboard/summary").body["total_tasks"] == 12);
  CHECK(c.post("/api/tasks", Json{{"title", "from the cli test"}}).status == 201);

  // A second server cannot take the same port.
  CHECK(wms_run(in(d) + " serve --host 127.0.0.1 --port " + std::to_string(port) +
                " --secret-file " + quoted(secret)).code == 1);

  server.signal(SIGINT);
  CHECK(server.wait() == 0);

  SteppingClock clock(Timestamp{0}, 1);
  auto ws = Workspace::open(d.path(), clock);
  CHECK(ws->log().last_seq() == 28);
  CHECK(ws->log().reconciled() == 0);
  CHECK(replay(ws->log().read_since(0)) == store_state(ws->store()));
}
