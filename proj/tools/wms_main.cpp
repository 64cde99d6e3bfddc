// wms: operator command line (serve, seed, user-create, export, import).

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "wms/fsutil.hpp"
#include "wms/http_api.hpp"
#include "wms/service.hpp"

namespace {

using namespace wms;

struct Config {
  int port = 8080;
  std::string host = "0.0.0.0";
  fs::path data_dir = "./data";
  fs::path secret_file;
  std::uint64_t asset_limit = 10'485'760;
  std::int64_t token_ttl = 28'800;
  std::vector<std::string> origins = HttpOptions{}.allowed_origins;
};

// Exit with a message on stderr; main turns this into a nonzero status.
struct CommandFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = trim(std::string_view(text).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!piece.empty()) out.emplace_back(piece);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& name, const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoll(text, &used);
    if (used != text.size() || v < 0) throw std::invalid_argument(text);
    return static_cast<T>(v);
  } catch (const std::logic_error&) {
    throw CommandFailed(name + ": not a valid number: " + text);
  }
}

void apply_file(Config& cfg, const fs::path& path) {
  const auto text = fsutil::read_file(path);
  if (!text) throw CommandFailed("config file not found: " + path.string());
  const auto j = Json::parse(*text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw CommandFailed("config file is not a JSON object");
  try {
    if (j.contains("port")) cfg.port = j["port"].get<int>();
    if (j.contains("host")) cfg.host = j["host"].get<std::string>();
    if (j.contains("data_dir")) cfg.data_dir = j["data_dir"].get<std::string>();
    if (j.contains("secret_file")) cfg.secret_file = j["secret_file"].get<std::string>();
    if (j.contains("asset_size_limit_bytes")) cfg.asset_limit = j["asset_size_limit_bytes"].get<std::uint64_t>();
    if (j.contains("token_ttl_seconds")) cfg.token_ttl = j["token_ttl_seconds"].get<std::int64_t>();
    if (j.contains("allowed_origins")) cfg.origins = j["allowed_origins"].get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw CommandFailed(std::string("config file: ") + e.what());
  }
}

void apply_env(Config& cfg) {
  const auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("WMS_PORT")) cfg.port = parse_number<int>("WMS_PORT", *v);
  if (auto v = env("WMS_HOST")) cfg.host = *v;
  if (auto v = env("WMS_DATA_DIR")) cfg.data_dir = *v;
  if (auto v = env("WMS_SECRET_FILE")) cfg.secret_file = *v;
  if (auto v = env("WMS_ASSET_LIMIT")) cfg.asset_limit = parse_number<std::uint64_t>("WMS_ASSET_LIMIT", *v);
  if (auto v = env("WMS_TOKEN_TTL")) cfg.token_ttl = parse_number<std::int64_t>("WMS_TOKEN_TTL", *v);
  if (auto v = env("WMS_ORIGINS")) cfg.origins = split_list(*v);
}

struct Flags {
  std::string config_file;
  std::optional<int> port;
  std::optional<std::string> host;
  std::optional<std::string> data_dir;
  std::optional<std::string> secret_file;
  std::optional<std::uint64_t> asset_limit;
  std::optional<std::int64_t> token_ttl;
  std::optional<std::string> origins;
  bool json = false;
};

Config resolve(const Flags& f) {
  Config cfg;
  if (!f.config_file.empty()) apply_file(cfg, f.config_file);
  apply_env(cfg);
  if (f.port) cfg.port = *f.port;
  if (f.host) cfg.host = *f.host;
  if (f.data_dir) cfg.data_dir = *f.data_dir;
  if (f.secret_file) cfg.secret_file = *f.secret_file;
  if (f.asset_limit) cfg.asset_limit = *f.asset_limit;
  if (f.token_ttl) cfg.token_ttl = *f.token_ttl;
  if (f.origins) cfg.origins = split_list(*f.origins);
  if (cfg.port < 0 || cfg.port > 65535) throw CommandFailed("port out of range");
  if (cfg.token_ttl <= 0) throw CommandFailed("token ttl must be positive");
  return cfg;
}

ServiceConfig service_config(const Config& cfg, std::vector<std::uint8_t> key = {}) {
  ServiceConfig sc;
  sc.limits.asset_size_limit_bytes = cfg.asset_limit;
  sc.token_ttl_seconds = cfg.token_ttl;
  sc.token_key = std::move(key);
  return sc;
}

StoreOptions store_options(const Config& cfg) {
  StoreOptions o;
  o.blob_size_limit = cfg.asset_limit;
  return o;
}

void emit(bool json, const Json& result, const std::string& text) {
  if (json) {
    std::cout << canonical_dump(result) << '\n';
  } else {
    std::cout << text << '\n';
  }
}

// --- serve ---

int cmd_serve(const Config& cfg, bool json) {
  if (cfg.secret_file.empty()) throw CommandFailed("no secret file configured (--secret-file or WMS_SECRET_FILE)");
  const auto secret = fsutil::read_file(cfg.secret_file);
  if (!secret) throw CommandFailed("secret file not found: " + cfg.secret_file.string());
  if (secret->size() < 32) throw CommandFailed("secret file must hold at least 32 bytes");

  // Signals are taken by a dedicated thread; block them before any other thread starts.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SystemClock clock;
  SecureRandom random;
  auto ws = Workspace::open(cfg.data_dir, clock, store_options(cfg));
  const auto key = crypto::as_bytes(*secret);
  Service service(ws->store(), ws->log(), clock, random,
                  service_config(cfg, std::vector<std::uint8_t>(key.begin(), key.end())));

  HttpOptions http;
  http.allowed_origins = cfg.origins;
  HttpApi api(service, http);
  const int port = api.bind(cfg.host, cfg.port);
  if (port < 0) throw CommandFailed("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));

  std::cerr << "wms: listening on " << cfg.host << ':' << port
            << " last_event_seq=" << ws->log().last_seq() << std::endl;
  if (json) {
    std::cout << canonical_dump(Json{{"port", port}, {"last_event_seq", ws->log().last_seq()}})
              << std::endl;
  }

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    api.stop();
  });
  const bool ok = api.listen();
  // Wake the waiter if the listener ended on its own.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::cerr << "wms: stopped, last_event_seq=" << ws->log().last_seq() << std::endl;
  return ok ? 0 : 1;
}

// --- user-create ---

int cmd_user_create(const Config& cfg, bool json, const NewAccount& request) {
  SystemClock clock;
  SecureRandom random;
  auto ws = Workspace::open(cfg.data_dir, clock, store_options(cfg));
  Service service(ws->store(), ws->log(), clock, random, service_config(cfg));
  const auto account = service.bootstrap_account(request);
  emit(json, public_view(account), account.id);
  return 0;
}

// --- seed ---

struct SeedUser {
  std::string name, email, password;
  Role role;
};

struct SeedTask {
  std::string title, description;
  TaskStatus status;
  Priority priority;
  std::vector<std::string> assignee_emails;
  std::optional<CivilDate> due_date;
};

struct Fixture {
  std::vector<SeedUser> users;
  std::vector<SeedTask> tasks;
};

// 4 tasks per status, every status/priority pair present, and a mix of
// multi-assignee, single-assignee and unassigned work.
Fixture demo_fixture() {
  const std::string admin = "admin@example.com", dana = "dana@example.com",
                    lee = "lee@example.com";
  using S = TaskStatus;
  using P = Priority;
  Fixture f;
  f.users = {{"Avery Admin", admin, "demo-password", Role::Admin},
             {"Dana Rivera", dana, "demo-password", Role::User},
             {"Lee Okafor", lee, "demo-password", Role::User}};
  const auto d = [](int y, unsigned m, unsigned day) { return CivilDate{y, m, day}; };
  f.tasks = {
      {"Draft onboarding checklist", "Steps for new hires in week one.", S::Todo, P::High, {dana}, d(2024, 2, 1)},
      {"Order replacement laptop", "", S::Todo, P::Medium, {lee}, std::nullopt},
      {"Collect venue quotes", "Three quotes minimum.", S::Todo, P::Low, {}, d(2024, 3, 15)},
      {"Review expense policy", "", S::Todo, P::High, {dana, lee}, std::nullopt},
      {"Migrate shared drive", "Move the old share to the new tenant.", S::InProgress, P::High, {admin, lee}, d(2024, 1, 31)},
      {"Prepare quarterly report", "", S::InProgress, P::Medium, {dana}, d(2024, 2, 10)},
      {"Update team wiki", "Remove stale pages.", S::InProgress, P::Low, {lee}, std::nullopt},
      {"Plan client workshop", "", S::InProgress, P::Medium, {}, d(2024, 2, 20)},
      {"Renew domain names", "", S::Done, P::High, {admin}, std::nullopt},
      {"Clean up old tickets", "", S::Done, P::Low, {dana, lee}, std::nullopt},
      {"Set up shared calendar", "", S::Done, P::Medium, {lee}, std::nullopt},
      {"Archive 2023 invoices", "", S::Done, P::Low, {}, std::nullopt},
  };
  return f;
}

Fixture load_fixture(const fs::path& path) {
  const auto text = fsutil::read_file(path);
  if (!text) throw CommandFailed("fixture not found: " + path.string());
  const auto j = Json::parse(*text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw CommandFailed("fixture is not a JSON object");
  Fixture f;
  try {
    for (const auto& u : j.value("users", Json::array())) {
      auto role = parse_role(u.value("role", "user"));
      if (!role) throw CommandFailed("fixture: bad role for " + u.value("email", "?"));
      f.users.push_back({u.at("name").get<std::string>(), u.at("email").get<std::string>(),
                         u.at("password").get<std::string>(), *role});
    }
    for (const auto& t : j.value("tasks", Json::array())) {
      SeedTask st{t.at("title").get<std::string>(), t.value("description", ""), TaskStatus::Todo,
                  Priority::Medium, t.value("assignees", std::vector<std::string>{}), std::nullopt};
      if (t.contains("status")) {
        auto s = parse_status(t["status"].get<std::string>());
        if (!s) throw CommandFailed("fixture: bad status in " + st.title);
        st.status = *s;
      }
      if (t.contains("priority")) {
        auto p = parse_priority(t["priority"].get<std::string>());
        if (!p) throw CommandFailed("fixture: bad priority in " + st.title);
        st.priority = *p;
      }
      if (t.contains("due_date") && !t["due_date"].is_null()) {
        st.due_date = parse_date(t["due_date"].get<std::string>());
        if (!st.due_date) throw CommandFailed("fixture: bad due_date in " + st.title);
      }
      f.tasks.push_back(std::move(st));
    }
  } catch (const Json::exception& e) {
    throw CommandFailed(std::string("fixture: ") + e.what());
  }
  if (f.users.empty()) throw CommandFailed("fixture has no users");
  return f;
}

int cmd_seed(const Config& cfg, bool json, const std::string& source) {
  const auto fixture = source == "demo" ? demo_fixture() : load_fixture(source);
  if (Store::holds_data(cfg.data_dir)) {
    throw CommandFailed("refusing to seed: " + cfg.data_dir.string() + " already holds data");
  }

  // Fixed clock and seed: two runs produce byte-identical stores.
  SteppingClock clock(*parse_rfc3339("2024-01-15T09:00:00.000Z"), 1000);
  SeededRandom random(0x5EEDu);
  auto ws = Workspace::open(cfg.data_dir, clock, store_options(cfg));
  Service service(ws->store(), ws->log(), clock, random, service_config(cfg));

  std::map<std::string, UserAccount> by_email;
  for (const auto& u : fixture.users) {
    auto account = service.bootstrap_account({u.name, u.email, u.password, u.role});
    by_email[account.email] = account;
  }
  const auto admin = std::find_if(by_email.begin(), by_email.end(),
                                  [](const auto& kv) { return kv.second.role == Role::Admin; });
  if (admin == by_email.end()) throw CommandFailed("fixture needs an admin account");
  const auto& actor = admin->second;

  for (const auto& t : fixture.tasks) {
    TaskDraft draft{t.title, t.description, t.priority, {}, t.due_date};
    for (const auto& email : t.assignee_emails) {
      auto normalized = normalize_email(email);
      auto it = normalized ? by_email.find(*normalized) : by_email.end();
      if (it == by_email.end()) throw CommandFailed("fixture: unknown assignee " + email);
      draft.assignee_ids.insert(it->second.id);
    }
    auto task = service.create_task(actor, draft);
    if (t.status != TaskStatus::Todo) {
      // Walk through in_progress so the history reads naturally.
      task = service.patch_task(actor, task.id, TaskPatch{.status = TaskStatus::InProgress},
                                task.revision);
      if (t.status == TaskStatus::Done) {
        task = service.patch_task(actor, task.id, TaskPatch{.status = TaskStatus::Done},
                                  task.revision);
      }
    }
  }

  const Json result{{"users", fixture.users.size()},
                    {"tasks", fixture.tasks.size()},
                    {"last_event_seq", ws->log().last_seq()}};
  emit(json, result,
       "seeded " + std::to_string(fixture.users.size()) + " users, " +
           std::to_string(fixture.tasks.size()) + " tasks into " + cfg.data_dir.string());
  return 0;
}

// --- export / import ---

int cmd_export(const Config& cfg, bool json, const fs::path& out) {
  SystemClock clock;
  auto ws = Workspace::open(cfg.data_dir, clock, store_options(cfg));
  ws->store().export_snapshot(out);
  emit(json, Json{{"archive", out.string()}, {"last_event_seq", ws->log().last_seq()}},
       out.string());
  return 0;
}

int cmd_import(const Config& cfg, bool json, const fs::path& in) {
  Store::import_snapshot(cfg.data_dir, in);
  SystemClock clock;
  auto ws = Workspace::open(cfg.data_dir, clock, store_options(cfg));
  const auto tasks = ws->store().scan(Collection::Tasks).size();
  const auto users = ws->store().scan(Collection::Users).size();
  const auto events = ws->log().last_seq();
  emit(json, Json{{"tasks", tasks}, {"users", users}, {"events", events}},
       "imported " + std::to_string(users) + " users, " + std::to_string(tasks) + " tasks, " +
           std::to_string(events) + " events");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wms: work management server and operator tools"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags flags;
  app.add_option("--config", flags.config_file, "JSON config file");
  app.add_option("--data-dir", flags.data_dir, "data directory (WMS_DATA_DIR)");
  app.add_option("--asset-limit", flags.asset_limit, "max upload bytes (WMS_ASSET_LIMIT)");
  app.add_flag("--json", flags.json, "canonical JSON on stdout");

  auto* serve = app.add_subcommand("serve", "run the HTTP API");
  serve->add_option("--port", flags.port, "listen port (WMS_PORT)");
  serve->add_option("--host", flags.host, "listen address (WMS_HOST)");
  serve->add_option("--secret-file", flags.secret_file, "token key file, >= 32 bytes (WMS_SECRET_FILE)");
  serve->add_option("--token-ttl", flags.token_ttl, "token lifetime in seconds (WMS_TOKEN_TTL)");
  serve->add_option("--origins", flags.origins, "comma-separated CORS origins (WMS_ORIGINS)");

  std::string seed_source;
  auto* seed = app.add_subcommand("seed", "populate an empty store");
  seed->add_option("fixture", seed_source, "\"demo\" or a fixture JSON file")->required();

  NewAccount account;
  std::string role_text = "user";
  auto* user_create = app.add_subcommand("user-create", "create an account");
  user_create->add_option("--name", account.name)->required();
  user_create->add_option("--email", account.email)->required();
  user_create->add_option("--password", account.password)->required();
  user_create->add_option("--role", role_text)->check(CLI::IsMember({"admin", "user"}));

  fs::path export_out;
  auto* export_cmd = app.add_subcommand("export", "write a snapshot archive");
  export_cmd->add_option("out", export_out, "archive path (.tar.gz)")->required();

  fs::path import_in;
  auto* import_cmd = app.add_subcommand("import", "restore a snapshot into an empty data dir");
  import_cmd->add_option("archive", import_in)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(flags);
    if (serve->parsed()) return cmd_serve(cfg, flags.json);
    if (seed->parsed()) return cmd_seed(cfg, flags.json, seed_source);
    if (user_create->parsed()) {
      account.role = *parse_role(role_text);
      return cmd_user_create(cfg, flags.json, account);
    }
    if (export_cmd->parsed()) return cmd_export(cfg, flags.json, export_out);
    if (import_cmd->parsed()) return cmd_import(cfg, flags.json, import_in);
  } catch (const CommandFailed& e) {
    std::cerr << "wms: " << e.what() << '\n';
    return 1;
  } catch (const ApiError& e) {
    std::cerr << "wms: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "wms: " << to_string(e.code()) << ": " << e.what() << '\n';
    return e.code() == Errc::CorruptManifest ? 3 : 1;
  } catch (const std::exception& e) {
    std::cerr << "wms: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
