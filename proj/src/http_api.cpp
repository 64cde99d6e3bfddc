#include "wms/http_api.hpp"

#include <algorithm>
#include <charconv>
#include <regex>
#include <thread>

#include <httplib.h>

namespace wms {

namespace {

using httplib::Request;
using httplib::Response;
using Steady = std::chrono::steady_clock;

void send_json(Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(canonical_dump(body), "application/json");
}

void send_error(Response& res, const ApiError& e) { send_json(res, e.http_status(), e.body()); }

ApiError bad_request(const std::string& message) {
  return ApiError(400, "bad_request", message);
}

ApiError invalid(const std::string& field, const std::string& problem) {
  return ApiError(422, "validation", field + " " + problem, Json{{field, problem}});
}

std::string bearer_token(const Request& req) {
  const auto header = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (header.size() > prefix.size() && header.compare(0, prefix.size(), prefix) == 0) {
    return header.substr(prefix.size());
  }
  return {};
}

Json parse_body(const Request& req) {
  auto j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw bad_request("request body must be a JSON object");
  return j;
}

std::optional<std::int64_t> parse_int(std::string_view text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return v;
}

std::optional<std::int64_t> if_match(const Request& req) {
  if (!req.has_header("If-Match")) return std::nullopt;
  std::string_view v = req.get_header_value("If-Match");
  if (v.substr(0, 2) == "W/") v.remove_prefix(2);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  auto rev = parse_int(v);
  if (!rev || *rev < 1) throw bad_request("If-Match must carry a positive revision");
  return rev;
}

std::int64_t query_int(const Request& req, const char* name, std::int64_t fallback,
                       std::int64_t min) {
  if (!req.has_param(name)) return fallback;
  auto v = parse_int(req.get_param_value(name));
  if (!v || *v < min) throw invalid(name, "must be an integer >= " + std::to_string(min));
  return *v;
}

Page page_from(const Request& req) {
  Page page;
  page.offset = static_cast<std::size_t>(query_int(req, "offset", 0, 0));
  page.limit = static_cast<std::size_t>(query_int(req, "limit", 50, 0));
  return page;
}

std::string string_field(const Json& body, const char* name) {
  const auto& v = body.at(name);
  if (!v.is_string()) throw invalid(name, "must be a string");
  return v.get<std::string>();
}

std::set<std::string> id_set_field(const Json& body, const char* name) {
  const auto& v = body.at(name);
  if (!v.is_array()) throw invalid(name, "must be an array of ids");
  std::set<std::string> out;
  for (const auto& item : v) {
    if (!item.is_string()) throw invalid(name, "must be an array of ids");
    out.insert(item.get<std::string>());
  }
  return out;
}

Priority priority_field(const Json& body) {
  auto p = body.at("priority").is_string() ? parse_priority(body.at("priority").get<std::string>())
                                           : std::nullopt;
  if (!p) throw invalid("priority", "must be one of high, medium, low");
  return *p;
}

TaskStatus status_field(const Json& body) {
  auto s = body.at("status").is_string() ? parse_status(body.at("status").get<std::string>())
                                         : std::nullopt;
  if (!s) throw invalid("status", "must be one of todo, in_progress, done");
  return *s;
}

std::optional<CivilDate> due_date_field(const Json& body) {
  const auto& v = body.at("due_date");
  if (v.is_null()) return std::nullopt;
  auto d = v.is_string() ? parse_date(v.get<std::string>()) : std::nullopt;
  if (!d) throw invalid("due_date", "must be YYYY-MM-DD or null");
  return d;
}

void reject_unknown(const Json& body, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : body.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw invalid(key, "is not a recognized field");
    }
  }
}

TaskDraft draft_from(const Json& body) {
  reject_unknown(body, {"title", "description", "priority", "assignee_ids", "due_date"});
  if (!body.contains("title")) throw invalid("title", "is required");
  TaskDraft d;
  d.title = string_field(body, "title");
  if (body.contains("description")) d.description = string_field(body, "description");
  if (body.contains("priority")) d.priority = priority_field(body);
  if (body.contains("assignee_ids")) d.assignee_ids = id_set_field(body, "assignee_ids");
  if (body.contains("due_date")) d.due_date = due_date_field(body);
  return d;
}

TaskPatch patch_from(const Json& body) {
  reject_unknown(body, {"title", "description", "status", "priority", "assignee_ids", "due_date"});
  TaskPatch p;
  if (body.contains("title")) p.title = string_field(body, "title");
  if (body.contains("description")) p.description = string_field(body, "description");
  if (body.contains("status")) p.status = status_field(body);
  if (body.contains("priority")) p.priority = priority_field(body);
  if (body.contains("assignee_ids")) p.assignee_ids = id_set_field(body, "assignee_ids");
  if (body.contains("due_date")) p.due_date = due_date_field(body);
  return p;
}

Json task_page_json(const TaskPage& page, const Page& request) {
  return Json{{"items", page.items},
              {"total_count", page.total_count},
              {"offset", request.offset},
              {"limit", request.limit}};
}

Json team_json(const std::vector<UserAccount>& accounts) {
  Json items = Json::array();
  for (const auto& a : accounts) items.push_back(public_view(a));
  return Json{{"items", std::move(items)}};
}

void send_task(Response& res, int status, const Task& task) {
  res.set_header("ETag", "\"" + std::to_string(task.revision) + "\"");
  send_json(res, status, Json(task));
}

std::string sanitize_filename(std::string_view raw) {
  const auto slash = raw.find_last_of("/\\");
  if (slash != std::string_view::npos) raw.remove_prefix(slash + 1);
  std::string out;
  for (char c : raw) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x20 || u == 0x7F || c == '"' || c == '\\') continue;
    out.push_back(c);
  }
  const auto t = trim(out);
  out = std::string(t);
  if (out.empty() || out == "." || out == "..") out = "upload";
  if (out.size() > 255) out.resize(255);
  return out;
}

std::string sanitize_media_type(std::string_view raw) {
  static const std::regex pattern(R"([A-Za-z0-9!#$&^_.+-]+/[A-Za-z0-9!#$&^_.+-]+)");
  auto base = std::string(trim(raw.substr(0, raw.find(';'))));
  if (!std::regex_match(base, pattern)) return "application/octet-stream";
  std::transform(base.begin(), base.end(), base.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return base;
}

std::string sse_frame(const MutationEvent& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: mutation\ndata: " +
         canonical_dump(wire_event(e)) + "\n\n";
}

struct StreamState {
  std::shared_ptr<Subscription> subscription;
  std::vector<MutationEvent> backlog;
  std::size_t backlog_pos = 0;
  std::int64_t last_sent = 0;
  Steady::time_point last_write = Steady::now();
};

}  // namespace

Json wire_event(const MutationEvent& e) {
  Json j = e;
  if (e.entity_kind == EntityKind::User && j.contains("snapshot")) {
    j["snapshot"].erase("password_hash");
  }
  return j;
}

HttpApi::HttpApi(Service& service, HttpOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  const auto threads = options_.worker_threads;
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  server_->set_payload_max_length(service_.config().limits.asset_size_limit_bytes +
                                  options_.multipart_overhead_bytes);
  // httplib enables SO_REUSEPORT by default, which lets a second server share
  // an occupied port. Only SO_REUSEADDR is wanted.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  register_routes();
}

HttpApi::~HttpApi() { stop(); }

int HttpApi::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpApi::listen() { return server_->listen_after_bind(); }

void HttpApi::stop() {
  stopping_ = true;
  service_.log().close_subscribers();
  server_->stop();
}

void HttpApi::wait_until_ready() const { server_->wait_until_ready(); }

void HttpApi::register_routes() {
  auto& srv = *server_;
  using Handler = std::function<void(const Request&, Response&)>;

  // Every route funnels failures into the {"error":{...}} shape.
  const auto guarded = [](Handler h) {
    return [h = std::move(h)](const Request& req, Response& res) {
      try {
        h(req, res);
      } catch (const ApiError& e) {
        send_error(res, e);
      } catch (const Error& e) {
        send_error(res, to_api_error(e));
      } catch (const std::exception& e) {
        send_error(res, ApiError(500, "internal", e.what()));
      }
    };
  };
  const auto authed = [this](const Request& req) { return service_.authenticate(bearer_token(req)); };

  srv.set_error_handler([](const Request&, Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    std::string code = "internal";
    switch (res.status) {
      case 400: code = "bad_request"; break;
      case 401: code = "unauthorized"; break;
      case 403: code = "forbidden"; break;
      case 404: code = "not_found"; break;
      case 405: code = "bad_request"; break;
      case 413: code = "payload_too_large"; break;
      case 415: code = "unsupported_media_type"; break;
      default: break;
    }
    send_json(res, res.status,
              ApiError(res.status, code, httplib::status_message(res.status)).body());
    return httplib::Server::HandlerResponse::Handled;
  });

  srv.set_post_routing_handler([this](const Request& req, Response& res) {
    const auto origin = req.get_header_value("Origin");
    if (origin.empty()) return;
    const auto& allowed = options_.allowed_origins;
    if (std::find(allowed.begin(), allowed.end(), origin) == allowed.end()) return;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Vary", "Origin");
    res.set_header("Access-Control-Expose-Headers", "ETag");
  });
  srv.Options(R"(/api/.*)", [this](const Request& req, Response& res) {
    const auto origin = req.get_header_value("Origin");
    const auto& allowed = options_.allowed_origins;
    if (std::find(allowed.begin(), allowed.end(), origin) != allowed.end()) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, PATCH, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type, If-Match");
      res.set_header("Access-Control-Max-Age", "600");
    }
    res.status = 204;
  });

  srv.Get("/api/health", guarded([this](const Request&, Response& res) {
            send_json(res, 200, Json{{"status", "ok"}, {"last_event_seq", service_.log().last_seq()}});
          }));

  srv.Post("/api/auth/login", guarded([this](const Request& req, Response& res) {
             const auto body = parse_body(req);
             if (!body.contains("email")) throw invalid("email", "is required");
             if (!body.contains("password")) throw invalid("password", "is required");
             auto result = service_.login(string_field(body, "email"),
                                          string_field(body, "password"));
             send_json(res, 200,
                       Json{{"token", result.token},
                            {"expires_at", format_rfc3339(Timestamp{result.claims.exp * 1000})},
                            {"account", public_view(result.account)}});
           }));

  srv.Get("/api/me", guarded([authed](const Request& req, Response& res) {
            send_json(res, 200, public_view(authed(req)));
          }));

  // --- tasks ---
  srv.Get("/api/tasks", guarded([this, authed](const Request& req, Response& res) {
            const auto actor = authed(req);
            TaskFilter filter;
            if (req.has_param("status")) {
              filter.status = parse_status(req.get_param_value("status"));
              if (!filter.status) throw invalid("status", "must be one of todo, in_progress, done");
            }
            if (req.has_param("priority")) {
              filter.priority = parse_priority(req.get_param_value("priority"));
              if (!filter.priority) throw invalid("priority", "must be one of high, medium, low");
            }
            if (req.has_param("assignee")) filter.assignee = req.get_param_value("assignee");
            const auto page = page_from(req);
            send_json(res, 200, task_page_json(service_.list_tasks(actor, filter, page), page));
          }));

  srv.Post("/api/tasks", guarded([this, authed](const Request& req, Response& res) {
             const auto actor = authed(req);
             service_.require(actor, auth::Action::TaskCreate);
             send_task(res, 201, service_.create_task(actor, draft_from(parse_body(req))));
           }));

  srv.Get(R"(/api/tasks/([^/]+))", guarded([this, authed](const Request& req, Response& res) {
            const auto actor = authed(req);
            send_task(res, 200, service_.get_task(actor, req.matches[1].str()));
          }));

  srv.Patch(R"(/api/tasks/([^/]+))", guarded([this, authed](const Request& req, Response& res) {
              const auto actor = authed(req);
              service_.require(actor, auth::Action::TaskEdit);
              const auto rev = if_match(req);
              if (!rev) {
                throw ApiError(428, "precondition_required",
                               "PATCH requires an If-Match header with the task revision");
              }
              const auto patch = patch_from(parse_body(req));
              send_task(res, 200, service_.patch_task(actor, req.matches[1].str(), patch, *rev));
            }));

  srv.Delete(R"(/api/tasks/([^/]+))", guarded([this, authed](const Request& req, Response& res) {
               const auto actor = authed(req);
               send_task(res, 200, service_.trash_task(actor, req.matches[1].str(), if_match(req)));
             }));

  srv.Get(R"(/api/tasks/([^/]+)/activity)",
          guarded([this, authed](const Request& req, Response& res) {
            const auto actor = authed(req);
            send_json(res, 200,
                      Json{{"items", service_.task_activity(actor, req.matches[1].str())}});
          }));

  srv.Post(R"(/api/tasks/([^/]+)/assets)",
           guarded([this, authed](const Request& req, Response& res) {
             const auto actor = authed(req);
             service_.require(actor, auth::Action::AssetUpload);
             if (!req.is_multipart_form_data() || !req.has_file("file")) {
               throw ApiError(415, "unsupported_media_type",
                              "expected multipart/form-data with a part named \"file\"");
             }
             const auto file = req.get_file_value("file");
             const auto bytes = crypto::as_bytes(file.content);
             auto result = service_.upload_asset(actor, req.matches[1].str(),
                                                 sanitize_filename(file.filename),
                                                 sanitize_media_type(file.content_type), bytes,
                                                 if_match(req));
             res.set_header("ETag", "\"" + std::to_string(result.task.revision) + "\"");
             send_json(res, 201,
                       Json{{"asset", result.asset},
                            {"task", result.task},
                            {"download_path", "/api/assets/" + result.asset.id}});
           }));

  srv.Get(R"(/api/assets/([^/]+))", guarded([this, authed](const Request& req, Response& res) {
            const auto actor = authed(req);
            auto content = service_.download_asset(actor, req.matches[1].str());
            res.status = 200;
            res.set_header("Content-Disposition",
                           "attachment; filename=\"" + content.asset.filename + "\"");
            res.set_header("ETag", "\"" + content.asset.content_hash + "\"");
            res.set_content(std::string(content.bytes.begin(), content.bytes.end()),
                            content.asset.media_type);
          }));

  // --- trash ---
  srv.Get("/api/trash", guarded([this, authed](const Request& req, Response& res) {
            const auto actor = authed(req);
            const auto page = page_from(req);
            send_json(res, 200, task_page_json(service_.list_trash(actor, page), page));
          }));

  srv.Post(R"(/api/trash/([^/]+)/restore)",
           guarded([this, authed](const Request& req, Response& res) {
             const auto actor = authed(req);
             send_task(res, 200,
                       service_.restore_task(actor, req.matches[1].str(), if_match(req)));
           }));

  srv.Delete(R"(/api/trash/([^/]+))", guarded([this, authed](const Request& req, Response& res) {
               const auto actor = authed(req);
               service_.purge_task(actor, req.matches[1].str(), if_match(req));
               res.status = 204;
             }));

  // --- dashboard ---
  srv.Get("/api/dashboard/summary", guarded([this, authed](const Request& req, Response& res) {
            send_json(res, 200, Json(service_.dashboard_summary(authed(req))));
          }));
  srv.Get("/api/dashboard/workload", guarded([this, authed](const Request& req, Response& res) {
            send_json(res, 200, Json{{"items", service_.dashboard_workload(authed(req))}});
          }));
  srv.Get("/api/dashboard/priority", guarded([this, authed](const Request& req, Response& res) {
            Json body = service_.dashboard_priority(authed(req));
            for (auto p : kAllPriorities) body["colors"][to_string(p)] = priority_color(p);
            send_json(res, 200, body);
          }));
  srv.Get("/api/dashboard/activity", guarded([this, authed](const Request& req, Response& res) {
            const auto actor = authed(req);
            const auto n = query_int(req, "n", 20, 1);
            if (n > static_cast<std::int64_t>(dashboard::kMaxRecentActivity)) {
              throw invalid("n", "must be between 1 and 100");
            }
            send_json(res, 200,
                      Json{{"items", service_.dashboard_activity(actor,
                                                                 static_cast<std::size_t>(n))}});
          }));

  // --- team ---
  srv.Get("/api/team", guarded([this, authed](const Request& req, Response& res) {
            send_json(res, 200, team_json(service_.list_team(authed(req))));
          }));

  srv.Post("/api/team", guarded([this, authed](const Request& req, Response& res) {
             const auto actor = authed(req);
             service_.require(actor, auth::Action::UserCreate);
             const auto body = parse_body(req);
             reject_unknown(body, {"name", "email", "password", "role"});
             for (const char* f : {"name", "email", "password"}) {
               if (!body.contains(f)) throw invalid(f, "is required");
             }
             NewAccount request{string_field(body, "name"), string_field(body, "email"),
                                string_field(body, "password"), Role::User};
             if (body.contains("role")) {
               auto role = body["role"].is_string() ? parse_role(body["role"].get<std::string>())
                                                    : std::nullopt;
               if (!role) throw invalid("role", "must be admin or user");
               request.role = *role;
             }
             send_json(res, 201, public_view(service_.create_account(actor, request)));
           }));

  srv.Patch(R"(/api/team/([^/]+))", guarded([this, authed](const Request& req, Response& res) {
              const auto actor = authed(req);
              const auto body = parse_body(req);
              reject_unknown(body, {"role", "active"});
              AccountUpdate update;
              if (body.contains("role")) {
                update.role = body["role"].is_string()
                                  ? parse_role(body["role"].get<std::string>())
                                  : std::nullopt;
                if (!update.role) throw invalid("role", "must be admin or user");
              }
              if (body.contains("active")) {
                if (!body["active"].is_boolean()) throw invalid("active", "must be a boolean");
                update.active = body["active"].get<bool>();
              }
              send_json(res, 200, public_view(service_.update_account(
                                      actor, req.matches[1].str(), update, if_match(req))));
            }));

  // --- operator ---
  srv.Get("/api/admin/export", guarded([this, authed](const Request& req, Response& res) {
            const auto actor = authed(req);
            service_.require(actor, auth::Action::ExportImport);
            const auto tmp = fs::temp_directory_path() /
                             ("wms-export-" + std::to_string(::getpid()) + "-" +
                              std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) +
                              ".tar.gz");
            service_.export_snapshot(actor, tmp);
            auto bytes = fsutil::read_file(tmp).value_or("");
            std::error_code ec;
            fs::remove(tmp, ec);
            res.status = 200;
            res.set_header("Content-Disposition", "attachment; filename=\"wms-snapshot.tar.gz\"");
            res.set_content(std::move(bytes), "application/gzip");
          }));

  // --- live feed ---
  srv.Get("/api/events", [this](const Request& req, Response& res) {
    std::shared_ptr<StreamState> state;
    try {
      auto token = bearer_token(req);
      if (token.empty() && req.has_param("access_token")) token = req.get_param_value("access_token");
      (void)service_.authenticate(token);
      const auto after = query_int(req, "after_seq", 0, 0);
      state = std::make_shared<StreamState>();
      // Subscribe before reading the backlog so nothing falls between the two;
      // the overlap is removed by seq below.
      state->subscription = service_.log().subscribe();
      state->backlog = service_.log().read_since(after);
      state->last_sent = after;
    } catch (const ApiError& e) {
      send_error(res, e);
      return;
    } catch (const Error& e) {
      send_error(res, to_api_error(e));
      return;
    }

    res.status = 200;
    res.set_header("Cache-Control", "no-cache");
    res.set_header("X-Accel-Buffering", "no");
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, state](std::size_t, httplib::DataSink& sink) {
          auto emit = [&](const std::string& frame) {
            state->last_write = Steady::now();
            return sink.write(frame.data(), frame.size());
          };
          if (state->backlog_pos < state->backlog.size()) {
            std::string frames;
            for (int i = 0; i < 64 && state->backlog_pos < state->backlog.size(); ++i) {
              const auto& e = state->backlog[state->backlog_pos++];
              frames += sse_frame(e);
              state->last_sent = e.seq;
            }
            if (state->backlog_pos == state->backlog.size()) {
              state->backlog.clear();
              state->backlog_pos = 0;
            }
            return emit(frames);
          }
          while (true) {
            if (stopping_) {
              sink.done();
              return true;
            }
            const auto due = state->last_write + options_.heartbeat;
            const auto now = Steady::now();
            if (now >= due) return emit(": heartbeat\n\n");
            const auto wait = std::min<Steady::duration>(due - now, std::chrono::milliseconds(250));
            auto r = state->subscription->next(
                std::chrono::duration_cast<std::chrono::milliseconds>(wait) +
                std::chrono::milliseconds(1));
            if (r.status == Subscription::Status::Event) {
              if (r.event.seq <= state->last_sent) continue;
              state->last_sent = r.event.seq;
              return emit(sse_frame(r.event));
            }
            if (r.status == Subscription::Status::Closed) {
              sink.done();
              return true;
            }
            if (!sink.is_writable()) return false;
          }
        },
        [state](bool) { state->subscription->close(); });
  });
}

}  // namespace wms
