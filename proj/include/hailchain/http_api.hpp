#pragma once
//------------------------------------------------------------------------------
//
//   Copyright 2026 The hailchain authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------

// JSON-over-HTTP front end for a threaded Gateway, with per-session
// server-sent events. Endpoints are listed in docs/api.md.

#include "hailchain/gateway.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <string>
#include <thread>

namespace hailchain::http {

inline int status_for(const std::string &code)
{
  if (code == "AuthFailed" || code == "NoSession") return 401;
  if (code == "NotADriver" || code == "NotARider" || code == "Unauthorized") return 403;
  if (code == "GeocodeMiss" || code == "NoSuchRide") return 404;
  if (code == "RideTaken" || code == "DuplicateLocalId" || code == "RideAlreadyActive" || code == "AlreadyDriver" ||
      code == "ReadConflict")
  {
    return 409;
  }
  if (code == "InvalidArgument") return 400;
  if (code == "Timeout") return 504;
  return 422;
}

class Server
{
public:
  explicit Server(gateway::Gateway &gw) : gw_(gw)
  {
    if (gw.options().mode != gateway::GatewayMode::threaded)
    {
      throw std::logic_error("the HTTP server needs a threaded gateway");
    }
    routes();
  }

  Server(const Server &) = delete;
  Server &operator=(const Server &) = delete;

  ~Server() { stop(); }

  /// Binds and starts serving in the background; port 0 picks a free port.
  int start(const std::string &host = "127.0.0.1", int port = 0)
  {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop().
  void run(const std::string &host, int port)
  {
    port_ = port;
    if (!server_.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop()
  {
    stopping_ = true;
    if (server_.is_running()) server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  httplib::Server &raw() { return server_; }

private:
  using json = nlohmann::json;

  static void reply(httplib::Response &res, const json &body, int status = 200)
  {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void fail(httplib::Response &res, const std::string &code, const std::string &message)
  {
    reply(res, {{"error", code}, {"message", message}}, status_for(code));
  }

  static std::string token_of(const httplib::Request &req)
  {
    auto auth = req.get_header_value("Authorization");
    if (auth.rfind("Bearer ", 0) == 0) return auth.substr(7);
    return req.get_param_value("token");
  }

  static json body_of(const httplib::Request &req)
  {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw gateway::GatewayError("InvalidArgument", "body must be a JSON object");
    return j;
  }

  static std::string str(const json &j, const char *field)
  {
    if (!j.contains(field) || !j[field].is_string())
    {
      throw gateway::GatewayError("InvalidArgument", std::string("missing string field '") + field + "'");
    }
    return j[field].get<std::string>();
  }

  static json session_json(const gateway::SessionInfo &s)
  {
    return {{"token", s.token},
            {"org", s.org},
            {"local_id", s.local_id},
            {"user_id", s.user_id},
            {"view", std::string(gateway::to_string(s.view))}};
  }

  /// Wraps a handler so gateway and parse errors become JSON error replies.
  template <typename F>
  httplib::Server::Handler guarded(F f)
  {
    return [f = std::move(f)](const httplib::Request &req, httplib::Response &res) {
      try
      {
        f(req, res);
      }
      catch (const gateway::GatewayError &e)
      {
        fail(res, e.code(), e.message());
      }
      catch (const json::exception &e)
      {
        fail(res, "InvalidArgument", e.what());
      }
      catch (const std::exception &e)
      {
        fail(res, "Internal", e.what());
      }
    };
  }

  void routes()
  {
    server_.Get("/health", guarded([this](const httplib::Request &, httplib::Response &res) {
      auto s = gw_.status();
      s["status"] = "ok";
      reply(res, s);
    }));

    server_.Get("/places", guarded([this](const httplib::Request &, httplib::Response &res) {
      json out = json::array();
      for (const auto &p : gw_.places().all()) out.push_back({{"name", p.name}, {"point", format_geopoint(p.point)}});
      reply(res, out);
    }));

    server_.Post("/register", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto b = body_of(req);
      auto s = gw_.register_user(str(b, "org"), str(b, "local_id"), str(b, "password"), b.value("name", ""));
      reply(res, session_json(s), 201);
    }));

    server_.Post("/login", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto b = body_of(req);
      auto view = gateway::role_view_from_string(b.value("role", "rider"));
      reply(res, session_json(gw_.login(str(b, "org"), str(b, "local_id"), str(b, "password"), view)));
    }));

    server_.Post("/logout", guarded([this](const httplib::Request &req, httplib::Response &res) {
      gw_.logout(token_of(req));
      reply(res, {{"ok", true}});
    }));

    server_.Get("/me", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto token = token_of(req);
      auto s = session_json(gw_.info(token));
      s.erase("token");
      auto info = gw_.user_info(token);
      s["name"] = info["name"];
      s["driver"] = info["driver"];
      reply(res, s);
    }));

    server_.Post("/driver/upgrade", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto b = body_of(req);
      if (!b.contains("year") || !b["year"].is_number_integer())
      {
        throw gateway::GatewayError("InvalidArgument", "year must be an integer");
      }
      gw_.upgrade_to_driver(token_of(req), str(b, "name"), str(b, "make"), str(b, "model"), b["year"].get<int>());
      reply(res, {{"ok", true}});
    }));

    server_.Post("/driver/start", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto b = body_of(req);
      auto at = gw_.places().resolve(str(b, "location"));
      auto token = token_of(req);
      gw_.start_driving(token, at);
      json offers = json::array();
      if (b.value("rescan", false))
      {
        for (const auto &o : gw_.rescan(token)) offers.push_back(o.json());
      }
      reply(res, {{"ok", true}, {"location", format_geopoint(at)}, {"offers", offers}});
    }));

    server_.Get("/driver/offers", guarded([this](const httplib::Request &req, httplib::Response &res) {
      json out = json::array();
      for (const auto &o : gw_.offers(token_of(req))) out.push_back(o.json());
      reply(res, out);
    }));

    server_.Post("/driver/respond", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto b = body_of(req);
      if (!b.contains("accept") || !b["accept"].is_boolean())
      {
        throw gateway::GatewayError("InvalidArgument", "accept must be a boolean");
      }
      auto accept = b["accept"].get<bool>();
      auto ride_id = gw_.respond(token_of(req), str(b, "key"), accept);
      json out = {{"accepted", accept}};
      if (accept) out["ride_id"] = ride_id;
      reply(res, out);
    }));

    server_.Post("/driver/pickup", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto b = body_of(req);
      gw_.pickup(token_of(req), str(b, "key"), gw_.places().resolve(str(b, "at")));
      reply(res, {{"ok", true}});
    }));

    server_.Post("/driver/dropoff", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto b = body_of(req);
      auto ride_id = gw_.dropoff(token_of(req), str(b, "key"), gw_.places().resolve(str(b, "at")));
      reply(res, {{"ride_id", ride_id}});
    }));

    server_.Post("/rider/request", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto b = body_of(req);
      auto key = gw_.request_ride(token_of(req), str(b, "from"), str(b, "to"));
      reply(res, {{"key", key}}, 201);
    }));

    server_.Get("/rider/progress", guarded([this](const httplib::Request &req, httplib::Response &res) {
      reply(res, {{"states", gw_.progress(token_of(req))}});
    }));

    server_.Get("/rides", guarded([this](const httplib::Request &req, httplib::Response &res) {
      reply(res, gw_.ride_history(token_of(req)));
    }));

    server_.Get("/events", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto token = token_of(req);
      gw_.info(token);  // NoSession before the stream opens
      std::uint64_t after = 0;
      auto last = req.get_header_value("Last-Event-ID");
      if (last.empty()) last = req.get_param_value("after");
      if (!last.empty()) after = std::stoull(last);
      auto cursor = std::make_shared<std::uint64_t>(after);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, token, cursor](std::size_t, httplib::DataSink &sink) {
        if (stopping_ || !gw_.session_open(token))
        {
          sink.done();
          return true;
        }
        std::vector<gateway::SessionEvent> batch;
        try
        {
          batch = gw_.events_since(token, *cursor, std::chrono::milliseconds(500));
        }
        catch (const gateway::GatewayError &)
        {
          sink.done();
          return true;
        }
        std::string out;
        for (const auto &e : batch)
        {
          out += "id: " + std::to_string(e.seq) + "\nevent: " + e.type + "\ndata: " + e.data.dump() + "\n\n";
          *cursor = e.seq;
        }
        if (out.empty()) out = ": keep-alive\n\n";
        return sink.write(out.data(), out.size());
      });
    }));
  }

  gateway::Gateway &gw_;
  httplib::Server server_;
  std::thread thread_;
  std::atomic<bool> stopping_{false};
  int port_ = -1;
};

}  // namespace hailchain::http
