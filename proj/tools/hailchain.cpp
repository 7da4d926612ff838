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

// hailchain command line: run a gateway server, act as a rider or driver
// against one, run load benchmarks, and inspect persisted ledgers.

#include "hailchain/harness.hpp"
#include "hailchain/http_api.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <iostream>

using namespace hailchain;
using json = nlohmann::json;

namespace {

std::atomic<bool> g_interrupted{false};

std::string env_or(const char *name, std::string fallback)
{
  const char *v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

netsim::Topology load_topology(const std::string &flag)
{
  auto path = flag.empty() ? env_or("HAILCHAIN_TOPOLOGY", "") : flag;
  if (path.empty()) return netsim::Topology::standard(2, 2);
  return netsim::Topology::load(path);
}

// -- HTTP client side --------------------------------------------------------

struct Remote
{
  std::string url;
  std::string token;

  httplib::Client client() const
  {
    httplib::Client c(url);
    c.set_read_timeout(60, 0);
    return c;
  }

  httplib::Headers headers() const
  {
    httplib::Headers h;
    if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
    return h;
  }

  json check(const httplib::Result &res) const
  {
    if (!res) throw std::runtime_error("cannot reach " + url + " (" + httplib::to_string(res.error()) + ")");
    auto body = json::parse(res->body, nullptr, false);
    if (res->status >= 400)
    {
      auto code = body.is_object() ? body.value("error", "Error") : "Error";
      auto msg = body.is_object() ? body.value("message", res->body) : res->body;
      throw std::runtime_error(code + ": " + msg);
    }
    return body;
  }

  json post(const std::string &path, const json &body) const
  {
    auto c = client();
    return check(c.Post(path, headers(), body.dump(), "application/json"));
  }

  json get(const std::string &path) const
  {
    auto c = client();
    return check(c.Get(path, headers()));
  }

  /// Streams /events, calling `on` for each (type, data) until it returns false.
  void events(const std::function<bool(const std::string &, const json &)> &on) const
  {
    auto c = client();
    c.set_read_timeout(3600, 0);
    std::string buf;
    bool keep = true;
    auto res = c.Get("/events", headers(), [&](const char *d, std::size_t n) {
      buf.append(d, n);
      for (auto end = buf.find("\n\n"); end != std::string::npos && keep; end = buf.find("\n\n"))
      {
        auto frame = buf.substr(0, end);
        buf.erase(0, end + 2);
        std::string type, data;
        std::istringstream lines(frame);
        for (std::string line; std::getline(lines, line);)
        {
          if (line.rfind("event: ", 0) == 0) type = line.substr(7);
          if (line.rfind("data: ", 0) == 0) data = line.substr(6);
        }
        if (!type.empty()) keep = on(type, json::parse(data, nullptr, false));
      }
      return keep && !g_interrupted;
    });
    if (!res && keep && !g_interrupted) throw std::runtime_error("event stream closed");
  }
};

void print(const json &j) { std::cout << j.dump(2) << "\n"; }

// -- bench -----------------------------------------------------------------

void print_reports(const std::vector<harness::LatencyReport> &reports, const std::string &axis)
{
  std::printf("%10s %10s %10s %10s %8s %8s %8s\n", axis.c_str(), "peer_ms", "orderer_ms", "event_ms", "tps", "ok",
              "failed");
  for (const auto &r : reports)
  {
    std::printf("%10.1f %10.2f %10.2f %10.1f %8.2f %8zu %8zu\n", r.axis_value, r.peer_ms, r.orderer_ms, r.event_ms,
                r.tps, r.success_count, r.failure_count);
  }
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"hailchain: permissioned ride-hailing ledger"};
  app.require_subcommand(1);

  Remote remote{env_or("HAILCHAIN_URL", "http://127.0.0.1:8080"), env_or("HAILCHAIN_TOKEN", "")};
  auto remote_opts = [&](CLI::App *sub, bool needs_token) {
    sub->add_option("--url", remote.url, "gateway base URL (HAILCHAIN_URL)");
    if (needs_token) sub->add_option("--token", remote.token, "session token from login (HAILCHAIN_TOKEN)");
  };

  // serve
  auto *serve = app.add_subcommand("serve", "run the gateway HTTP/SSE server over a simulated network");
  std::string host = "127.0.0.1", topology_path, places_path = "data/places-nashville.json", ledger_out;
  int port = 8080;
  std::uint64_t seed = 1;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--topology", topology_path, "topology JSON (HAILCHAIN_TOPOLOGY)");
  serve->add_option("--places", places_path, "place-name fixture");
  serve->add_option("--seed", seed);
  serve->add_option("--ledger", ledger_out, "write the committed chain here on shutdown");

  // register / login
  std::string org = "Org1PeerOrgMSP", local_id, password, name, role = "rider";
  auto *reg = app.add_subcommand("register", "create a user and print a session token");
  remote_opts(reg, false);
  reg->add_option("--org", org);
  reg->add_option("--id", local_id)->required();
  reg->add_option("--password", password)->required();
  reg->add_option("--name", name);
  auto *login = app.add_subcommand("login", "authenticate and print a session token");
  remote_opts(login, false);
  login->add_option("--org", org);
  login->add_option("--id", local_id)->required();
  login->add_option("--password", password)->required();
  login->add_option("--as", role)->check(CLI::IsMember({"rider", "driver"}));

  auto *upgrade = app.add_subcommand("upgrade", "register a vehicle and become a driver");
  remote_opts(upgrade, true);
  std::string make, model;
  int year = 0;
  upgrade->add_option("--name", name)->required();
  upgrade->add_option("--make", make)->required();
  upgrade->add_option("--model", model)->required();
  upgrade->add_option("--year", year)->required();

  // drive
  auto *drive = app.add_subcommand("drive", "listen for ride requests and answer offers");
  remote_opts(drive, true);
  std::string at, answer = "ask";
  bool rescan = false;
  drive->add_option("--at", at, "current location: place name or lat,lon")->required();
  drive->add_flag("--rescan", rescan, "also list requests still open from before");
  drive->add_option("--answer", answer, "ask, accept or deny")->check(CLI::IsMember({"ask", "accept", "deny"}));

  std::string key;
  auto *pickup = app.add_subcommand("pickup", "pick up an assigned rider");
  remote_opts(pickup, true);
  pickup->add_option("--key", key)->required();
  pickup->add_option("--at", at)->required();
  auto *dropoff = app.add_subcommand("dropoff", "drop off an on-board rider");
  remote_opts(dropoff, true);
  dropoff->add_option("--key", key)->required();
  dropoff->add_option("--at", at)->required();

  // ride
  auto *ride = app.add_subcommand("ride", "request a ride and follow it to completion");
  remote_opts(ride, true);
  std::string from, to;
  ride->add_option("--from", from)->required();
  ride->add_option("--to", to)->required();

  auto *history = app.add_subcommand("history", "list your archived rides");
  remote_opts(history, true);

  // bench
  auto *bench = app.add_subcommand("bench", "run a ride workload on a simulated network");
  std::string profile = "constant:300", csv, sweep = "none";
  std::size_t rides = 1000, workers = 4, per_worker = 25;
  bench->add_option("--topology", topology_path, "topology JSON (HAILCHAIN_TOPOLOGY)");
  bench->add_option("--profile", profile, "constant:<ms> or poisson:<tx/s>");
  bench->add_option("--rides", rides, "rides per run (per sweep point)");
  bench->add_option("--workers", workers);
  bench->add_option("--rides-per-worker", per_worker, "org sweep only");
  bench->add_option("--seed", seed);
  bench->add_option("--csv", csv, "write axis_value,peer_ms,orderer_ms,event_ms,tps rows");
  bench->add_option("--sweep", sweep)
      ->check(CLI::IsMember({"none", "constant", "constant-low", "poisson", "peers", "peers-lb", "orgs"}));
  bench->add_option("--ledger", ledger_out, "write the committed chain (single run only)");

  // ledger dump
  auto *ledger = app.add_subcommand("ledger", "inspect a persisted ledger");
  ledger->require_subcommand(1);
  auto *dump = ledger->add_subcommand("dump", "verify and print a ledger file");
  std::string ledger_file;
  bool full = false;
  dump->add_option("file", ledger_file)->required();
  dump->add_flag("--json", full, "print every block as JSON");

  CLI11_PARSE(app, argc, argv);
  std::cout << std::unitbuf;

  try
  {
    if (*serve)
    {
      gateway::GatewayOptions opts;
      opts.mode = gateway::GatewayMode::threaded;
      opts.seed = seed;
      gateway::Gateway gw(load_topology(topology_path), gateway::Places::load(places_path), opts);
      http::Server server(gw);
      static http::Server *active = &server;
      std::signal(SIGINT, [](int) { active->raw().stop(); });
      std::signal(SIGTERM, [](int) { active->raw().stop(); });
      std::cerr << "hailchain gateway on http://" << host << ":" << port << "\n";
      server.run(host, port);
      if (!ledger_out.empty())
      {
        std::filesystem::remove(ledger_out);
        LedgerFile file(ledger_out);
        for (const auto &cb : gw.chain()) file.append(cb);
        std::cerr << "ledger written to " << ledger_out << "\n";
      }
      return 0;
    }
    if (*reg)
    {
      print(remote.post("/register", {{"org", org}, {"local_id", local_id}, {"password", password}, {"name", name}}));
      return 0;
    }
    if (*login)
    {
      print(remote.post("/login", {{"org", org}, {"local_id", local_id}, {"password", password}, {"role", role}}));
      return 0;
    }
    if (*upgrade)
    {
      print(remote.post("/driver/upgrade", {{"name", name}, {"make", make}, {"model", model}, {"year", year}}));
      return 0;
    }
    if (*drive)
    {
      std::signal(SIGINT, [](int) { g_interrupted = true; });
      auto started = remote.post("/driver/start", {{"location", at}, {"rescan", rescan}});
      std::cout << "driving at " << started["location"].get<std::string>() << "; waiting for requests\n";
      remote.events([&](const std::string &type, const json &data) {
        if (type == "offer")
        {
          std::cout << "offer " << data["key"].get<std::string>() << " pickup " << data["pickup"].get<std::string>()
                    << " (" << static_cast<long>(data["distance_m"].get<double>()) << " m)\n";
          bool accept = answer == "accept";
          if (answer == "ask")
          {
            std::cout << "accept? [y/N] " << std::flush;
            std::string line;
            std::getline(std::cin, line);
            accept = !line.empty() && (line[0] == 'y' || line[0] == 'Y');
          }
          try
          {
            auto r = remote.post("/driver/respond", {{"key", data["key"]}, {"accept", accept}});
            if (accept) std::cout << "accepted, ride " << r["ride_id"].get<std::string>() << "\n";
          }
          catch (const std::exception &e)
          {
            std::cout << e.what() << "\n";
          }
        }
        else if (type == "offer_withdrawn")
        {
          std::cout << "offer " << data["key"].get<std::string>() << " taken by another driver\n";
        }
        return true;
      });
      return 0;
    }
    if (*pickup)
    {
      print(remote.post("/driver/pickup", {{"key", key}, {"at", at}}));
      return 0;
    }
    if (*dropoff)
    {
      print(remote.post("/driver/dropoff", {{"key", key}, {"at", at}}));
      return 0;
    }
    if (*ride)
    {
      std::signal(SIGINT, [](int) { g_interrupted = true; });
      auto r = remote.post("/rider/request", {{"from", from}, {"to", to}});
      std::cout << "requested " << r["key"].get<std::string>() << "\n";
      remote.events([&](const std::string &type, const json &data) {
        if (type == "progress")
        {
          std::cout << data["state"].get<std::string>();
          if (data.contains("ride_id")) std::cout << " " << data["ride_id"].get<std::string>();
          std::cout << "\n";
          return data["state"] != gateway::kProgressArchived;
        }
        if (type == "error") std::cout << "error: " << data.dump() << "\n";
        return true;
      });
      return 0;
    }
    if (*history)
    {
      print(remote.get("/rides"));
      return 0;
    }
    if (*bench)
    {
      auto topo = load_topology(topology_path);
      harness::WorkloadSpec wl;
      wl.total_rides = rides;
      wl.workers = workers;
      wl.seed = seed;
      std::vector<harness::LatencyReport> reports;
      std::string axis = "run";
      if (sweep == "none")
      {
        auto p = harness::TrafficProfile::parse(profile);
        netsim::Network net(topo, std::make_shared<RideChaincode>(), {.seed = seed, .trace = false});
        auto r = harness::run_load(net, wl, p);
        r.axis_value = p.value;
        reports.push_back(r);
        std::printf("%zu rides, %zu transactions in %.1f s simulated (%.1f s host); states %s\n", r.rides_completed,
                    r.success_count, r.duration_s, r.host_seconds,
                    net.replicas_consistent() ? "identical on all peers" : "DIVERGED");
        if (!ledger_out.empty())
        {
          std::filesystem::remove(ledger_out);
          LedgerFile file(ledger_out);
          for (const auto &cb : net.peer(0).ledger->chain()) file.append(cb);
        }
      }
      else
      {
        std::vector<harness::SweepPoint> points;
        if (sweep == "constant") points = harness::sweeps::constant_delay(topo, wl, 100, 500, 100), axis = "delay_ms";
        if (sweep == "constant-low") points = harness::sweeps::constant_delay(topo, wl, 10, 90, 10), axis = "delay_ms";
        if (sweep == "poisson") points = harness::sweeps::poisson_rate(topo, wl, 10, 90, 10), axis = "lambda";
        if (sweep == "peers") points = harness::sweeps::peers(EndorsementPolicy::Kind::all_peers, rides, seed), axis = "peers";
        if (sweep == "peers-lb")
        {
          points = harness::sweeps::peers(EndorsementPolicy::Kind::load_balanced, rides, seed), axis = "peers";
        }
        if (sweep == "orgs") points = harness::sweeps::orgs(topo.policy, per_worker, seed), axis = "orgs";
        for (const auto &pt : points)
        {
          auto r = harness::run_load(pt.topology, pt.workload, pt.profile);
          r.axis_value = pt.axis_value;
          reports.push_back(r);
          std::fprintf(stderr, "  %s=%g done (%.1f s)\n", axis.c_str(), pt.axis_value, r.host_seconds);
        }
      }
      print_reports(reports, axis);
      if (!csv.empty()) harness::export_csv(reports, csv);
      return 0;
    }
    if (*dump)
    {
      auto chain = LedgerFile(ledger_file).load();
      if (chain.empty()) throw std::runtime_error("no blocks in " + ledger_file);
      bool ok = verify_chain(chain);
      if (full)
      {
        json out = json::array();
        for (const auto &cb : chain) out.push_back(to_json(cb));
        print({{"verified", ok}, {"blocks", out}});
      }
      else
      {
        std::size_t txs = 0, valid = 0;
        for (const auto &cb : chain)
        {
          txs += cb.block.transactions.size();
          valid += static_cast<std::size_t>(std::count(cb.flags.begin(), cb.flags.end(), TxValidation::valid));
        }
        std::printf("%zu blocks, %zu transactions (%zu valid); chain %s\n", chain.size(), txs, valid,
                    ok ? "verified" : "FAILED verification");
        std::printf("head %s\n", to_hex(chain.back().block.hash).c_str());
      }
      return ok ? 0 : 2;
    }
  }
  catch (const std::exception &e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
