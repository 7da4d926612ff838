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

#include "hailchain/http_api.hpp"

#include <gtest/gtest.h>

#include <future>

using namespace hailchain;
using json = nlohmann::json;

namespace {

const std::string kOrg1 = "Org1PeerOrgMSP";
const std::string kOrg2 = "Org2PeerOrgMSP";

class HttpApi : public ::testing::Test
{
protected:
  void SetUp() override
  {
    auto topo = netsim::Topology::standard(2, 2);
    topo.orderer.batch_timeout_ms = 50;
    gateway::GatewayOptions opts;
    opts.mode = gateway::GatewayMode::threaded;
    gw = std::make_unique<gateway::Gateway>(
        topo, gateway::Places::load(std::string(HAILCHAIN_SOURCE_DIR) + "/data/places-nashville.json"), opts);
    server = std::make_unique<http::Server>(*gw);
    port = server->start();
  }

  void TearDown() override
  {
    server->stop();
    server.reset();
    gw.reset();
  }

  /// Client that also records every response body it receives.
  struct User
  {
    HttpApi *t;
    std::string token;
    std::string traffic;

    std::pair<int, json> post(const std::string &path, const json &body)
    {
      httplib::Client c("127.0.0.1", t->port);
      httplib::Headers h;
      if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
      auto res = c.Post(path, h, body.dump(), "application/json");
      if (!res) return {0, nullptr};
      traffic += res->body;
      return {res->status, json::parse(res->body)};
    }

    std::pair<int, json> get(const std::string &path)
    {
      httplib::Client c("127.0.0.1", t->port);
      httplib::Headers h;
      if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
      auto res = c.Get(path, h);
      if (!res) return {0, nullptr};
      traffic += res->body;
      return {res->status, json::parse(res->body)};
    }
  };

  /// Background SSE reader for one session.
  struct Stream
  {
    std::atomic<bool> stop{false};
    std::mutex mutex;
    std::string data;
    std::thread thread;

    Stream(int port, const std::string &token)
    {
      thread = std::thread([this, port, token] {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(5, 0);
        c.Get("/events?token=" + token, [this](const char *d, std::size_t n) {
          std::lock_guard lock(mutex);
          data.append(d, n);
          return !stop.load();
        });
      });
    }
    ~Stream()
    {
      stop = true;
      thread.join();
    }
    std::string text()
    {
      std::lock_guard lock(mutex);
      return data;
    }
    bool wait_for(const std::string &needle, int ms = 10000)
    {
      for (int i = 0; i < ms / 20; ++i)
      {
        if (text().find(needle) != std::string::npos) return true;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
      return false;
    }
  };

  User user() { return User{this, "", ""}; }

  User registered(const std::string &org, const std::string &id)
  {
    auto u = user();
    auto [status, body] = u.post("/register", {{"org", org}, {"local_id", id}, {"password", "pw-" + id}});
    EXPECT_EQ(status, 201) << body.dump();
    u.token = body.value("token", "");
    return u;
  }

  User driver(const std::string &org, const std::string &id)
  {
    auto u = registered(org, id);
    auto [s1, b1] = u.post("/driver/upgrade", {{"name", id}, {"make", "Kia"}, {"model", "Rio"}, {"year", 2017}});
    EXPECT_EQ(s1, 200) << b1.dump();
    auto [s2, b2] = u.post("/login", {{"org", org}, {"local_id", id}, {"password", "pw-" + id}, {"role", "driver"}});
    EXPECT_EQ(s2, 200) << b2.dump();
    u.token = b2.value("token", "");
    return u;
  }

  json wait_offer(User &d, const std::string &key)
  {
    for (int i = 0; i < 500; ++i)
    {
      auto [s, offers] = d.get("/driver/offers");
      for (const auto &o : offers)
      {
        if (o["key"] == key) return o;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    return nullptr;
  }

  std::unique_ptr<gateway::Gateway> gw;
  std::unique_ptr<http::Server> server;
  int port = 0;
};

}  // namespace

TEST_F(HttpApi, HealthAndPlaces)
{
  auto u = user();
  auto [s, h] = u.get("/health");
  EXPECT_EQ(s, 200);
  EXPECT_EQ(h["status"], "ok");
  EXPECT_EQ(h["peers"], 4);
  auto [s2, places] = u.get("/places");
  EXPECT_EQ(s2, 200);
  EXPECT_EQ(places.size(), 9u);
}

TEST_F(HttpApi, ErrorStatuses)
{
  auto a = registered(kOrg1, "alice");
  EXPECT_EQ(a.post("/register", {{"org", kOrg1}, {"local_id", "alice"}, {"password", "x"}}).first, 409);
  auto [s1, b1] = user().post("/login", {{"org", kOrg1}, {"local_id", "alice"}, {"password", "nope"}});
  EXPECT_EQ(s1, 401);
  EXPECT_EQ(b1["error"], "AuthFailed");
  auto [s2, b2] = user().post("/login", {{"org", kOrg1}, {"local_id", "alice"}, {"password", "pw-alice"}, {"role", "driver"}});
  EXPECT_EQ(s2, 403);
  EXPECT_EQ(b2["error"], "NotADriver");
  EXPECT_EQ(user().post("/register", {{"org", kOrg1}}).first, 400);
  EXPECT_EQ(user().get("/rides").first, 401);
  auto [s3, b3] = a.post("/rider/request", {{"from", "Atlantis"}, {"to", "Parthenon"}});
  EXPECT_EQ(s3, 404);
  EXPECT_EQ(b3["error"], "GeocodeMiss");
  EXPECT_EQ(a.post("/driver/start", {{"location", "Parthenon"}}).first, 403);

  // /me never exposes the stored hash or salt.
  auto [s4, me] = a.get("/me");
  EXPECT_EQ(s4, 200);
  EXPECT_FALSE(me.contains("password_hash"));
  EXPECT_FALSE(me.contains("salt"));
}

TEST_F(HttpApi, TwoRiderScenarioRespectsPrivacy)
{
  auto r1 = registered(kOrg1, "r1");
  auto r2 = registered(kOrg2, "r2");
  auto d = driver(kOrg1, "drv");
  Stream s1(port, r1.token), s2(port, r2.token), sd(port, d.token);
  EXPECT_EQ(d.post("/driver/start", {{"location", "Music City Center"}}).first, 200);

  auto [q1, k1] = r1.post("/rider/request", {{"from", "Vanderbilt University"}, {"to", "Nashville International Airport"}});
  ASSERT_EQ(q1, 201) << k1.dump();
  auto [q2, k2] = r2.post("/rider/request", {{"from", "Bridgestone Arena"}, {"to", "Grand Ole Opry"}});
  ASSERT_EQ(q2, 201) << k2.dump();
  auto key1 = k1["key"].get<std::string>(), key2 = k2["key"].get<std::string>();
  EXPECT_EQ(r1.post("/rider/request", {{"from", "Parthenon"}, {"to", "Nissan Stadium"}}).first, 409);

  ASSERT_FALSE(wait_offer(d, key1).is_null());
  ASSERT_FALSE(wait_offer(d, key2).is_null());
  EXPECT_TRUE(sd.wait_for("event: offer"));
  EXPECT_EQ(d.post("/driver/respond", {{"key", key1}, {"accept", true}}).first, 200);
  EXPECT_EQ(d.post("/driver/respond", {{"key", key2}, {"accept", true}}).first, 200);
  ASSERT_TRUE(s1.wait_for("\"state\":\"accepted\""));
  ASSERT_TRUE(s2.wait_for("\"state\":\"accepted\""));

  // The destination commits shortly after acceptance; retry pickup until then.
  auto pickup = [&](const std::string &key, const std::string &at) {
    for (int i = 0; i < 100; ++i)
    {
      auto [s, b] = d.post("/driver/pickup", {{"key", key}, {"at", at}});
      if (s == 200) return true;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    return false;
  };
  ASSERT_TRUE(pickup(key1, "Vanderbilt University"));
  ASSERT_TRUE(pickup(key2, "Bridgestone Arena"));
  EXPECT_EQ(d.post("/driver/dropoff", {{"key", key1}, {"at", "Nashville International Airport"}}).first, 200);
  EXPECT_EQ(d.post("/driver/dropoff", {{"key", key2}, {"at", "Grand Ole Opry"}}).first, 200);
  ASSERT_TRUE(s1.wait_for("\"state\":\"archived\""));
  ASSERT_TRUE(s2.wait_for("\"state\":\"archived\""));

  auto [h1s, h1] = r1.get("/rides");
  auto [h2s, h2] = r2.get("/rides");
  auto [hds, hd] = d.get("/rides");
  ASSERT_EQ(h1.size(), 1u);
  ASSERT_EQ(h2.size(), 1u);
  ASSERT_EQ(hd.size(), 1u);
  EXPECT_EQ(h1[0]["witnessed_corider_pickups"][0]["point"], "36.1592,-86.7785");
  EXPECT_TRUE(h1[0]["witnessed_corider_dropoffs"].empty());
  EXPECT_EQ(h2[0]["witnessed_corider_dropoffs"][0]["point"], "36.1263,-86.6774");
  EXPECT_EQ(hd[0]["pickups"].size(), 2u);
  EXPECT_EQ(hd[0]["dropoffs"].size(), 2u);

  // Progress stream: exactly the four states, in order.
  auto states = [](const std::string &sse) {
    std::vector<std::string> out;
    for (auto pos = sse.find("\"state\":\""); pos != std::string::npos; pos = sse.find("\"state\":\"", pos + 1))
    {
      auto start = pos + 9;
      out.push_back(sse.substr(start, sse.find('"', start) - start));
    }
    return out;
  };
  std::vector<std::string> four{"accepted", "driver_arrived", "ride_ending", "archived"};
  EXPECT_EQ(states(s1.text()), four);
  EXPECT_EQ(states(s2.text()), four);

  // Everything each rider received: R1 never sees R2's dropoff and R2 never
  // sees R1's pickup.
  auto all1 = r1.traffic + s1.text(), all2 = r2.traffic + s2.text();
  EXPECT_EQ(all1.find("36.2069,-86.6921"), std::string::npos);
  EXPECT_EQ(all2.find("36.1447,-86.8027"), std::string::npos);
  EXPECT_NE(all1.find("36.1592,-86.7785"), std::string::npos);
  EXPECT_NE(all2.find("36.1263,-86.6774"), std::string::npos);
}

TEST_F(HttpApi, AcceptRaceHasOneWinner)
{
  auto r = registered(kOrg1, "rider");
  auto d1 = driver(kOrg1, "d1");
  auto d2 = driver(kOrg2, "d2");
  d1.post("/driver/start", {{"location", "Parthenon"}});
  d2.post("/driver/start", {{"location", "Parthenon"}});
  auto [q, k] = r.post("/rider/request", {{"from", "Parthenon"}, {"to", "Ryman Auditorium"}});
  auto key = k["key"].get<std::string>();
  ASSERT_FALSE(wait_offer(d1, key).is_null());
  ASSERT_FALSE(wait_offer(d2, key).is_null());

  auto a = std::async(std::launch::async, [&] { return d1.post("/driver/respond", {{"key", key}, {"accept", true}}); });
  auto b = std::async(std::launch::async, [&] { return d2.post("/driver/respond", {{"key", key}, {"accept", true}}); });
  auto ra = a.get(), rb = b.get();
  std::multiset<int> statuses{ra.first, rb.first};
  EXPECT_EQ(statuses, (std::multiset<int>{200, 409})) << ra.second.dump() << rb.second.dump();
  auto loser = ra.first == 409 ? ra.second : rb.second;
  EXPECT_EQ(loser["error"], "RideTaken");
  EXPECT_EQ(loser["message"], "ride taken");
}
