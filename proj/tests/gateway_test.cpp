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

#include "hailchain/gateway.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <future>

using namespace hailchain;
using namespace hailchain::gateway;

namespace {

const std::string kOrg1 = "Org1PeerOrgMSP";
const std::string kOrg2 = "Org2PeerOrgMSP";

Places fixture() { return Places::load(std::string(HAILCHAIN_SOURCE_DIR) + "/data/places-nashville.json"); }

std::unique_ptr<Gateway> make_gateway(GatewayOptions opts = {})
{
  auto topo = netsim::Topology::standard(2, 2);
  // Wall-clock runs cut blocks quickly.
  if (opts.mode == GatewayMode::threaded) topo.orderer.batch_timeout_ms = 200;
  return std::make_unique<Gateway>(topo, fixture(), opts);
}

SessionInfo make_driver(Gateway &gw, const std::string &org, const std::string &name)
{
  auto s = gw.register_user(org, name, "pw-" + name);
  gw.upgrade_to_driver(s.token, name, "Toyota", "Camry", 2019);
  return gw.login(org, name, "pw-" + name, RoleView::driver);
}

bool contains(ByteView hay, std::string_view needle)
{
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

std::set<std::string> entries(const nlohmann::json &list)
{
  std::set<std::string> out;
  for (const auto &e : list) out.insert(e["user"].get<std::string>() + "@" + e["point"].get<std::string>());
  return out;
}

}  // namespace

TEST(Places, FixtureLookups)
{
  auto p = fixture();
  EXPECT_EQ(p.all().size(), 9u);
  EXPECT_EQ(p.geocode("Nissan Stadium"), (GeoPoint{36.1665, -86.7713}));
  EXPECT_EQ(p.geocode("Nashville International Airport"), (GeoPoint{36.1263, -86.6774}));
  EXPECT_EQ(p.geocode("nissan STADIUM"), p.geocode("Nissan Stadium"));
  EXPECT_EQ(p.resolve("36.15,-86.78"), (GeoPoint{36.15, -86.78}));
  for (auto bad : {"", "Nissan", "Atlantis"})
  {
    try
    {
      p.geocode(bad);
      ADD_FAILURE() << bad;
    }
    catch (const GatewayError &e)
    {
      EXPECT_EQ(e.code(), "GeocodeMiss");
    }
  }
  EXPECT_THROW(Places::from_json(nlohmann::json::parse(
                   R"({"places":[{"name":"A","lat":1,"lon":1},{"name":"a","lat":2,"lon":2}]})")),
               std::invalid_argument);
}

TEST(Account, RegisterAndLogin)
{
  auto gw = make_gateway();
  auto s = gw->register_user(kOrg1, "alice", "correct horse", "Alice");
  EXPECT_EQ(s.view, RoleView::rider);
  auto info = gw->user_info(s.token);
  EXPECT_TRUE(info["ride_ids"].empty());
  EXPECT_EQ(info["name"], "Alice");
  EXPECT_EQ(gw->ride_history(s.token), nlohmann::json::array());

  try
  {
    gw->register_user(kOrg1, "alice", "x");
    ADD_FAILURE();
  }
  catch (const GatewayError &e)
  {
    EXPECT_EQ(e.code(), "DuplicateLocalId");
  }

  // Independent failures, no lockout.
  for (int i = 0; i < 3; ++i)
  {
    try
    {
      gw->login(kOrg1, "alice", "wrong");
      ADD_FAILURE();
    }
    catch (const GatewayError &e)
    {
      EXPECT_EQ(e.code(), "AuthFailed");
    }
  }
  EXPECT_NO_THROW(gw->login(kOrg1, "alice", "correct horse"));
  EXPECT_THROW(gw->login(kOrg1, "bob", "x"), GatewayError);

  try
  {
    gw->login(kOrg1, "alice", "correct horse", RoleView::driver);
    ADD_FAILURE();
  }
  catch (const GatewayError &e)
  {
    EXPECT_EQ(e.code(), "NotADriver");
  }
  gw->upgrade_to_driver(s.token, "Alice", "Honda", "Fit", 2015);
  EXPECT_EQ(gw->login(kOrg1, "alice", "correct horse", RoleView::driver).view, RoleView::driver);

  try
  {
    gw->start_driving(s.token, {36.15, -86.78});
    ADD_FAILURE();
  }
  catch (const GatewayError &e)
  {
    EXPECT_EQ(e.code(), "NotADriver");
  }
  gw->logout(s.token);
  EXPECT_THROW(gw->info(s.token), GatewayError);
}

TEST(Driver, OffersAreEventDriven)
{
  auto gw = make_gateway();
  auto early = gw->register_user(kOrg1, "early", "pw");
  gw->request_ride(early.token, "Parthenon", "Nissan Stadium");

  auto d = make_driver(*gw, kOrg2, "dan");
  gw->start_driving(d.token, fixture().geocode("Music City Center"));
  gw->settle();
  EXPECT_TRUE(gw->offers(d.token).empty());

  auto late = gw->register_user(kOrg2, "late", "pw");
  auto key = gw->request_ride(late.token, "Ryman Auditorium", "Grand Ole Opry");
  gw->settle();
  auto offers = gw->offers(d.token);
  ASSERT_EQ(offers.size(), 1u);
  EXPECT_EQ(offers[0].key, key);
  EXPECT_EQ(offers[0].rider, late.user_id);
  EXPECT_EQ(offers[0].pickup, fixture().geocode("Ryman Auditorium"));
  EXPECT_NEAR(offers[0].distance_m,
              haversine_meters(fixture().geocode("Music City Center"), fixture().geocode("Ryman Auditorium")), 1e-6);

  auto events = gw->events_since(d.token, 0);
  EXPECT_EQ(std::count_if(events.begin(), events.end(), [](auto &e) { return e.type == "offer"; }), 1);

  auto rescanned = gw->rescan(d.token);
  EXPECT_EQ(rescanned.size(), 2u);
  EXPECT_EQ(gw->offers(d.token).size(), 2u);
}

TEST(Driver, LateAcceptIsRideTaken)
{
  auto gw = make_gateway();
  auto r = gw->register_user(kOrg1, "rita", "pw");
  auto d1 = make_driver(*gw, kOrg1, "d1");
  auto d2 = make_driver(*gw, kOrg2, "d2");
  gw->start_driving(d1.token, {36.16, -86.78});
  gw->start_driving(d2.token, {36.16, -86.78});
  auto key = gw->request_ride(r.token, "Bridgestone Arena", "Parthenon");
  gw->settle();
  ASSERT_EQ(gw->offers(d1.token).size(), 1u);
  ASSERT_EQ(gw->offers(d2.token).size(), 1u);

  gw->respond(d1.token, key, true);
  gw->settle();
  // d2's offer was withdrawn when the acceptance committed.
  EXPECT_TRUE(gw->offers(d2.token).empty());
  auto ev = gw->events_since(d2.token, 0);
  EXPECT_TRUE(std::any_of(ev.begin(), ev.end(), [](auto &e) { return e.type == "offer_withdrawn"; }));
}

TEST(Driver, DenyLeavesRequestOpen)
{
  auto gw = make_gateway();
  auto r = gw->register_user(kOrg1, "rita", "pw");
  auto d1 = make_driver(*gw, kOrg1, "d1");
  auto d2 = make_driver(*gw, kOrg2, "d2");
  gw->start_driving(d1.token, {36.16, -86.78});
  auto key = gw->request_ride(r.token, "Bridgestone Arena", "Parthenon");
  gw->settle();
  EXPECT_EQ(gw->respond(d1.token, key, false), "");
  EXPECT_TRUE(gw->offers(d1.token).empty());

  gw->start_driving(d2.token, {36.16, -86.78});
  auto open = gw->rescan(d2.token);
  ASSERT_EQ(open.size(), 1u);
  EXPECT_FALSE(gw->respond(d2.token, key, true).empty());
}

TEST(Rider, HappyPathHasFourProgressStates)
{
  auto gw = make_gateway();
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> wire;
  gw->network().wire_tap = [&](std::string_view ch, ByteView b) { wire.emplace_back(ch, Bytes(b.begin(), b.end())); };

  auto r = gw->register_user(kOrg1, "rider1", "s3cret-pass");
  auto d = make_driver(*gw, kOrg2, "driver1");
  gw->start_driving(d.token, fixture().geocode("Music City Center"));
  auto key = gw->request_ride(r.token, "Vanderbilt University", "Nashville International Airport");
  try
  {
    gw->request_ride(r.token, "Parthenon", "Nissan Stadium");
    ADD_FAILURE();
  }
  catch (const GatewayError &e)
  {
    EXPECT_EQ(e.code(), "RideAlreadyActive");
  }
  gw->settle();
  auto ride_id = gw->respond(d.token, key, true);
  gw->settle();
  EXPECT_EQ(gw->progress(r.token), std::vector<std::string>{kProgressAccepted});

  auto vandy = fixture().geocode("Vanderbilt University");
  auto airport = fixture().geocode("Nashville International Airport");
  try
  {
    gw->pickup(d.token, key, airport);
    ADD_FAILURE();
  }
  catch (const GatewayError &e)
  {
    EXPECT_EQ(e.code(), "NotAtPickupLocation");
  }
  gw->pickup(d.token, key, vandy);
  gw->settle();
  EXPECT_EQ(gw->dropoff(d.token, key, airport), ride_id);
  ASSERT_TRUE(gw->wait_for_progress(r.token, kProgressArchived));
  EXPECT_EQ(gw->progress(r.token), (std::vector<std::string>{kProgressAccepted, kProgressDriverArrived,
                                                              kProgressRideEnding, kProgressArchived}));

  auto events = gw->events_since(r.token, 0);
  std::vector<std::string> states;
  for (const auto &e : events)
  {
    if (e.type == "progress") states.push_back(e.data["state"]);
  }
  EXPECT_EQ(states, gw->progress(r.token));
  EXPECT_EQ(events.back().data["ride_id"], ride_id);

  auto history = gw->ride_history(r.token);
  ASSERT_EQ(history.size(), 1u);
  EXPECT_EQ(history[0]["ride_id"], ride_id);
  EXPECT_EQ(history[0]["role"], "rider");
  auto dh = gw->ride_history(d.token);
  ASSERT_EQ(dh.size(), 1u);
  EXPECT_EQ(dh[0]["role"], "driver");

  // Only (hash, salt) left the client; the plaintext never did.
  ASSERT_FALSE(wire.empty());
  for (const auto &[ch, bytes] : wire)
  {
    EXPECT_FALSE(contains(bytes, "s3cret-pass")) << ch;
    EXPECT_FALSE(contains(bytes, "pw-driver1")) << ch;
  }
  auto stored = gw->user_info(r.token)["password_hash"].get<std::string>();
  EXPECT_TRUE(std::any_of(wire.begin(), wire.end(), [&](auto &w) { return contains(w.second, stored); }));

  // A second ride is allowed once the first is archived.
  EXPECT_NO_THROW(gw->request_ride(r.token, "Parthenon", "Nissan Stadium"));
}

TEST(Rider, CoriderPrivacyScenario)
{
  auto gw = make_gateway();
  auto r1 = gw->register_user(kOrg1, "r1", "pw");
  auto r2 = gw->register_user(kOrg2, "r2", "pw");
  auto d = make_driver(*gw, kOrg1, "driver");
  gw->start_driving(d.token, {36.16, -86.78});
  auto p = fixture();
  auto k1 = gw->request_ride(r1.token, "Vanderbilt University", "Nashville International Airport");
  auto k2 = gw->request_ride(r2.token, "Bridgestone Arena", "Grand Ole Opry");
  gw->settle();
  gw->respond(d.token, k1, true);
  gw->respond(d.token, k2, true);
  gw->settle();

  gw->pickup(d.token, k1, p.geocode("Vanderbilt University"));
  gw->pickup(d.token, k2, p.geocode("Bridgestone Arena"));
  EXPECT_EQ(gw->on_board(d.token).size(), 2u);
  gw->dropoff(d.token, k1, p.geocode("Nashville International Airport"));
  gw->dropoff(d.token, k2, p.geocode("Grand Ole Opry"));
  ASSERT_TRUE(gw->wait_for_progress(r1.token, kProgressArchived));
  ASSERT_TRUE(gw->wait_for_progress(r2.token, kProgressArchived));

  auto at = [&](const SessionInfo &s, const std::string &place) {
    return s.user_id + "@" + format_geopoint(p.geocode(place));
  };
  auto h1 = gw->ride_history(r1.token)[0];
  auto h2 = gw->ride_history(r2.token)[0];
  EXPECT_EQ(entries(h1["witnessed_corider_pickups"]), std::set<std::string>{at(r2, "Bridgestone Arena")});
  EXPECT_TRUE(h1["witnessed_corider_dropoffs"].empty());
  EXPECT_TRUE(h2["witnessed_corider_pickups"].empty());
  EXPECT_EQ(entries(h2["witnessed_corider_dropoffs"]), std::set<std::string>{at(r1, "Nashville International Airport")});

  auto dh = gw->ride_history(d.token);
  ASSERT_EQ(dh.size(), 1u);
  EXPECT_EQ(entries(dh[0]["pickups"]),
            (std::set<std::string>{at(r1, "Vanderbilt University"), at(r2, "Bridgestone Arena")}));
  EXPECT_EQ(entries(dh[0]["dropoffs"]),
            (std::set<std::string>{at(r1, "Nashville International Airport"), at(r2, "Grand Ole Opry")}));
}

TEST(Threaded, ConcurrentAcceptsExactlyOneWins)
{
  GatewayOptions opts;
  opts.mode = GatewayMode::threaded;
  auto gw = make_gateway(opts);
  auto r = gw->register_user(kOrg1, "rita", "pw");
  auto d1 = make_driver(*gw, kOrg1, "d1");
  auto d2 = make_driver(*gw, kOrg2, "d2");
  gw->start_driving(d1.token, {36.16, -86.78});
  gw->start_driving(d2.token, {36.16, -86.78});
  auto key = gw->request_ride(r.token, "Bridgestone Arena", "Parthenon");

  auto has_offer = [&](const std::string &t) {
    for (int i = 0; i < 100 && gw->offers(t).empty(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    return !gw->offers(t).empty();
  };
  ASSERT_TRUE(has_offer(d1.token));
  ASSERT_TRUE(has_offer(d2.token));

  auto race = [&](const std::string &t) -> std::string {
    try
    {
      gw->respond(t, key, true);
      return "won";
    }
    catch (const GatewayError &e)
    {
      return e.code();
    }
  };
  auto a = std::async(std::launch::async, race, d1.token);
  auto b = std::async(std::launch::async, race, d2.token);
  std::multiset<std::string> results{a.get(), b.get()};
  EXPECT_EQ(results, (std::multiset<std::string>{"RideTaken", "won"}));

  for (int i = 0; i < 100 && gw->progress(r.token).empty(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  EXPECT_EQ(gw->progress(r.token), std::vector<std::string>{kProgressAccepted});
}
