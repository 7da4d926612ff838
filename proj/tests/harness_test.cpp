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

#include "hailchain/harness.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

using namespace hailchain;
using namespace hailchain::harness;

namespace {

// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
template <typename Cdf>
double ks_distance(std::vector<double> xs, Cdf cdf)
{
  std::sort(xs.begin(), xs.end());
  double n = static_cast<double>(xs.size()), d = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
  {
    double f = cdf(xs[i]);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

double mean(const std::vector<double> &xs) { return std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size(); }

}  // namespace

TEST(Profile, RejectsNonPositive)
{
  EXPECT_THROW(TrafficProfile::constant(0).validate(), InvalidProfile);
  EXPECT_THROW(TrafficProfile::constant(-5).validate(), InvalidProfile);
  EXPECT_THROW(TrafficProfile::poisson(0).validate(), InvalidProfile);
  EXPECT_THROW(TrafficProfile::poisson(-1).validate(), InvalidProfile);
  EXPECT_THROW(TrafficProfile::constant(NAN).validate(), InvalidProfile);
  EXPECT_THROW(generate_intervals(TrafficProfile::poisson(0), 10, 1), InvalidProfile);
  EXPECT_THROW(generate_intervals(TrafficProfile::constant(300), 0, 1), std::invalid_argument);
}

TEST(Profile, ParsesText)
{
  auto c = TrafficProfile::parse("constant:300");
  EXPECT_EQ(c.kind, TrafficProfile::Kind::constant);
  EXPECT_DOUBLE_EQ(c.value, 300);
  EXPECT_DOUBLE_EQ(c.deviation, 0.30);
  auto p = TrafficProfile::parse("poisson:30");
  EXPECT_EQ(p.kind, TrafficProfile::Kind::poisson);
  EXPECT_DOUBLE_EQ(p.mean_ms(), 1000.0 / 30);
  EXPECT_EQ(TrafficProfile::parse(p.str()).value, 30);
  for (auto bad : {"constant", "constant:", "constant:x", "poisson:-3", "burst:10", "constant:10ms"})
  {
    EXPECT_THROW(TrafficProfile::parse(bad), InvalidProfile) << bad;
  }
}

TEST(Intervals, ConstantIsUniformAroundDelay)
{
  for (double delay : {100.0, 300.0, 500.0})
  {
    auto xs = generate_intervals(TrafficProfile::constant(delay), 10000, 42);
    double lo = delay * 0.7, hi = delay * 1.3;
    for (double x : xs)
    {
      ASSERT_GE(x, lo);
      ASSERT_LE(x, hi);
    }
    auto d = ks_distance(xs, [&](double x) { return (x - lo) / (hi - lo); });
    EXPECT_LT(d, 0.02) << delay;
    EXPECT_NEAR(mean(xs), delay, delay * 0.05);
  }
}

TEST(Intervals, PoissonIsExponential)
{
  for (double lambda : {10.0, 50.0, 90.0})
  {
    auto xs = generate_intervals(TrafficProfile::poisson(lambda), 10000, 7);
    double m = 1000.0 / lambda;
    auto d = ks_distance(xs, [&](double x) { return 1 - std::exp(-x / m); });
    EXPECT_LT(d, 0.02) << lambda;
    EXPECT_NEAR(mean(xs), m, m * 0.05);
  }
}

TEST(Intervals, SeedDetermines)
{
  auto p = TrafficProfile::poisson(20);
  EXPECT_EQ(generate_intervals(p, 100, 3), generate_intervals(p, 100, 3));
  EXPECT_NE(generate_intervals(p, 100, 3), generate_intervals(p, 100, 4));
}

TEST(Report, WindowedMeans)
{
  std::vector<harness::detail::Sample> s;
  for (int i = 0; i < 25; ++i) s.push_back({double(i), 2.0 * i, 1.0});
  // Windows of 10: [0..9], [10..19]; the trailing five are dropped.
  auto [p, o, e, n] = harness::detail::windowed_means(s, 10);
  EXPECT_EQ(n, 2u);
  EXPECT_DOUBLE_EQ(p, (4.5 + 14.5) / 2);
  EXPECT_DOUBLE_EQ(o, 2 * (4.5 + 14.5) / 2);
  EXPECT_DOUBLE_EQ(e, 1.0);
  auto [p2, o2, e2, n2] = harness::detail::windowed_means(s, 100);
  EXPECT_EQ(n2, 1u);
  EXPECT_DOUBLE_EQ(p2, 12.0);
}

TEST(Load, CompletesRidesOnTwoOrgs)
{
  auto topo = netsim::Topology::standard(2, 2);
  netsim::Network net(topo, std::make_shared<RideChaincode>(), {.seed = 3, .trace = false});
  WorkloadSpec wl;
  wl.total_rides = 30;
  wl.workers = 4;
  auto r = run_load(net, wl, TrafficProfile::constant(100));
  EXPECT_EQ(r.rides_completed, 30u);
  EXPECT_EQ(r.success_count, 30 * kTxsPerRide);
  EXPECT_EQ(r.failure_count, 0u);
  EXPECT_EQ(r.submitted, r.success_count + r.failure_count);
  EXPECT_GT(r.tps, 0);
  EXPECT_GT(r.duration_s, 0);
  EXPECT_DOUBLE_EQ(r.tps, r.success_count / r.duration_s);
  EXPECT_TRUE(net.replicas_consistent());

  // Every ride ended: no open requests or active rides remain in state.
  std::size_t open = 0, archived = 0;
  net.peer(0).ledger->with_state([&](const WorldState &state) {
    for (const auto &[key, vv] : state.entries())
    {
      if (!vv.value) continue;
      if (key.rfind(keys::kRideRequest, 0) == 0) ++open;
      if (key.rfind(keys::kRide, 0) == 0) ++archived;
    }
  });
  EXPECT_EQ(open, 0u);
  EXPECT_EQ(archived, 30u * 2);  // rider copy and driver copy
}

TEST(Load, ZeroDriversTimesOut)
{
  WorkloadSpec wl;
  wl.total_rides = 4;
  wl.workers = 2;
  wl.drivers_per_worker = 0;
  EXPECT_THROW(run_load(netsim::Topology::standard(1, 2), wl, TrafficProfile::constant(100)), HarnessTimeout);
}

TEST(Load, SameSeedSameReport)
{
  WorkloadSpec wl;
  wl.total_rides = 12;
  wl.workers = 2;
  auto a = run_load(netsim::Topology::standard(2, 2), wl, TrafficProfile::poisson(20));
  auto b = run_load(netsim::Topology::standard(2, 2), wl, TrafficProfile::poisson(20));
  EXPECT_EQ(a.peer_ms, b.peer_ms);
  EXPECT_EQ(a.event_ms, b.event_ms);
  EXPECT_EQ(a.tps, b.tps);
}

TEST(Load, EventLatencyFollowsSendDelay)
{
  WorkloadSpec wl;
  wl.total_rides = 40;
  auto topo = netsim::Topology::standard(2, 2);
  auto fast = run_load(topo, wl, TrafficProfile::constant(100));
  auto slow = run_load(topo, wl, TrafficProfile::constant(500));
  EXPECT_GT(slow.event_ms, fast.event_ms);
  EXPECT_GT(fast.tps, slow.tps);
}

TEST(Sweep, PresetsHaveExpectedAxes)
{
  auto base = netsim::Topology::standard(2, 2);
  WorkloadSpec wl;
  auto c = sweeps::constant_delay(base, wl, 100, 500, 100);
  ASSERT_EQ(c.size(), 5u);
  EXPECT_EQ(c.front().axis_value, 100);
  EXPECT_EQ(c.back().profile.value, 500);
  auto p = sweeps::poisson_rate(base, wl, 10, 90, 10);
  ASSERT_EQ(p.size(), 9u);
  EXPECT_EQ(p[4].profile.kind, TrafficProfile::Kind::poisson);
  auto peers = sweeps::peers(EndorsementPolicy::Kind::load_balanced, 10, 1);
  ASSERT_EQ(peers.size(), 4u);
  EXPECT_EQ(peers.back().topology.peer_count(), 8u);
  EXPECT_EQ(peers.back().topology.orgs.size(), 1u);
  EXPECT_EQ(peers.back().workload.workers, 2u);
  auto orgs = sweeps::orgs(EndorsementPolicy::Kind::all_peers, 5, 1);
  ASSERT_EQ(orgs.size(), 8u);
  EXPECT_EQ(orgs[7].workload.workers, 16u);
  EXPECT_EQ(orgs[7].topology.peer_count(), 16u);
}

TEST(Csv, RoundTrip)
{
  std::vector<LatencyReport> rs(3);
  for (int i = 0; i < 3; ++i)
  {
    rs[i].axis_value = 100 * (i + 1);
    rs[i].peer_ms = 7.125 + i;
    rs[i].orderer_ms = 3.5;
    rs[i].event_ms = 1234.567;
    rs[i].tps = 12.25 * i;
  }
  auto path = std::filesystem::temp_directory_path() / "hailchain_csv_roundtrip.csv";
  export_csv(rs, path);
  auto rows = load_csv(path);
  std::filesystem::remove(path);
  ASSERT_EQ(rows.size(), 3u);
  for (int i = 0; i < 3; ++i)
  {
    EXPECT_NEAR(rows[i].axis_value, rs[i].axis_value, 1e-3);
    EXPECT_NEAR(rows[i].peer_ms, rs[i].peer_ms, 1e-3);
    EXPECT_NEAR(rows[i].orderer_ms, rs[i].orderer_ms, 1e-3);
    EXPECT_NEAR(rows[i].event_ms, rs[i].event_ms, 1e-3);
    EXPECT_NEAR(rows[i].tps, rs[i].tps, 1e-3);
  }
  EXPECT_EQ(to_csv(rs).substr(0, std::string(kCsvHeader).size() + 2), std::string(kCsvHeader) + "\r\n");
}

TEST(Csv, Preconditions)
{
  EXPECT_THROW(to_csv({}), std::invalid_argument);
  EXPECT_THROW(export_csv({LatencyReport{}}, "/nonexistent-dir/x.csv"), IoError);
  EXPECT_THROW(load_csv("/nonexistent-dir/x.csv"), IoError);
  EXPECT_THROW(parse_csv("a,b\r\n1,2\r\n"), std::invalid_argument);
  EXPECT_THROW(parse_csv(std::string(kCsvHeader) + "\r\n1,2,3\r\n"), std::invalid_argument);
}
