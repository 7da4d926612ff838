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

// Ride workload generator and latency reporting.
//
// Each worker owns a pool of riders and drivers in one organization and
// sends one transaction per traffic-profile interval, picking the next ready
// ride step (a step is ready once the previous step of the same ride has
// committed) or starting a new ride. Setup transactions (registration and
// driver upgrades) run before measurement and are not reported.

#include "hailchain/chaincode.hpp"
#include "hailchain/netsim.hpp"

#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hailchain::harness {

using netsim::Micros;

class InvalidProfile : public std::invalid_argument
{
public:
  explicit InvalidProfile(const std::string &what) : std::invalid_argument("InvalidProfile: " + what) {}
};

class HarnessTimeout : public std::runtime_error
{
public:
  explicit HarnessTimeout(const std::string &what) : std::runtime_error("HarnessTimeout: " + what) {}
};

class IoError : public std::runtime_error
{
public:
  explicit IoError(const std::string &what) : std::runtime_error("IoError: " + what) {}
};

// ---------------------------------------------------------------------------
// Traffic profiles
// ---------------------------------------------------------------------------

struct TrafficProfile
{
  enum class Kind
  {
    constant,
    poisson,
  };

  Kind kind = Kind::constant;
  double value = 300.0;      // constant: delay in ms; poisson: lambda in tx/s
  double deviation = 0.30;   // constant only

  static TrafficProfile constant(double delay_ms, double deviation = 0.30)
  {
    return {Kind::constant, delay_ms, deviation};
  }
  static TrafficProfile poisson(double lambda_per_s) { return {Kind::poisson, lambda_per_s, 0}; }

  void validate() const
  {
    if (!(value > 0) || !std::isfinite(value))
    {
      throw InvalidProfile(kind == Kind::constant ? "delay must be positive" : "lambda must be positive");
    }
    if (kind == Kind::constant && !(deviation >= 0 && deviation < 1)) throw InvalidProfile("deviation must be in [0, 1)");
  }

  double mean_ms() const { return kind == Kind::constant ? value : 1000.0 / value; }

  std::string str() const
  {
    std::ostringstream os;
    os << (kind == Kind::constant ? "constant:" : "poisson:") << value;
    return os.str();
  }

  /// "constant:300" or "poisson:30".
  static TrafficProfile parse(const std::string &s)
  {
    auto colon = s.find(':');
    if (colon == std::string::npos) throw InvalidProfile("expected constant:<ms> or poisson:<lambda>, got '" + s + "'");
    auto kind = s.substr(0, colon);
    double v = 0;
    try
    {
      std::size_t used = 0;
      v = std::stod(s.substr(colon + 1), &used);
      if (used != s.size() - colon - 1) throw std::invalid_argument("trailing");
    }
    catch (const std::exception &)
    {
      throw InvalidProfile("bad number in '" + s + "'");
    }
    TrafficProfile p;
    if (kind == "constant") p = constant(v);
    else if (kind == "poisson") p = poisson(v);
    else throw InvalidProfile("unknown profile '" + kind + "'");
    p.validate();
    return p;
  }
};

/// Inter-send times in milliseconds.
class IntervalGenerator
{
public:
  IntervalGenerator(TrafficProfile profile, std::uint64_t seed) : profile_(profile), rng_(seed)
  {
    profile_.validate();
  }

  double next_ms()
  {
    if (profile_.kind == TrafficProfile::Kind::constant)
    {
      auto d = profile_.value * profile_.deviation;
      return std::uniform_real_distribution<double>(profile_.value - d, profile_.value + d)(rng_);
    }
    return std::exponential_distribution<double>(profile_.value)(rng_) * 1000.0;
  }

private:
  TrafficProfile profile_;
  std::mt19937_64 rng_;
};

inline std::vector<double> generate_intervals(const TrafficProfile &profile, std::size_t n, std::uint64_t seed)
{
  if (n == 0) throw std::invalid_argument("generate_intervals: n must be positive");
  IntervalGenerator gen(profile, seed);
  std::vector<double> out(n);
  for (auto &x : out) x = gen.next_ms();
  return out;
}

// ---------------------------------------------------------------------------
// Workload and report
// ---------------------------------------------------------------------------

inline constexpr std::size_t kTxsPerRide = 6;

struct WorkloadSpec
{
  std::size_t total_rides = 1000;
  std::size_t workers = 4;
  std::size_t riders_per_worker = 64;
  std::size_t drivers_per_worker = 64;
  std::uint64_t seed = 7;
  double stall_timeout_ms = 120000;  // simulated time without any commit
  std::size_t window = 1000;
  std::size_t max_retries = 3;
};

struct LatencyReport
{
  double axis_value = 0;
  double peer_ms = 0;
  double orderer_ms = 0;
  double event_ms = 0;
  double tps = 0;
  std::size_t submitted = 0;
  std::size_t success_count = 0;
  std::size_t failure_count = 0;
  std::size_t rides_completed = 0;
  std::size_t windows = 0;
  double duration_s = 0;
  double host_seconds = 0;
};

namespace detail {

struct Sample
{
  double peer_ms;
  double orderer_ms;
  double event_ms;
};

/// Mean of per-window means over consecutive non-overlapping windows; a
/// trailing partial window only counts when there is no full one.
inline std::tuple<double, double, double, std::size_t> windowed_means(const std::vector<Sample> &s, std::size_t w)
{
  if (s.empty()) return {0, 0, 0, 0};
  std::size_t full = s.size() / w;
  std::size_t windows = full == 0 ? 1 : full;
  std::size_t len = full == 0 ? s.size() : w;
  double p = 0, o = 0, e = 0;
  for (std::size_t k = 0; k < windows; ++k)
  {
    double wp = 0, wo = 0, we = 0;
    for (std::size_t i = k * len; i < (k + 1) * len; ++i)
    {
      wp += s[i].peer_ms;
      wo += s[i].orderer_ms;
      we += s[i].event_ms;
    }
    p += wp / static_cast<double>(len);
    o += wo / static_cast<double>(len);
    e += we / static_cast<double>(len);
  }
  auto n = static_cast<double>(windows);
  return {p / n, o / n, e / n, windows};
}

}  // namespace detail

/// Drives ride lifecycles over an existing network until `total_rides` have
/// completed all six steps.
class LoadRun
{
public:
  LoadRun(netsim::Network &net, WorkloadSpec spec, TrafficProfile profile)
      : net_(net), spec_(spec), profile_(profile), rng_(spec.seed)
  {
    profile_.validate();
    if (spec_.workers == 0) throw std::invalid_argument("workload needs at least one worker");
    if (spec_.riders_per_worker == 0) throw std::invalid_argument("workload needs riders");
  }

  LatencyReport run()
  {
    auto host_start = std::chrono::steady_clock::now();
    setup();
    measure_start_ = net_.scheduler().now();
    last_progress_ = measure_start_;
    last_commit_ = measure_start_;
    for (auto &w : workers_) tick(w);

    auto &sched = net_.scheduler();
    const auto stall = netsim::from_ms(spec_.stall_timeout_ms);
    while (rides_completed_ < spec_.total_rides)
    {
      if (!sched.run_next())
      {
        throw HarnessTimeout("network idle with " + std::to_string(spec_.total_rides - rides_completed_) +
                             " rides unfinished");
      }
      if (sched.now() - last_progress_ > stall)
      {
        throw HarnessTimeout("no commit for " + std::to_string(spec_.stall_timeout_ms) + " ms");
      }
    }

    LatencyReport r;
    auto [p, o, e, windows] = detail::windowed_means(samples_, spec_.window);
    r.peer_ms = p;
    r.orderer_ms = o;
    r.event_ms = e;
    r.windows = windows;
    r.submitted = submitted_;
    r.success_count = successes_;
    r.failure_count = failures_;
    r.rides_completed = rides_completed_;
    r.duration_s = netsim::to_ms(last_commit_ - measure_start_) / 1000.0;
    r.tps = r.duration_s > 0 ? static_cast<double>(successes_) / r.duration_s : 0;
    r.host_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - host_start).count();
    return r;
  }

private:
  struct Ride
  {
    std::size_t rider;
    std::optional<std::size_t> driver;
    std::string key;
    std::string pickup;
    std::string dest;
    std::size_t retries = 0;
  };

  struct Step
  {
    std::size_t ride;
    int stage;
  };

  struct Worker
  {
    std::size_t index = 0;
    std::string org;
    std::vector<netsim::ClientIdentity> riders;
    std::vector<netsim::ClientIdentity> drivers;
    std::deque<std::size_t> free_riders;
    std::deque<std::size_t> free_drivers;
    std::deque<Step> ready;
    std::deque<Step> awaiting_driver;
    std::vector<Ride> rides;
    std::size_t quota = 0;
    std::unique_ptr<IntervalGenerator> gen;
    bool idle = false;
  };

  static constexpr const char *kFunctions[kTxsPerRide] = {"request_ride", "accept_ride", "set_ride_destination",
                                                          "pickup_rider", "dropoff_rider", "leave_driver"};

  std::string random_point()
  {
    std::uniform_real_distribution<double> lat(36.05, 36.25), lon(-86.90, -86.60);
    return format_geopoint({std::round(lat(rng_) * 1e5) / 1e5, std::round(lon(rng_) * 1e5) / 1e5});
  }

  void setup()
  {
    const auto &orgs = net_.topology().orgs;
    std::size_t pending = 0;
    std::size_t setup_failures = 0;
    auto on_done = [&](const netsim::TxOutcome &o) {
      --pending;
      if (!o.ok()) ++setup_failures;
    };
    Bytes salt(16, 0x5a);
    auto hash = to_hex(password_digest(salt, "bench"));
    const std::vector<std::string> reg{hash, to_hex(salt)};

    std::size_t base = spec_.total_rides / spec_.workers, extra = spec_.total_rides % spec_.workers;
    workers_.resize(spec_.workers);
    for (std::size_t w = 0; w < spec_.workers; ++w)
    {
      auto &wk = workers_[w];
      wk.index = w;
      wk.org = orgs[w % orgs.size()].name;
      wk.quota = base + (w < extra ? 1 : 0);
      std::seed_seq seq{spec_.seed, static_cast<std::uint64_t>(w), std::uint64_t{0x7e57}};
      std::uint64_t s;
      seq.generate(reinterpret_cast<std::uint32_t *>(&s), reinterpret_cast<std::uint32_t *>(&s) + 2);
      wk.gen = std::make_unique<IntervalGenerator>(profile_, s);
      auto tag = "bench" + std::to_string(spec_.seed) + "w" + std::to_string(w);
      auto riders = std::min(spec_.riders_per_worker, std::max<std::size_t>(wk.quota, 1));
      for (std::size_t i = 0; i < riders; ++i)
      {
        wk.riders.push_back(net_.enroll(wk.org, tag + "r" + std::to_string(i)));
        wk.free_riders.push_back(i);
        ++pending;
        net_.submit(wk.riders.back(), "register_user", reg, on_done);
      }
      auto drivers = std::min(spec_.drivers_per_worker, std::max<std::size_t>(wk.quota, 1));
      for (std::size_t i = 0; i < drivers; ++i)
      {
        wk.drivers.push_back(net_.enroll(wk.org, tag + "d" + std::to_string(i)));
        wk.free_drivers.push_back(i);
        ++pending;
        const auto &id = wk.drivers.back();
        net_.submit(id, "register_user", reg, [&, id](const netsim::TxOutcome &o) {
          if (!o.ok())
          {
            on_done(o);
            return;
          }
          net_.submit(id, "upgrade_to_driver", {"Bench Driver", "Make", "Model", "2018"}, on_done);
        });
      }
    }
    net_.scheduler().run_until([&] { return pending == 0; });
    if (pending != 0 || setup_failures != 0)
    {
      throw std::runtime_error("harness setup failed: " + std::to_string(setup_failures) + " failures, " +
                               std::to_string(pending) + " unfinished");
    }
  }

  void tick(Worker &w)
  {
    // Stage-1 steps waiting for a driver take priority once one frees up.
    while (!w.awaiting_driver.empty() && !w.free_drivers.empty())
    {
      auto step = w.awaiting_driver.front();
      w.awaiting_driver.pop_front();
      w.rides[step.ride].driver = w.free_drivers.front();
      w.free_drivers.pop_front();
      w.ready.push_front(step);
    }

    std::optional<Step> step;
    while (!w.ready.empty() && !step)
    {
      auto s = w.ready.front();
      w.ready.pop_front();
      if (s.stage == 1 && !w.rides[s.ride].driver)
      {
        if (w.free_drivers.empty())
        {
          w.awaiting_driver.push_back(s);
          continue;
        }
        w.rides[s.ride].driver = w.free_drivers.front();
        w.free_drivers.pop_front();
      }
      step = s;
    }
    if (!step && w.rides.size() < w.quota && !w.free_riders.empty())
    {
      Ride ride;
      ride.rider = w.free_riders.front();
      w.free_riders.pop_front();
      ride.key = keys::ride_request(w.riders[ride.rider].id());
      ride.pickup = random_point();
      ride.dest = random_point();
      w.rides.push_back(std::move(ride));
      step = Step{w.rides.size() - 1, 0};
    }
    if (!step)
    {
      w.idle = true;
      return;
    }
    w.idle = false;
    send(w, *step);
    auto wi = w.index;
    net_.scheduler().after(netsim::from_ms(w.gen->next_ms()), [this, wi] { tick(workers_[wi]); });
  }

  void send(Worker &w, Step step)
  {
    auto &ride = w.rides[step.ride];
    const auto &rider = w.riders[ride.rider];
    std::vector<std::string> args;
    const netsim::ClientIdentity *who = &rider;
    switch (step.stage)
    {
    case 0: args = {ride.pickup}; break;
    case 1: args = {ride.key}; break;
    case 2: args = {ride.dest}; break;
    case 3: args = {ride.key, ride.pickup}; break;
    case 4: args = {ride.key, ride.dest}; break;
    default: args = {ride.dest}; break;
    }
    if (step.stage == 1 || step.stage == 3 || step.stage == 4) who = &w.drivers[*ride.driver];
    ++submitted_;
    auto wi = w.index;
    net_.submit(*who, kFunctions[step.stage], std::move(args),
                [this, wi, step](const netsim::TxOutcome &o) { completed(workers_[wi], step, o); });
  }

  void completed(Worker &w, Step step, const netsim::TxOutcome &o)
  {
    auto &ride = w.rides[step.ride];
    if (!o.ok())
    {
      ++failures_;
      if (++ride.retries > spec_.max_retries)
      {
        throw std::runtime_error("ride step " + std::string(kFunctions[step.stage]) + " failed repeatedly: " +
                                 o.code() + " " + o.message);
      }
      w.ready.push_back(step);
    }
    else
    {
      ++successes_;
      samples_.push_back({o.peer_ms, o.orderer_ms, o.event_ms});
      last_progress_ = net_.scheduler().now();
      last_commit_ = last_progress_;
      if (step.stage + 1 < static_cast<int>(kTxsPerRide))
      {
        w.ready.push_back({step.ride, step.stage + 1});
      }
      else
      {
        ++rides_completed_;
        w.free_riders.push_back(ride.rider);
        w.free_drivers.push_back(*ride.driver);
      }
    }
    if (w.idle) tick(w);
  }

  netsim::Network &net_;
  WorkloadSpec spec_;
  TrafficProfile profile_;
  std::mt19937_64 rng_;
  std::vector<Worker> workers_;
  std::vector<detail::Sample> samples_;
  std::size_t submitted_ = 0;
  std::size_t successes_ = 0;
  std::size_t failures_ = 0;
  std::size_t rides_completed_ = 0;
  Micros measure_start_ = 0;
  Micros last_progress_ = 0;
  Micros last_commit_ = 0;
};

inline LatencyReport run_load(netsim::Network &net, const WorkloadSpec &spec, const TrafficProfile &profile)
{
  return LoadRun(net, spec, profile).run();
}

/// Builds a fresh ride network for `topology` and runs the workload on it.
inline LatencyReport run_load(const netsim::Topology &topology, const WorkloadSpec &spec,
                              const TrafficProfile &profile, netsim::ClockMode clock = netsim::ClockMode::virtual_time)
{
  netsim::Network net(topology, std::make_shared<RideChaincode>(), {.seed = spec.seed, .clock = clock, .trace = false});
  return run_load(net, spec, profile);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepPoint
{
  double axis_value = 0;
  netsim::Topology topology;
  WorkloadSpec workload;
  TrafficProfile profile;
};

inline std::vector<LatencyReport> run_sweep(const std::vector<SweepPoint> &points)
{
  std::vector<LatencyReport> out;
  for (const auto &p : points)
  {
    auto r = run_load(p.topology, p.workload, p.profile);
    r.axis_value = p.axis_value;
    out.push_back(r);
  }
  return out;
}

namespace sweeps {

/// Constant-rate delays (ms), the given base topology and workload.
inline std::vector<SweepPoint> constant_delay(const netsim::Topology &base, const WorkloadSpec &wl, double from,
                                              double to, double step)
{
  std::vector<SweepPoint> out;
  for (double d = from; d <= to + 1e-9; d += step) out.push_back({d, base, wl, TrafficProfile::constant(d)});
  return out;
}

/// Poisson rates (tx/s).
inline std::vector<SweepPoint> poisson_rate(const netsim::Topology &base, const WorkloadSpec &wl, double from,
                                            double to, double step)
{
  std::vector<SweepPoint> out;
  for (double l = from; l <= to + 1e-9; l += step) out.push_back({l, base, wl, TrafficProfile::poisson(l)});
  return out;
}

/// One organization with 2, 4, 6, 8 peers; two workers at a constant 200 ms.
inline std::vector<SweepPoint> peers(EndorsementPolicy::Kind policy, std::size_t rides_per_point, std::uint64_t seed)
{
  std::vector<SweepPoint> out;
  for (std::size_t n = 2; n <= 8; n += 2)
  {
    auto topo = netsim::Topology::standard(1, n);
    topo.policy = policy;
    WorkloadSpec wl;
    wl.total_rides = rides_per_point;
    wl.workers = 2;
    wl.seed = seed;
    out.push_back({static_cast<double>(n), topo, wl, TrafficProfile::constant(200)});
  }
  return out;
}

/// 1..8 organizations of two peers, two workers per organization at a
/// constant 200 ms, so offered traffic grows with the organization count.
inline std::vector<SweepPoint> orgs(EndorsementPolicy::Kind policy, std::size_t rides_per_worker, std::uint64_t seed,
                                    std::size_t max_orgs = 8)
{
  std::vector<SweepPoint> out;
  for (std::size_t n = 1; n <= max_orgs; ++n)
  {
    auto topo = netsim::Topology::standard(n, 2);
    topo.policy = policy;
    WorkloadSpec wl;
    wl.workers = 2 * n;
    wl.total_rides = rides_per_worker * wl.workers;
    wl.seed = seed;
    out.push_back({static_cast<double>(n), topo, wl, TrafficProfile::constant(200)});
  }
  return out;
}

}  // namespace sweeps

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvRow
{
  double axis_value = 0;
  double peer_ms = 0;
  double orderer_ms = 0;
  double event_ms = 0;
  double tps = 0;
};

inline constexpr const char *kCsvHeader = "axis_value,peer_ms,orderer_ms,event_ms,tps";

inline std::string to_csv(const std::vector<LatencyReport> &reports)
{
  if (reports.empty()) throw std::invalid_argument("export_csv: no reports");
  std::string out = std::string(kCsvHeader) + "\r\n";
  char buf[256];
  for (const auto &r : reports)
  {
    std::snprintf(buf, sizeof buf, "%.3f,%.3f,%.3f,%.3f,%.3f\r\n", r.axis_value, r.peer_ms, r.orderer_ms, r.event_ms,
                  r.tps);
    out += buf;
  }
  return out;
}

inline void export_csv(const std::vector<LatencyReport> &reports, const std::filesystem::path &path)
{
  auto text = to_csv(reports);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

inline std::vector<CsvRow> parse_csv(const std::string &text)
{
  std::istringstream in(text);
  std::string line;
  std::vector<CsvRow> rows;
  bool header = true;
  while (std::getline(in, line))
  {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header)
    {
      if (line != kCsvHeader) throw std::invalid_argument("unexpected CSV header '" + line + "'");
      header = false;
      continue;
    }
    CsvRow r;
    double *fields[] = {&r.axis_value, &r.peer_ms, &r.orderer_ms, &r.event_ms, &r.tps};
    std::istringstream ls(line);
    std::string cell;
    std::size_t i = 0;
    while (std::getline(ls, cell, ','))
    {
      if (i >= 5) throw std::invalid_argument("too many CSV fields in '" + line + "'");
      *fields[i++] = std::stod(cell);
    }
    if (i != 5) throw std::invalid_argument("expected 5 CSV fields in '" + line + "'");
    rows.push_back(r);
  }
  if (header) throw std::invalid_argument("CSV has no header");
  return rows;
}

inline std::vector<CsvRow> load_csv(const std::filesystem::path &path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str());
}

}  // namespace hailchain::harness
