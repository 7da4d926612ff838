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

// Client application logic: wallet, sessions, the driver offer loop and the
// rider request flow.
//
// All gateway state lives on the network's scheduler loop. Public methods
// marshal onto it through call(): in driven mode the calling thread runs the
// scheduler until the operation completes; in threaded mode a dedicated loop
// thread pumps a wall-clock scheduler and callers block on the result.

#include "hailchain/chaincode.hpp"
#include "hailchain/netsim.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hailchain::gateway {

/// Error with a stable code: AuthFailed, NotADriver, NotARider, GeocodeMiss,
/// DuplicateLocalId, RideTaken, NoSession, Timeout, InvalidArgument,
/// TxRejected, or a chaincode/validation code passed through.
class GatewayError : public std::runtime_error
{
public:
  GatewayError(std::string code, const std::string &message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)), message_(message)
  {}

  const std::string &code() const { return code_; }
  const std::string &message() const { return message_; }

private:
  std::string code_;
  std::string message_;
};

// ---------------------------------------------------------------------------
// Places
// ---------------------------------------------------------------------------

struct Place
{
  std::string name;
  GeoPoint point;
};

class Places
{
public:
  Places() = default;

  static Places from_json(const nlohmann::json &j)
  {
    Places p;
    for (const auto &e : j.at("places"))
    {
      auto name = e.at("name").get<std::string>();
      auto point = GeoPoint{e.at("lat").get<double>(), e.at("lon").get<double>()};
      if (!GeoPoint::in_range(point.lat, point.lon)) throw std::invalid_argument("place '" + name + "' has an invalid point");
      if (!p.index_.emplace(normalize(name), p.places_.size()).second)
      {
        throw std::invalid_argument("duplicate place '" + name + "'");
      }
      p.places_.push_back({name, point});
    }
    return p;
  }

  static Places load(const std::filesystem::path &path)
  {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open places file " + path.string());
    return from_json(nlohmann::json::parse(f));
  }

  /// Case-insensitive exact name lookup.
  GeoPoint geocode(const std::string &name) const
  {
    auto it = index_.find(normalize(name));
    if (name.empty() || it == index_.end()) throw GatewayError("GeocodeMiss", "unknown place '" + name + "'");
    return places_[it->second].point;
  }

  /// A place name or a literal "lat,lon".
  GeoPoint resolve(const std::string &text) const
  {
    if (auto p = parse_geopoint(text)) return *p;
    return geocode(text);
  }

  const std::vector<Place> &all() const { return places_; }

private:
  static std::string normalize(std::string s)
  {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
  }

  std::vector<Place> places_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

enum class RoleView
{
  rider,
  driver,
};

inline std::string_view to_string(RoleView v) { return v == RoleView::rider ? "rider" : "driver"; }

inline RoleView role_view_from_string(const std::string &s)
{
  if (s == "rider") return RoleView::rider;
  if (s == "driver") return RoleView::driver;
  throw GatewayError("InvalidArgument", "role must be rider or driver");
}

struct SessionInfo
{
  std::string token;
  std::string org;
  std::string local_id;
  std::string user_id;
  RoleView view = RoleView::rider;
};

struct Offer
{
  std::string key;
  std::string rider;
  GeoPoint pickup;
  double distance_m = 0;  // from the driver's stated location

  nlohmann::json json() const
  {
    return {{"key", key}, {"rider", rider}, {"pickup", format_geopoint(pickup)}, {"distance_m", distance_m}};
  }
};

/// One entry in a session's event stream (offers, progress, notices).
struct SessionEvent
{
  std::uint64_t seq = 0;
  std::string type;
  nlohmann::json data;
};

/// Append-only per-session event log; readers block for new entries.
class EventLog
{
public:
  void push(std::string type, nlohmann::json data)
  {
    {
      std::lock_guard lock(mutex_);
      events_.push_back({events_.size() + 1, std::move(type), std::move(data)});
    }
    cv_.notify_all();
  }

  /// Events with seq > `after`, waiting up to `wait` for at least one.
  std::vector<SessionEvent> since(std::uint64_t after, std::chrono::milliseconds wait = {})
  {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, wait, [&] { return closed_ || events_.size() > after; });
    if (after >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(after), events_.end()};
  }

  void close()
  {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const
  {
    std::lock_guard lock(mutex_);
    return closed_;
  }

private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<SessionEvent> events_;
  bool closed_ = false;
};

inline constexpr const char *kProgressAccepted = "accepted";
inline constexpr const char *kProgressDriverArrived = "driver_arrived";
inline constexpr const char *kProgressRideEnding = "ride_ending";
inline constexpr const char *kProgressArchived = "archived";

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

enum class GatewayMode
{
  driven,
  threaded,
};

struct GatewayOptions
{
  std::uint64_t seed = 1;
  GatewayMode mode = GatewayMode::driven;
  std::chrono::milliseconds call_timeout{30000};
  std::size_t retries = 3;  // ReadConflict retries for idempotent operations
  bool trace = false;
};

class Gateway
{
public:
  Gateway(netsim::Topology topology, Places places, GatewayOptions options = {})
      : options_(options), places_(std::move(places)), rng_(options.seed)
  {
    auto clock = options.mode == GatewayMode::threaded ? netsim::ClockMode::wall : netsim::ClockMode::virtual_time;
    net_ = std::make_unique<netsim::Network>(std::move(topology), std::make_shared<RideChaincode>(),
                                             netsim::NetworkOptions{options.seed, clock, options.trace});
    if (options.mode == GatewayMode::threaded)
    {
      loop_ = std::thread([this] {
        while (!stop_) net_->scheduler().pump(std::chrono::milliseconds(20));
      });
    }
  }

  Gateway(const Gateway &) = delete;
  Gateway &operator=(const Gateway &) = delete;

  ~Gateway()
  {
    stop_ = true;
    if (loop_.joinable())
    {
      net_->scheduler().wake();
      loop_.join();
    }
    std::lock_guard lock(sessions_mutex_);
    for (auto &[token, s] : sessions_) s->events.close();
  }

  const Places &places() const { return places_; }
  const GatewayOptions &options() const { return options_; }

  /// The underlying network. Only safe to touch from the loop or in driven mode.
  netsim::Network &network() { return *net_; }

  /// Driven mode: runs the network until nothing is pending.
  void settle()
  {
    if (options_.mode != GatewayMode::driven) throw std::logic_error("settle() is only available in driven mode");
    net_->run_until_idle();
  }

  /// Peer count, chain height at the first peer and open sessions.
  nlohmann::json status()
  {
    return call<nlohmann::json>([this](Done<nlohmann::json> done) {
      std::size_t sessions;
      {
        std::lock_guard lock(sessions_mutex_);
        sessions = sessions_.size();
      }
      done.ok({{"peers", net_->peer_count()},
               {"orgs", net_->topology().orgs.size()},
               {"height", net_->peer(0).ledger->height()},
               {"sessions", sessions}});
    });
  }

  /// Committed chain as seen by one peer.
  Chain chain(std::size_t peer = 0)
  {
    return call<Chain>([=, this](Done<Chain> done) { done.ok(net_->peer(peer).ledger->chain()); });
  }

  // -- account ------------------------------------------------------------

  /// Issues an identity, transacts register_user with a client-side salted
  /// hash and opens a rider session.
  SessionInfo register_user(const std::string &org, const std::string &local_id, const std::string &password,
                            const std::string &name = "")
  {
    if (password.empty()) throw GatewayError("InvalidArgument", "password must not be empty");
    return call<SessionInfo>([=, this](Done<SessionInfo> done) {
      netsim::ClientIdentity id;
      try
      {
        id = net_->enroll(org, local_id);
      }
      catch (const IdentityError &e)
      {
        if (e.code() == IdentityErrc::DuplicateLocalId) throw GatewayError("DuplicateLocalId", e.what());
        throw GatewayError("InvalidArgument", e.what());
      }
      wallet_[{org, local_id}] = id;
      Bytes salt(16);
      for (auto &b : salt) b = static_cast<std::uint8_t>(rng_());
      std::vector<std::string> args{to_hex(password_digest(salt, password)), to_hex(salt)};
      if (!name.empty()) args.push_back(name);
      net_->submit(id, "register_user", std::move(args), [=, this](const netsim::TxOutcome &o) {
        if (!o.ok()) return done.fail(tx_error(o));
        done.ok(open_session(id, RoleView::rider));
      });
    });
  }

  /// Authenticates against the stored (hash, salt) fetched with get_user_info.
  SessionInfo login(const std::string &org, const std::string &local_id, const std::string &password,
                    RoleView view = RoleView::rider)
  {
    return call<SessionInfo>([=, this](Done<SessionInfo> done) {
      auto it = wallet_.find({org, local_id});
      if (it == wallet_.end()) throw GatewayError("AuthFailed", "unknown user or wrong password");
      auto id = it->second;
      net_->query(id, "get_user_info", {}, [=, this](const netsim::QueryOutcome &q) {
        if (!q.ok) return done.fail(GatewayError("AuthFailed", "unknown user or wrong password"));
        auto user = q.json();
        auto salt = from_hex(user.value("salt", ""));
        if (to_hex(password_digest(salt, password)) != user.value("password_hash", ""))
        {
          return done.fail(GatewayError("AuthFailed", "unknown user or wrong password"));
        }
        if (view == RoleView::driver && user["driver"].is_null())
        {
          return done.fail(GatewayError("NotADriver", local_id + " has not upgraded to driver"));
        }
        done.ok(open_session(id, view));
      });
    });
  }

  void logout(const std::string &token)
  {
    call<bool>([=, this](Done<bool> done) {
      auto s = session(token);
      if (s->subscription) net_->unsubscribe(*s->subscription);
      s->events.close();
      {
        std::lock_guard lock(sessions_mutex_);
        sessions_.erase(token);
      }
      done.ok(true);
    });
  }

  SessionInfo info(const std::string &token) { return session(token)->info; }

  void upgrade_to_driver(const std::string &token, const std::string &name, const std::string &make,
                         const std::string &model, int year)
  {
    call<bool>([=, this](Done<bool> done) {
      auto s = session(token);
      net_->submit(s->identity, "upgrade_to_driver", {name, make, model, std::to_string(year)},
                   [=](const netsim::TxOutcome &o) {
                     if (!o.ok()) return done.fail(tx_error(o));
                     done.ok(true);
                   });
    });
  }

  nlohmann::json user_info(const std::string &token)
  {
    return call<nlohmann::json>([=, this](Done<nlohmann::json> done) {
      auto s = session(token);
      net_->query(s->identity, "get_user_info", {}, [=](const netsim::QueryOutcome &q) {
        if (!q.ok) return done.fail(query_error(q));
        done.ok(q.json());
      });
    });
  }

  // -- driver -------------------------------------------------------------

  /// Subscribes to ride requests committed from now on.
  void start_driving(const std::string &token, GeoPoint location)
  {
    if (!GeoPoint::in_range(location.lat, location.lon)) throw GatewayError("InvalidArgument", "invalid location");
    call<bool>([=, this](Done<bool> done) {
      auto s = session(token);
      require_driver(*s);
      s->location = location;
      s->driving = true;
      done.ok(true);
    });
  }

  std::vector<Offer> offers(const std::string &token)
  {
    return call<std::vector<Offer>>([=, this](Done<std::vector<Offer>> done) {
      auto s = session(token);
      std::vector<Offer> out;
      for (const auto &[key, o] : s->offers) out.push_back(o);
      done.ok(std::move(out));
    });
  }

  /// Still-open requests from before the driver started listening.
  std::vector<Offer> rescan(const std::string &token)
  {
    return call<std::vector<Offer>>([=, this](Done<std::vector<Offer>> done) {
      auto s = session(token);
      require_driver(*s);
      net_->query(s->identity, "list_open_requests", {}, [=, this](const netsim::QueryOutcome &q) {
        if (!q.ok) return done.fail(query_error(q));
        std::vector<Offer> out;
        for (const auto &e : q.json())
        {
          auto o = make_offer(*s, e.at("key").get<std::string>(), *parse_geopoint(e.at("pickup").get<std::string>()));
          if (!s->offers.contains(o.key))
          {
            s->offers[o.key] = o;
            s->events.push("offer", o.json());
          }
          out.push_back(o);
        }
        done.ok(std::move(out));
      });
    });
  }

  /// Accepts or denies an offer. A denied request stays open for others.
  /// Losing an accept race raises RideTaken; accepts are never retried.
  std::string respond(const std::string &token, const std::string &key, bool accept)
  {
    return call<std::string>([=, this](Done<std::string> done) {
      auto s = session(token);
      require_driver(*s);
      auto it = s->offers.find(key);
      if (it == s->offers.end()) throw GatewayError("InvalidArgument", "no offer for " + key);
      auto offer = it->second;
      s->offers.erase(it);
      if (!accept) return done.ok("");
      net_->submit(s->identity, "accept_ride", {key}, [=, this](const netsim::TxOutcome &o) {
        if (!o.ok())
        {
          if ((o.status == netsim::TxOutcome::Status::invalid && o.validation == TxValidation::read_conflict) ||
              o.errc == ChaincodeErrc::RideNotOpen)
          {
            s->events.push("taken", {{"key", key}});
            return done.fail(GatewayError("RideTaken", "ride taken"));
          }
          return done.fail(tx_error(o));
        }
        auto ride_id = o.json().value("ride_id", "");
        s->assigned[key] = Assignment{offer, ride_id, false};
        s->events.push("assigned", {{"key", key}, {"ride_id", ride_id}, {"pickup", format_geopoint(offer.pickup)}});
        done.ok(ride_id);
      });
    });
  }

  /// Picks up an assigned rider, then records the pickup in every other
  /// on-board rider's request.
  void pickup(const std::string &token, const std::string &key, GeoPoint at)
  {
    call<bool>([=, this](Done<bool> done) {
      auto s = session(token);
      require_driver(*s);
      auto it = s->assigned.find(key);
      if (it == s->assigned.end()) throw GatewayError("InvalidArgument", "no assigned ride " + key);
      if (it->second.on_board) throw GatewayError("InvalidArgument", "rider already on board");
      net_->submit(s->identity, "pickup_rider", {key, format_geopoint(at)}, [=, this](const netsim::TxOutcome &o) {
        if (!o.ok()) return done.fail(tx_error(o));
        auto &a = s->assigned.at(key);
        std::vector<std::string> others;
        for (const auto &k : s->on_board) others.push_back(k);
        a.on_board = true;
        s->on_board.push_back(key);
        s->events.push("picked_up", {{"key", key}});
        record_coriders(s, others, a.offer.rider, a.offer.pickup, "pickup", done);
      });
    });
  }

  /// Records the dropoff in every other on-board rider's request, then
  /// transacts dropoff_rider. Returns the ride id.
  std::string dropoff(const std::string &token, const std::string &key, GeoPoint at)
  {
    return call<std::string>([=, this](Done<std::string> done) {
      auto s = session(token);
      require_driver(*s);
      auto it = s->assigned.find(key);
      if (it == s->assigned.end() || !it->second.on_board) throw GatewayError("InvalidArgument", key + " is not on board");
      auto rider = it->second.offer.rider;
      std::vector<std::string> others;
      for (const auto &k : s->on_board)
      {
        if (k != key) others.push_back(k);
      }
      auto after = Done<bool>::then([=, this](bool) {
        net_->submit(s->identity, "dropoff_rider", {key, format_geopoint(at)}, [=](const netsim::TxOutcome &o) {
          if (!o.ok()) return done.fail(tx_error(o));
          std::erase(s->on_board, key);
          s->assigned.erase(key);
          auto ride_id = o.json().value("ride_id", "");
          s->events.push("dropped_off", {{"key", key}, {"ride_id", ride_id}});
          done.ok(ride_id);
        });
      }, [=](std::exception_ptr e) { done.fail(e); });
      record_coriders(s, others, rider, at, "dropoff", after);
    });
  }

  std::vector<std::string> on_board(const std::string &token)
  {
    return call<std::vector<std::string>>([=, this](Done<std::vector<std::string>> done) {
      done.ok(session(token)->on_board);
    });
  }

  // -- rider --------------------------------------------------------------

  /// Transacts request_ride; the session then sends the destination when the
  /// ride is accepted and leaves the driver when the ride ends, reporting
  /// accepted, driver_arrived, ride_ending and archived on its event stream.
  std::string request_ride(const std::string &token, const std::string &from, const std::string &to)
  {
    auto pickup = places_.resolve(from);
    auto dest = places_.resolve(to);
    return call<std::string>([=, this](Done<std::string> done) {
      auto s = session(token);
      if (s->info.view != RoleView::rider) throw GatewayError("NotARider", "switch to the rider view to request rides");
      if (s->ride && s->ride->state != kProgressArchived)
      {
        throw GatewayError("RideAlreadyActive", "a ride is already in progress");
      }
      auto key = keys::ride_request(s->identity.id());
      s->ride = ActiveRide{key, "", pickup, dest, "requested", {}};
      net_->submit(s->identity, "request_ride", {format_geopoint(pickup)}, [=](const netsim::TxOutcome &o) {
        if (!o.ok())
        {
          s->ride.reset();
          return done.fail(tx_error(o));
        }
        auto tx = from_hex(o.tx_id);
        Digest d{};
        std::copy(tx.begin(), tx.end(), d.begin());
        s->ride->ride_id = compute_ride_id(s->identity.id().value(), d);
        s->events.push("requested", {{"key", key}, {"pickup", format_geopoint(pickup)}});
        done.ok(key);
      });
    });
  }

  /// Progress states reported so far for the current or last ride.
  std::vector<std::string> progress(const std::string &token)
  {
    return call<std::vector<std::string>>([=, this](Done<std::vector<std::string>> done) {
      auto s = session(token);
      done.ok(s->ride ? s->ride->progress : std::vector<std::string>{});
    });
  }

  /// Driven mode: runs the network until the ride reaches `state`.
  bool wait_for_progress(const std::string &token, const std::string &state)
  {
    if (options_.mode != GatewayMode::driven) throw std::logic_error("wait_for_progress needs driven mode");
    auto s = session(token);
    auto reached = [&] {
      return s->ride && std::find(s->ride->progress.begin(), s->ride->progress.end(), state) != s->ride->progress.end();
    };
    return net_->scheduler().run_until(reached);
  }

  /// Privacy-filtered archives, one per ride id in the caller's user record.
  nlohmann::json ride_history(const std::string &token)
  {
    return call<nlohmann::json>([=, this](Done<nlohmann::json> done) {
      auto s = session(token);
      net_->query(s->identity, "get_user_info", {}, [=, this](const netsim::QueryOutcome &q) {
        if (!q.ok) return done.fail(query_error(q));
        auto ids = q.json().value("ride_ids", std::vector<std::string>{});
        auto out = std::make_shared<nlohmann::json>(nlohmann::json::array());
        auto remaining = std::make_shared<std::size_t>(ids.size());
        if (ids.empty()) return done.ok(*out);
        *out = nlohmann::json::array();
        for (std::size_t i = 0; i < ids.size(); ++i) out->push_back(nullptr);
        for (std::size_t i = 0; i < ids.size(); ++i)
        {
          net_->query(s->identity, "get_ride", {ids[i]}, [=](const netsim::QueryOutcome &r) {
            (*out)[i] = r.ok ? r.json() : nlohmann::json{{"ride_id", ids[i]}, {"error", r.message}};
            if (--*remaining == 0) done.ok(*out);
          });
        }
      });
    });
  }

  // -- events -------------------------------------------------------------

  std::vector<SessionEvent> events_since(const std::string &token, std::uint64_t after,
                                         std::chrono::milliseconds wait = {})
  {
    auto s = session(token);
    return s->events.since(after, wait);
  }

  bool session_open(const std::string &token)
  {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.contains(token);
  }

private:
  // -- completion plumbing --------------------------------------------------

  template <typename T>
  struct Result
  {
    std::mutex mutex;
    std::condition_variable cv;
    bool done = false;
    std::optional<T> value;
    std::exception_ptr error;
  };

  /// Completion handle; ok/fail may be called once from the loop.
  template <typename T>
  class Done
  {
  public:
    explicit Done(std::shared_ptr<Result<T>> r) : r_(std::move(r)) {}

    static Done then(std::function<void(T)> on_ok, std::function<void(std::exception_ptr)> on_err)
    {
      Done d(nullptr);
      d.on_ok_ = std::make_shared<std::function<void(T)>>(std::move(on_ok));
      d.on_err_ = std::make_shared<std::function<void(std::exception_ptr)>>(std::move(on_err));
      return d;
    }

    void ok(T v) const
    {
      if (on_ok_) return (*on_ok_)(std::move(v));
      finish([&] { r_->value = std::move(v); });
    }
    void fail(std::exception_ptr e) const
    {
      if (on_err_) return (*on_err_)(e);
      finish([&] { r_->error = e; });
    }
    void fail(const GatewayError &e) const { fail(std::make_exception_ptr(e)); }

  private:
    template <typename F>
    void finish(F &&set) const
    {
      {
        std::lock_guard lock(r_->mutex);
        if (r_->done) return;
        set();
        r_->done = true;
      }
      r_->cv.notify_all();
    }

    std::shared_ptr<Result<T>> r_;
    std::shared_ptr<std::function<void(T)>> on_ok_;
    std::shared_ptr<std::function<void(std::exception_ptr)>> on_err_;
  };

  template <typename T>
  T call(std::function<void(Done<T>)> start)
  {
    auto r = std::make_shared<Result<T>>();
    Done<T> done(r);
    auto guarded = [start = std::move(start), done] {
      try
      {
        start(done);
      }
      catch (...)
      {
        done.fail(std::current_exception());
      }
    };
    if (options_.mode == GatewayMode::driven)
    {
      std::lock_guard driven(driven_mutex_);
      guarded();
      bool finished = net_->scheduler().run_until([&] {
        std::lock_guard lock(r->mutex);
        return r->done;
      });
      if (!finished) throw GatewayError("Timeout", "network went idle before the operation completed");
    }
    else
    {
      net_->scheduler().post(guarded);
    }
    std::unique_lock lock(r->mutex);
    if (!r->cv.wait_for(lock, options_.call_timeout, [&] { return r->done; }))
    {
      throw GatewayError("Timeout", "no response from the network");
    }
    if (r->error) std::rethrow_exception(r->error);
    return std::move(*r->value);
  }

  // -- session state (loop thread only, except `events`) --------------------

  struct Assignment
  {
    Offer offer;
    std::string ride_id;
    bool on_board = false;
  };

  struct ActiveRide
  {
    std::string key;
    std::string ride_id;
    GeoPoint pickup;
    GeoPoint dest;
    std::string state;
    std::vector<std::string> progress;
  };

  struct Session
  {
    SessionInfo info;
    netsim::ClientIdentity identity;
    std::optional<netsim::Network::SubscriptionId> subscription;
    EventLog events;

    // driver view
    bool driving = false;
    GeoPoint location;
    std::map<std::string, Offer> offers;
    std::map<std::string, Assignment> assigned;
    std::vector<std::string> on_board;

    // rider view
    std::optional<ActiveRide> ride;
  };

  std::shared_ptr<Session> session(const std::string &token)
  {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(token);
    if (it == sessions_.end()) throw GatewayError("NoSession", "unknown or expired session");
    return it->second;
  }

  static void require_driver(const Session &s)
  {
    if (s.info.view != RoleView::driver) throw GatewayError("NotADriver", "log in with the driver view to drive");
  }

  SessionInfo open_session(const netsim::ClientIdentity &id, RoleView view)
  {
    auto s = std::make_shared<Session>();
    std::array<std::uint8_t, 16> t{};
    for (auto &b : t) b = static_cast<std::uint8_t>(rng_());
    s->identity = id;
    s->info = {to_hex(t), id.org(), id.cert.local_id, id.id().value(), view};
    std::weak_ptr<Session> weak = s;
    s->subscription = net_->subscribe(id.org(), "", [this, weak](const netsim::EventDelivery &ev) {
      if (auto live = weak.lock()) on_event(live, ev);
    });
    std::lock_guard lock(sessions_mutex_);
    sessions_[s->info.token] = s;
    return s->info;
  }

  Offer make_offer(const Session &s, const std::string &key, GeoPoint pickup) const
  {
    Offer o;
    o.key = key;
    o.rider = key.substr(keys::kRideRequest.size());
    o.pickup = pickup;
    o.distance_m = s.driving ? haversine_meters(s.location, pickup) : 0;
    return o;
  }

  void on_event(const std::shared_ptr<Session> &s, const netsim::EventDelivery &ev)
  {
    events::Payload p;
    try
    {
      p = events::decode(ev.payload);
    }
    catch (const std::exception &)
    {
      return;
    }

    if (s->info.view == RoleView::driver)
    {
      if (!s->driving) return;
      if (ev.name == events::kRideRequested)
      {
        auto o = make_offer(*s, p.key, p.point);
        if (o.rider == s->info.user_id) return;
        s->offers[o.key] = o;
        s->events.push("offer", o.json());
      }
      else if (ev.name == events::kRideAccepted && s->offers.erase(p.key))
      {
        s->events.push("offer_withdrawn", {{"key", p.key}});
      }
      return;
    }

    if (!s->ride) return;
    auto &ride = *s->ride;
    if (ev.name == events::kRideAccepted && p.key == ride.key && ride.state == "requested")
    {
      advance(s, kProgressAccepted);
      submit_retry(s->identity, "set_ride_destination", {format_geopoint(ride.dest)}, options_.retries,
                   [this, s](const netsim::TxOutcome &o) {
                     if (!o.ok()) s->events.push("error", {{"op", "set_ride_destination"}, {"code", o.code()}});
                   });
    }
    else if (ev.name == events::kDriverArrived && p.key == ride.key && ride.state == kProgressAccepted)
    {
      advance(s, kProgressDriverArrived);
    }
    else if (ev.name == events::kRideEnding && p.ride_id == ride.ride_id && ride.state == kProgressDriverArrived)
    {
      advance(s, kProgressRideEnding);
      net_->submit(s->identity, "leave_driver", {format_geopoint(p.point)}, [this, s](const netsim::TxOutcome &o) {
        if (!o.ok())
        {
          s->events.push("error", {{"op", "leave_driver"}, {"code", o.code()}});
          return;
        }
        advance(s, kProgressArchived);
      });
    }
  }

  void advance(const std::shared_ptr<Session> &s, const std::string &state)
  {
    auto &ride = *s->ride;
    ride.state = state;
    ride.progress.push_back(state);
    nlohmann::json data = {{"state", state}, {"key", ride.key}};
    if (state == kProgressArchived || state == kProgressRideEnding) data["ride_id"] = ride.ride_id;
    s->events.push("progress", data);
  }

  /// Submits, resubmitting on ReadConflict up to `retries` more times.
  void submit_retry(const netsim::ClientIdentity &id, std::string fn, std::vector<std::string> args,
                    std::size_t retries, netsim::Network::TxCallback cb)
  {
    net_->submit(id, fn, args, [=, this](const netsim::TxOutcome &o) {
      if (!o.ok() && o.status == netsim::TxOutcome::Status::invalid && o.validation == TxValidation::read_conflict &&
          retries > 0)
      {
        return submit_retry(id, fn, args, retries - 1, cb);
      }
      cb(o);
    });
  }

  /// Sequentially records `subject`'s pickup/dropoff in each listed request.
  void record_coriders(std::shared_ptr<Session> s, std::vector<std::string> keys, std::string subject, GeoPoint at,
                       std::string kind, Done<bool> done, std::size_t i = 0)
  {
    if (i == keys.size()) return done.ok(true);
    submit_retry(s->identity, "set_corider_information", {keys[i], subject, format_geopoint(at), kind},
                 options_.retries, [=, this](const netsim::TxOutcome &o) {
                   if (!o.ok()) return done.fail(tx_error(o));
                   record_coriders(s, keys, subject, at, kind, done, i + 1);
                 });
  }

  static std::string strip_code(const std::string &code, const std::string &message)
  {
    auto prefix = code + ": ";
    return message.rfind(prefix, 0) == 0 ? message.substr(prefix.size()) : message;
  }

  static GatewayError tx_error(const netsim::TxOutcome &o)
  {
    auto code = o.code() == "valid" ? std::string("TxRejected") : o.code();
    return GatewayError(code, o.message.empty() ? o.function : strip_code(code, o.message));
  }

  static GatewayError query_error(const netsim::QueryOutcome &q)
  {
    auto code = q.errc ? std::string(to_string(*q.errc)) : std::string("TxRejected");
    return GatewayError(code, strip_code(code, q.message));
  }

  GatewayOptions options_;
  Places places_;
  std::mt19937_64 rng_;
  std::unique_ptr<netsim::Network> net_;
  std::map<std::pair<std::string, std::string>, netsim::ClientIdentity> wallet_;

  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex driven_mutex_;

  std::atomic<bool> stop_{false};
  std::thread loop_;
};

}  // namespace hailchain::gateway
