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

// Ride-hailing chaincode.
//
// Ledger layout (values are JSON, keys sorted, points as "lat,lon"):
//
//   user:<uid>                   UserRecord
//   rideRequest:<rider uid>      TemporalRideRequest, at most one per rider
//   ride:<uid>:<ride id hex>     PermanentRide, one per participant
//   shift:<driver uid>           riders currently on board and the ride id
//                                their overlapping trips are archived under
//
// Status path of a temporal request: open -> accepted -> picked_up ->
// dropping -> deleted. Every other transition is WrongStatus.

#include "hailchain/contract.hpp"
#include "hailchain/geo.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <compare>
#include <optional>
#include <string>
#include <vector>

namespace hailchain {

namespace keys {

inline constexpr std::string_view kUser = "user:";
inline constexpr std::string_view kRideRequest = "rideRequest:";
inline constexpr std::string_view kRide = "ride:";
inline constexpr std::string_view kShift = "shift:";

inline std::string user(const UserId &id) { return std::string(kUser) + id.value(); }
inline std::string ride_request(const UserId &id) { return std::string(kRideRequest) + id.value(); }
inline std::string ride(const UserId &id, const std::string &ride_id)
{
  return std::string(kRide) + id.value() + ":" + ride_id;
}
inline std::string shift(const UserId &id) { return std::string(kShift) + id.value(); }

}  // namespace keys

namespace events {

inline constexpr std::string_view kRideRequested = "RideRequested";
inline constexpr std::string_view kRideAccepted = "RideAccepted";
inline constexpr std::string_view kDriverArrived = "DriverArrived";
inline constexpr std::string_view kRideEnding = "RideEnding";

/// Minimal payload: a temporal key or ride id plus one point.
struct Payload
{
  std::string key;      // temporal key (RideRequested / RideAccepted / DriverArrived)
  std::string ride_id;  // RideEnding
  GeoPoint point;
};

inline Bytes encode(const Payload &p)
{
  nlohmann::json j = {{"point", format_geopoint(p.point)}};
  if (!p.key.empty()) j["key"] = p.key;
  if (!p.ride_id.empty()) j["ride_id"] = p.ride_id;
  return to_bytes(j.dump());
}

inline Payload decode(const Bytes &b)
{
  auto j = nlohmann::json::parse(to_string(b));
  Payload p;
  p.key = j.value("key", "");
  p.ride_id = j.value("ride_id", "");
  p.point = parse_geopoint(j.at("point").get<std::string>()).value();
  return p;
}

}  // namespace events

enum class RideStatus
{
  open,
  accepted,
  picked_up,
  dropping,
};

inline std::string_view to_string(RideStatus s)
{
  switch (s)
  {
  case RideStatus::open: return "open";
  case RideStatus::accepted: return "accepted";
  case RideStatus::picked_up: return "picked_up";
  case RideStatus::dropping: return "dropping";
  }
  return "unknown";
}

inline RideStatus ride_status_from_string(const std::string &s)
{
  if (s == "open") return RideStatus::open;
  if (s == "accepted") return RideStatus::accepted;
  if (s == "picked_up") return RideStatus::picked_up;
  if (s == "dropping") return RideStatus::dropping;
  throw ChaincodeError(ChaincodeErrc::InvalidArgument, "unknown ride status '" + s + "'");
}

struct DriverProfile
{
  std::string vehicle_make;
  std::string vehicle_model;
  int vehicle_year = 0;

  bool operator==(const DriverProfile &) const = default;
};

struct UserRecord
{
  std::string password_hash;  // hex, 32 bytes
  std::string salt;           // hex, 16 bytes
  std::vector<std::string> ride_ids;
  std::optional<std::string> name;
  std::optional<DriverProfile> driver;

  bool operator==(const UserRecord &) const = default;
};

/// A (participant, location) pair: a pickup or dropoff event.
struct LocatedParty
{
  std::string user;
  GeoPoint point;

  bool operator==(const LocatedParty &) const = default;
  std::partial_ordering operator<=>(const LocatedParty &o) const
  {
    if (auto c = user <=> o.user; c != 0) return c;
    if (auto c = point.lat <=> o.point.lat; c != 0) return c;
    return point.lon <=> o.point.lon;
  }
};

struct TemporalRideRequest
{
  std::string rider;
  RideStatus status = RideStatus::open;
  GeoPoint pickup;
  std::optional<GeoPoint> destination;
  std::optional<std::string> driver;
  std::vector<LocatedParty> corider_pickups;
  std::vector<LocatedParty> corider_dropoffs;
  std::optional<std::string> ride_id;
  std::uint64_t requested_at = 0;
  std::string request_tx_id;
  std::optional<GeoPoint> driver_dropoff;
  std::optional<std::string> group_ride_id;

  bool operator==(const TemporalRideRequest &) const = default;
};

enum class RideRole
{
  driver,
  rider,
};

struct PermanentRide
{
  std::string ride_id;
  RideRole role = RideRole::rider;
  std::vector<LocatedParty> pickups;
  std::vector<LocatedParty> dropoffs;
  std::vector<LocatedParty> witnessed_corider_pickups;
  std::vector<LocatedParty> witnessed_corider_dropoffs;
  std::optional<std::string> driver;       // rider role
  std::vector<std::string> riders;         // driver role
  std::vector<std::string> member_ride_ids;  // driver role: per-rider ride ids in this archive
  std::uint64_t completed_at = 0;

  bool operator==(const PermanentRide &) const = default;
};

struct Shift
{
  std::string group_ride_id;
  std::uint32_t on_board = 0;
};

// ---------------------------------------------------------------------------
// JSON encoding of ledger values
// ---------------------------------------------------------------------------

namespace codec {

using nlohmann::json;

inline json parties_to_json(const std::vector<LocatedParty> &v)
{
  auto a = json::array();
  for (const auto &p : v) a.push_back({{"user", p.user}, {"point", format_geopoint(p.point)}});
  return a;
}

inline GeoPoint point_from_json(const json &j)
{
  auto p = parse_geopoint(j.get<std::string>());
  if (!p) throw ChaincodeError(ChaincodeErrc::InvalidArgument, "malformed stored point");
  return *p;
}

inline std::vector<LocatedParty> parties_from_json(const json &a)
{
  std::vector<LocatedParty> out;
  for (const auto &p : a) out.push_back({p.at("user").get<std::string>(), point_from_json(p.at("point"))});
  return out;
}

inline json to_json(const UserRecord &u)
{
  json j = {{"password_hash", u.password_hash}, {"salt", u.salt}, {"ride_ids", u.ride_ids}};
  j["name"] = u.name ? json(*u.name) : json(nullptr);
  if (u.driver)
  {
    j["driver"] = {{"vehicle_make", u.driver->vehicle_make},
                   {"vehicle_model", u.driver->vehicle_model},
                   {"vehicle_year", u.driver->vehicle_year}};
  }
  else
  {
    j["driver"] = nullptr;
  }
  return j;
}

inline UserRecord user_from_json(const json &j)
{
  UserRecord u;
  u.password_hash = j.at("password_hash").get<std::string>();
  u.salt = j.at("salt").get<std::string>();
  u.ride_ids = j.at("ride_ids").get<std::vector<std::string>>();
  if (!j.at("name").is_null()) u.name = j.at("name").get<std::string>();
  if (!j.at("driver").is_null())
  {
    const auto &d = j.at("driver");
    u.driver = DriverProfile{d.at("vehicle_make").get<std::string>(), d.at("vehicle_model").get<std::string>(),
                             d.at("vehicle_year").get<int>()};
  }
  return u;
}

inline json opt_point(const std::optional<GeoPoint> &p) { return p ? json(format_geopoint(*p)) : json(nullptr); }
inline json opt_str(const std::optional<std::string> &s) { return s ? json(*s) : json(nullptr); }

inline json to_json(const TemporalRideRequest &r)
{
  return {
      {"rider", r.rider},
      {"status", std::string(to_string(r.status))},
      {"pickup", format_geopoint(r.pickup)},
      {"destination", opt_point(r.destination)},
      {"driver", opt_str(r.driver)},
      {"corider_pickups", parties_to_json(r.corider_pickups)},
      {"corider_dropoffs", parties_to_json(r.corider_dropoffs)},
      {"ride_id", opt_str(r.ride_id)},
      {"requested_at", r.requested_at},
      {"request_tx_id", r.request_tx_id},
      {"driver_dropoff", opt_point(r.driver_dropoff)},
      {"group_ride_id", opt_str(r.group_ride_id)},
  };
}

inline TemporalRideRequest request_from_json(const json &j)
{
  TemporalRideRequest r;
  r.rider = j.at("rider").get<std::string>();
  r.status = ride_status_from_string(j.at("status").get<std::string>());
  r.pickup = point_from_json(j.at("pickup"));
  if (!j.at("destination").is_null()) r.destination = point_from_json(j.at("destination"));
  if (!j.at("driver").is_null()) r.driver = j.at("driver").get<std::string>();
  r.corider_pickups = parties_from_json(j.at("corider_pickups"));
  r.corider_dropoffs = parties_from_json(j.at("corider_dropoffs"));
  if (!j.at("ride_id").is_null()) r.ride_id = j.at("ride_id").get<std::string>();
  r.requested_at = j.at("requested_at").get<std::uint64_t>();
  r.request_tx_id = j.at("request_tx_id").get<std::string>();
  if (!j.at("driver_dropoff").is_null()) r.driver_dropoff = point_from_json(j.at("driver_dropoff"));
  if (!j.at("group_ride_id").is_null()) r.group_ride_id = j.at("group_ride_id").get<std::string>();
  return r;
}

inline json to_json(const PermanentRide &p)
{
  return {
      {"ride_id", p.ride_id},
      {"role", p.role == RideRole::driver ? "driver" : "rider"},
      {"pickups", parties_to_json(p.pickups)},
      {"dropoffs", parties_to_json(p.dropoffs)},
      {"witnessed_corider_pickups", parties_to_json(p.witnessed_corider_pickups)},
      {"witnessed_corider_dropoffs", parties_to_json(p.witnessed_corider_dropoffs)},
      {"driver", opt_str(p.driver)},
      {"riders", p.riders},
      {"member_ride_ids", p.member_ride_ids},
      {"completed_at", p.completed_at},
  };
}

inline PermanentRide ride_from_json(const json &j)
{
  PermanentRide p;
  p.ride_id = j.at("ride_id").get<std::string>();
  p.role = j.at("role").get<std::string>() == "driver" ? RideRole::driver : RideRole::rider;
  p.pickups = parties_from_json(j.at("pickups"));
  p.dropoffs = parties_from_json(j.at("dropoffs"));
  p.witnessed_corider_pickups = parties_from_json(j.at("witnessed_corider_pickups"));
  p.witnessed_corider_dropoffs = parties_from_json(j.at("witnessed_corider_dropoffs"));
  if (!j.at("driver").is_null()) p.driver = j.at("driver").get<std::string>();
  p.riders = j.at("riders").get<std::vector<std::string>>();
  p.member_ride_ids = j.at("member_ride_ids").get<std::vector<std::string>>();
  p.completed_at = j.at("completed_at").get<std::uint64_t>();
  return p;
}

inline json to_json(const Shift &s) { return {{"group_ride_id", s.group_ride_id}, {"on_board", s.on_board}}; }

inline Shift shift_from_json(const json &j)
{
  return {j.at("group_ride_id").get<std::string>(), j.at("on_board").get<std::uint32_t>()};
}

inline Bytes dump(const json &j) { return to_bytes(j.dump()); }
inline json load(const Bytes &b) { return json::parse(to_string(b)); }

}  // namespace codec

/// RideID = SHA-256(rider UserId || request tx id), hex encoded.
inline std::string compute_ride_id(const std::string &rider, const Digest &request_tx_id)
{
  Writer w;
  w.str(rider).fixed(request_tx_id);
  return to_hex(crypto::sha256(w.data()));
}

/// Salted password digest: SHA-256(salt || password).
inline Digest password_digest(ByteView salt, std::string_view password)
{
  return crypto::Sha256{}.update(salt).update(as_bytes(password)).finish();
}

// ---------------------------------------------------------------------------
// The contract
// ---------------------------------------------------------------------------

class RideChaincode final : public Chaincode
{
public:
  struct Config
  {
    double pickup_tolerance_m = 100.0;
  };

  RideChaincode() = default;
  explicit RideChaincode(Config cfg) : cfg_(cfg) {}

  const Config &config() const { return cfg_; }

  Bytes invoke(Stub &stub) const override
  {
    const auto &fn = stub.function();
    if (fn == "register_user") return register_user(stub);
    if (fn == "unregister_user") return unregister_user(stub);
    if (fn == "upgrade_to_driver") return upgrade_to_driver(stub);
    if (fn == "get_user_info") return get_user_info(stub);
    if (fn == "request_ride") return request_ride(stub);
    if (fn == "accept_ride") return accept_ride(stub);
    if (fn == "set_ride_destination") return set_ride_destination(stub);
    if (fn == "pickup_rider") return pickup_rider(stub);
    if (fn == "set_corider_information") return set_corider_information(stub);
    if (fn == "dropoff_rider") return dropoff_rider(stub);
    if (fn == "leave_driver") return leave_driver(stub);
    if (fn == "get_ride") return get_ride(stub);
    if (fn == "list_open_requests") return list_open_requests(stub);
    throw ChaincodeError(ChaincodeErrc::UnknownFunction, "no function '" + fn + "'");
  }

private:
  using json = nlohmann::json;

  static void expect_args(const Stub &stub, std::size_t min, std::size_t max)
  {
    auto n = stub.args().size();
    if (n < min || n > max)
    {
      throw ChaincodeError(ChaincodeErrc::InvalidArgument,
                           stub.function() + " takes " + std::to_string(min) + ".." + std::to_string(max) +
                               " arguments, got " + std::to_string(n));
    }
  }

  static GeoPoint point_arg(const Stub &stub, std::size_t i)
  {
    auto p = parse_geopoint(stub.args().at(i));
    if (!p) throw ChaincodeError(ChaincodeErrc::InvalidArgument, "bad location '" + stub.args().at(i) + "'");
    return *p;
  }

  static std::optional<UserRecord> load_user(Stub &stub, const UserId &id)
  {
    auto v = stub.get_state(keys::user(id));
    if (!v) return std::nullopt;
    return codec::user_from_json(codec::load(*v));
  }

  static UserRecord require_user(Stub &stub, const UserId &id)
  {
    auto u = load_user(stub, id);
    if (!u) throw ChaincodeError(ChaincodeErrc::NotRegistered, id.value() + " is not registered");
    return *u;
  }

  static void store_user(Stub &stub, const UserId &id, const UserRecord &u)
  {
    stub.put_state(keys::user(id), codec::dump(codec::to_json(u)));
  }

  static std::optional<TemporalRideRequest> load_request(Stub &stub, const std::string &key)
  {
    if (key.rfind(keys::kRideRequest, 0) != 0)
    {
      throw ChaincodeError(ChaincodeErrc::InvalidArgument, "'" + key + "' is not a ride request key");
    }
    auto v = stub.get_state(key);
    if (!v) return std::nullopt;
    return codec::request_from_json(codec::load(*v));
  }

  static TemporalRideRequest require_request(Stub &stub, const std::string &key)
  {
    auto r = load_request(stub, key);
    if (!r) throw ChaincodeError(ChaincodeErrc::NoActiveRide, "no ride request at " + key);
    return *r;
  }

  static void store_request(Stub &stub, const std::string &key, const TemporalRideRequest &r)
  {
    stub.put_state(key, codec::dump(codec::to_json(r)));
  }

  static void require_status(const TemporalRideRequest &r, RideStatus want)
  {
    if (r.status != want)
    {
      throw ChaincodeError(ChaincodeErrc::WrongStatus, "ride is " + std::string(to_string(r.status)) + ", expected " +
                                                           std::string(to_string(want)));
    }
  }

  static void require_driver_of(const TemporalRideRequest &r, const UserId &caller)
  {
    if (!r.driver || *r.driver != caller.value())
    {
      throw ChaincodeError(ChaincodeErrc::NotYourRide, caller.value() + " is not driving this ride");
    }
  }

  static Bytes ok() { return to_bytes("{}"); }

  // -- user registry ------------------------------------------------------

  Bytes register_user(Stub &stub) const
  {
    expect_args(stub, 2, 3);
    auto caller = stub.caller();
    const auto &hash = stub.args()[0];
    const auto &salt = stub.args()[1];
    auto valid_hex = [](const std::string &s, std::size_t bytes) {
      if (s.size() != bytes * 2) return false;
      return std::all_of(s.begin(), s.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
    };
    if (!valid_hex(hash, 32) || !valid_hex(salt, 16))
    {
      throw ChaincodeError(ChaincodeErrc::InvalidArgument, "password hash must be 32 bytes and salt 16 bytes, hex");
    }
    if (load_user(stub, caller)) throw ChaincodeError(ChaincodeErrc::AlreadyRegistered, caller.value());
    UserRecord u;
    u.password_hash = hash;
    u.salt = salt;
    if (stub.args().size() == 3 && !stub.args()[2].empty()) u.name = stub.args()[2];
    store_user(stub, caller, u);
    return ok();
  }

  Bytes unregister_user(Stub &stub) const
  {
    expect_args(stub, 0, 0);
    auto caller = stub.caller();
    require_user(stub, caller);
    if (stub.get_state(keys::ride_request(caller)))
    {
      throw ChaincodeError(ChaincodeErrc::RideInProgress, caller.value() + " has an active ride request");
    }
    for (const auto &[key, value] : stub.scan_prefix(std::string(keys::kRideRequest)))
    {
      auto r = codec::request_from_json(codec::load(value));
      if (r.driver && *r.driver == caller.value())
      {
        throw ChaincodeError(ChaincodeErrc::RideInProgress, caller.value() + " is driving " + key);
      }
    }
    stub.del_state(keys::user(caller));
    return ok();
  }

  Bytes upgrade_to_driver(Stub &stub) const
  {
    expect_args(stub, 4, 4);
    auto caller = stub.caller();
    auto u = require_user(stub, caller);
    if (u.driver) throw ChaincodeError(ChaincodeErrc::AlreadyDriver, caller.value());
    const auto &args = stub.args();
    int year = 0;
    auto [ptr, ec] = std::from_chars(args[3].data(), args[3].data() + args[3].size(), year);
    if (args[0].empty() || args[1].empty() || args[2].empty() || ec != std::errc() ||
        ptr != args[3].data() + args[3].size() || year <= 0)
    {
      throw ChaincodeError(ChaincodeErrc::InvalidArgument, "driver name, make and model must be set and year positive");
    }
    u.name = args[0];
    u.driver = DriverProfile{args[1], args[2], year};
    store_user(stub, caller, u);
    return ok();
  }

  Bytes get_user_info(Stub &stub) const
  {
    expect_args(stub, 0, 0);
    return codec::dump(codec::to_json(require_user(stub, stub.caller())));
  }

  // -- ride lifecycle ------------------------------------------------------

  Bytes request_ride(Stub &stub) const
  {
    expect_args(stub, 1, 1);
    auto caller = stub.caller();
    auto pickup = point_arg(stub, 0);
    require_user(stub, caller);
    auto key = keys::ride_request(caller);
    if (stub.get_state(key))
    {
      throw ChaincodeError(ChaincodeErrc::RideAlreadyActive, caller.value() + " already has a ride in progress");
    }
    TemporalRideRequest r;
    r.rider = caller.value();
    r.status = RideStatus::open;
    r.pickup = pickup;
    r.requested_at = stub.timestamp_ms();
    r.request_tx_id = to_hex(stub.tx_id());
    store_request(stub, key, r);
    stub.emit(std::string(events::kRideRequested), events::encode({key, "", pickup}));
    return to_bytes(json{{"key", key}}.dump());
  }

  Bytes accept_ride(Stub &stub) const
  {
    expect_args(stub, 1, 1);
    auto caller = stub.caller();
    const auto &key = stub.args()[0];
    auto u = load_user(stub, caller);
    if (!u || !u->driver) throw ChaincodeError(ChaincodeErrc::NotADriver, caller.value() + " is not a driver");
    auto r = load_request(stub, key);
    if (!r || r->status != RideStatus::open)
    {
      throw ChaincodeError(ChaincodeErrc::RideNotOpen, key + " is not open");
    }
    if (r->rider == caller.value())
    {
      throw ChaincodeError(ChaincodeErrc::SelfService, "drivers may not accept their own requests");
    }
    r->status = RideStatus::accepted;
    r->driver = caller.value();
    auto tx = from_hex(r->request_tx_id);
    Digest request_tx{};
    std::copy(tx.begin(), tx.end(), request_tx.begin());
    r->ride_id = compute_ride_id(r->rider, request_tx);
    store_request(stub, key, *r);
    stub.emit(std::string(events::kRideAccepted), events::encode({key, "", r->pickup}));
    return to_bytes(json{{"ride_id", *r->ride_id}}.dump());
  }

  Bytes set_ride_destination(Stub &stub) const
  {
    expect_args(stub, 1, 1);
    auto caller = stub.caller();
    auto dest = point_arg(stub, 0);
    auto key = keys::ride_request(caller);
    auto r = require_request(stub, key);
    require_status(r, RideStatus::accepted);
    if (r.destination) throw ChaincodeError(ChaincodeErrc::AlreadySet, "destination already set");
    r.destination = dest;
    store_request(stub, key, r);
    return ok();
  }

  Bytes pickup_rider(Stub &stub) const
  {
    expect_args(stub, 2, 2);
    auto caller = stub.caller();
    const auto &key = stub.args()[0];
    auto at = point_arg(stub, 1);
    auto r = require_request(stub, key);
    require_status(r, RideStatus::accepted);
    require_driver_of(r, caller);
    if (!r.destination) throw ChaincodeError(ChaincodeErrc::WrongStatus, "destination not yet set");
    auto d = haversine_meters(at, r.pickup);
    if (d > cfg_.pickup_tolerance_m)
    {
      throw ChaincodeError(ChaincodeErrc::NotAtPickupLocation,
                           "driver is " + std::to_string(static_cast<long>(d)) + " m from the pickup point");
    }

    Shift shift;
    auto shift_key = keys::shift(caller);
    if (auto v = stub.get_state(shift_key)) shift = codec::shift_from_json(codec::load(*v));
    if (shift.on_board == 0) shift.group_ride_id = *r.ride_id;
    ++shift.on_board;
    stub.put_state(shift_key, codec::dump(codec::to_json(shift)));

    r.status = RideStatus::picked_up;
    r.group_ride_id = shift.group_ride_id;
    store_request(stub, key, r);
    stub.emit(std::string(events::kDriverArrived), events::encode({key, "", r.pickup}));
    return ok();
  }

  Bytes set_corider_information(Stub &stub) const
  {
    expect_args(stub, 4, 4);
    auto caller = stub.caller();
    const auto &key = stub.args()[0];
    const auto &corider = stub.args()[1];
    auto at = point_arg(stub, 2);
    const auto &kind = stub.args()[3];
    if (kind != "pickup" && kind != "dropoff")
    {
      throw ChaincodeError(ChaincodeErrc::InvalidArgument, "kind must be pickup or dropoff");
    }
    if (!UserId::parse(corider)) throw ChaincodeError(ChaincodeErrc::InvalidArgument, "bad co-rider id");
    auto r = require_request(stub, key);
    require_status(r, RideStatus::picked_up);
    require_driver_of(r, caller);
    if (corider == r.rider) throw ChaincodeError(ChaincodeErrc::SelfCorider, "a rider is not their own co-rider");
    (kind == "pickup" ? r.corider_pickups : r.corider_dropoffs).push_back({corider, at});
    store_request(stub, key, r);
    return ok();
  }

  Bytes dropoff_rider(Stub &stub) const
  {
    expect_args(stub, 2, 2);
    auto caller = stub.caller();
    const auto &key = stub.args()[0];
    auto at = point_arg(stub, 1);
    auto r = require_request(stub, key);
    require_status(r, RideStatus::picked_up);
    require_driver_of(r, caller);

    auto shift_key = keys::shift(caller);
    Shift shift;
    if (auto v = stub.get_state(shift_key)) shift = codec::shift_from_json(codec::load(*v));
    const auto group = r.group_ride_id.value_or(*r.ride_id);

    auto archive_key = keys::ride(caller, group);
    PermanentRide archive;
    if (auto v = stub.get_state(archive_key))
    {
      archive = codec::ride_from_json(codec::load(*v));
    }
    else
    {
      archive.ride_id = group;
      archive.role = RideRole::driver;
    }
    archive.pickups.push_back({r.rider, r.pickup});
    archive.dropoffs.push_back({r.rider, at});
    archive.riders.push_back(r.rider);
    archive.member_ride_ids.push_back(*r.ride_id);
    archive.completed_at = stub.timestamp_ms();
    stub.put_state(archive_key, codec::dump(codec::to_json(archive)));

    auto driver = require_user(stub, caller);
    if (std::find(driver.ride_ids.begin(), driver.ride_ids.end(), group) == driver.ride_ids.end())
    {
      driver.ride_ids.push_back(group);
      store_user(stub, caller, driver);
    }

    if (shift.on_board <= 1)
    {
      stub.del_state(shift_key);
    }
    else
    {
      --shift.on_board;
      stub.put_state(shift_key, codec::dump(codec::to_json(shift)));
    }

    r.status = RideStatus::dropping;
    r.driver_dropoff = at;
    store_request(stub, key, r);
    stub.emit(std::string(events::kRideEnding), events::encode({"", *r.ride_id, at}));
    return to_bytes(json{{"ride_id", *r.ride_id}}.dump());
  }

  Bytes leave_driver(Stub &stub) const
  {
    expect_args(stub, 1, 1);
    auto caller = stub.caller();
    auto at = point_arg(stub, 0);
    auto key = keys::ride_request(caller);
    auto r = require_request(stub, key);
    require_status(r, RideStatus::dropping);

    PermanentRide archive;
    archive.ride_id = *r.ride_id;
    archive.role = RideRole::rider;
    archive.pickups.push_back({r.rider, r.pickup});
    archive.dropoffs.push_back({r.rider, at});
    archive.witnessed_corider_pickups = r.corider_pickups;
    archive.witnessed_corider_dropoffs = r.corider_dropoffs;
    archive.driver = r.driver;
    archive.completed_at = stub.timestamp_ms();
    stub.put_state(keys::ride(caller, archive.ride_id), codec::dump(codec::to_json(archive)));

    auto u = require_user(stub, caller);
    u.ride_ids.push_back(archive.ride_id);
    store_user(stub, caller, u);
    stub.del_state(key);
    return to_bytes(json{{"ride_id", archive.ride_id}}.dump());
  }

  Bytes get_ride(Stub &stub) const
  {
    expect_args(stub, 1, 1);
    auto caller = stub.caller();
    require_user(stub, caller);
    const auto &ride_id = stub.args()[0];
    if (ride_id.size() != 64 || ride_id.find(':') != std::string::npos)
    {
      throw ChaincodeError(ChaincodeErrc::NoSuchRide, ride_id);
    }
    auto v = stub.get_state(keys::ride(caller, ride_id));
    if (!v) throw ChaincodeError(ChaincodeErrc::NoSuchRide, ride_id);
    return *v;
  }

  /// Open requests for drivers joining late; read-only.
  Bytes list_open_requests(Stub &stub) const
  {
    expect_args(stub, 0, 0);
    auto caller = stub.caller();
    auto u = load_user(stub, caller);
    if (!u || !u->driver) throw ChaincodeError(ChaincodeErrc::NotADriver, caller.value() + " is not a driver");
    auto out = json::array();
    for (const auto &[key, value] : stub.scan_prefix(std::string(keys::kRideRequest)))
    {
      auto r = codec::request_from_json(codec::load(value));
      if (r.status == RideStatus::open && r.rider != caller.value())
      {
        out.push_back({{"key", key}, {"pickup", format_geopoint(r.pickup)}});
      }
    }
    return to_bytes(out.dump());
  }

  Config cfg_;
};

}  // namespace hailchain
