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

#include "hailchain/identity.hpp"
#include "hailchain/ledger.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace hailchain {

enum class ChaincodeErrc
{
  UnknownFunction,
  InvalidArgument,
  Unauthorized,
  AlreadyRegistered,
  NotRegistered,
  RideInProgress,
  AlreadyDriver,
  NotADriver,
  RideAlreadyActive,
  RideNotOpen,
  SelfService,
  NoActiveRide,
  WrongStatus,
  AlreadySet,
  NotYourRide,
  NotAtPickupLocation,
  SelfCorider,
  NoSuchRide,
};

inline std::string_view to_string(ChaincodeErrc c)
{
  switch (c)
  {
  case ChaincodeErrc::UnknownFunction: return "UnknownFunction";
  case ChaincodeErrc::InvalidArgument: return "InvalidArgument";
  case ChaincodeErrc::Unauthorized: return "Unauthorized";
  case ChaincodeErrc::AlreadyRegistered: return "AlreadyRegistered";
  case ChaincodeErrc::NotRegistered: return "NotRegistered";
  case ChaincodeErrc::RideInProgress: return "RideInProgress";
  case ChaincodeErrc::AlreadyDriver: return "AlreadyDriver";
  case ChaincodeErrc::NotADriver: return "NotADriver";
  case ChaincodeErrc::RideAlreadyActive: return "RideAlreadyActive";
  case ChaincodeErrc::RideNotOpen: return "RideNotOpen";
  case ChaincodeErrc::SelfService: return "SelfService";
  case ChaincodeErrc::NoActiveRide: return "NoActiveRide";
  case ChaincodeErrc::WrongStatus: return "WrongStatus";
  case ChaincodeErrc::AlreadySet: return "AlreadySet";
  case ChaincodeErrc::NotYourRide: return "NotYourRide";
  case ChaincodeErrc::NotAtPickupLocation: return "NotAtPickupLocation";
  case ChaincodeErrc::SelfCorider: return "SelfCorider";
  case ChaincodeErrc::NoSuchRide: return "NoSuchRide";
  }
  return "Unknown";
}

inline std::optional<ChaincodeErrc> chaincode_errc_from_string(std::string_view s)
{
  for (int i = 0; i <= static_cast<int>(ChaincodeErrc::NoSuchRide); ++i)
  {
    auto c = static_cast<ChaincodeErrc>(i);
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

class ChaincodeError : public std::runtime_error
{
public:
  ChaincodeError(ChaincodeErrc code, const std::string &detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code)
  {}
  ChaincodeErrc code() const { return code_; }

private:
  ChaincodeErrc code_;
};

/// Rebuilds the error carried in a rejected proposal response ("Code: detail").
inline ChaincodeError chaincode_error_from_message(const std::string &message)
{
  auto colon = message.find(": ");
  auto code = chaincode_errc_from_string(message.substr(0, colon));
  if (colon == std::string::npos || !code) return ChaincodeError(ChaincodeErrc::InvalidArgument, message);
  return ChaincodeError(*code, message.substr(colon + 2));
}

/// Everything an invocation may touch. The caller is identified only through
/// the certificate carried by the proposal.
class Stub
{
public:
  Stub(const Proposal &proposal, const Digest &tx_id, TxSimulator &sim)
      : proposal_(proposal), tx_id_(tx_id), sim_(sim)
  {}

  const Certificate &creator() const { return proposal_.creator; }
  UserId caller() const { return derive_user_id(proposal_.creator); }
  const std::string &function() const { return proposal_.function; }
  const std::vector<std::string> &args() const { return proposal_.args; }
  const Digest &tx_id() const { return tx_id_; }
  std::uint64_t timestamp_ms() const { return proposal_.timestamp_ms; }

  std::optional<Bytes> get_state(const std::string &key) { return sim_.get_state(key); }
  void put_state(const std::string &key, Bytes value) { sim_.put_state(key, std::move(value)); }
  void del_state(const std::string &key) { sim_.del_state(key); }
  std::vector<std::pair<std::string, Bytes>> scan_prefix(const std::string &prefix)
  {
    return sim_.scan_prefix(prefix);
  }

  void emit(std::string name, Bytes payload) { events_.push_back({std::move(name), std::move(payload)}); }
  const std::vector<ChaincodeEvent> &events() const { return events_; }

private:
  const Proposal &proposal_;
  Digest tx_id_;
  TxSimulator &sim_;
  std::vector<ChaincodeEvent> events_;
};

class Chaincode
{
public:
  virtual ~Chaincode() = default;

  /// Returns the response payload or throws ChaincodeError. Must be a pure
  /// function of the stub's inputs and state.
  virtual Bytes invoke(Stub &stub) const = 0;
};

/// Simulates one proposal against a state snapshot, capturing its read/write
/// set and events. Chaincode errors become a rejected response.
inline ProposalResponse execute_readset_capture(const Chaincode &cc, const WorldState &snapshot,
                                                const Proposal &proposal)
{
  ProposalResponse resp;
  resp.tx_id = proposal.tx_id();
  TxSimulator sim(snapshot);
  Stub stub(proposal, resp.tx_id, sim);
  try
  {
    if (proposal.creator.role != Role::client)
    {
      throw ChaincodeError(ChaincodeErrc::Unauthorized, "only client identities may invoke chaincode");
    }
    resp.payload = cc.invoke(stub);
    resp.ok = true;
    resp.rwset = sim.result();
    resp.events = stub.events();
  }
  catch (const ChaincodeError &e)
  {
    resp.ok = false;
    resp.message = e.what();
  }
  catch (const std::exception &e)
  {
    resp.ok = false;
    resp.message = ChaincodeError(ChaincodeErrc::InvalidArgument, e.what()).what();
  }
  return resp;
}

}  // namespace hailchain
