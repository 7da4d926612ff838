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

// Synchronous two-peer channel for unit tests: endorse on every peer, commit
// blocks by hand. No scheduling, no latency model.

#include "hailchain/chaincode.hpp"
#include "hailchain/contract.hpp"
#include "hailchain/ledger.hpp"

#include <json.hpp>

#include <memory>
#include <random>
#include <string>
#include <vector>

namespace hailchain::testing {

struct TestClient
{
  Certificate cert;
  crypto::SecretKey key;

  UserId id() const { return derive_user_id(cert); }
};

class TestChannel
{
public:
  explicit TestChannel(std::shared_ptr<const Chaincode> cc = std::make_shared<RideChaincode>(),
                       std::size_t peers = 2, std::uint64_t seed = 1)
      : rng_(seed), cc_(std::move(cc))
  {
    membership_.create_org("Org1PeerOrgMSP", crypto::keypair_from_engine(rng_));
    membership_.create_org("Org2PeerOrgMSP", crypto::keypair_from_engine(rng_));
    genesis_ = Block::genesis(0);
    for (std::size_t i = 0; i < peers; ++i)
    {
      auto org = i % 2 == 0 ? "Org1PeerOrgMSP" : "Org2PeerOrgMSP";
      auto [cert, key] = membership_.issue_certificate(org, "peer" + std::to_string(i), Role::peer, rng_);
      peers_.push_back({cert, key});
      ledgers_.push_back(std::make_unique<PeerLedger>(membership_, EndorsementPolicy::all_peers(peers), genesis_));
    }
  }

  Membership &membership() { return membership_; }
  PeerLedger &ledger(std::size_t i = 0) { return *ledgers_.at(i); }
  std::size_t peer_count() const { return peers_.size(); }
  const TestClient &peer(std::size_t i) const { return peers_.at(i); }

  TestClient client(const std::string &local_id, const std::string &org = "Org2PeerOrgMSP",
                    Role role = Role::client)
  {
    auto [cert, key] = membership_.issue_certificate(org, local_id, role, rng_);
    return {cert, key};
  }

  Proposal proposal(const TestClient &c, const std::string &fn, std::vector<std::string> args)
  {
    return Proposal{fn, std::move(args), c.cert, ++nonce_, clock_ms_ += 10};
  }

  /// Endorses on every peer against its current state; throws the chaincode
  /// error when the response is a rejection.
  Transaction endorse(const TestClient &c, const std::string &fn, std::vector<std::string> args)
  {
    return endorse_proposal(SignedProposal::sign(proposal(c, fn, std::move(args)), c.key));
  }

  Transaction endorse_proposal(const SignedProposal &sp)
  {
    Transaction tx;
    tx.signed_proposal = sp;
    for (std::size_t i = 0; i < peers_.size(); ++i)
    {
      auto resp = ledgers_[i]->with_state(
          [&](const WorldState &s) { return execute_readset_capture(*cc_, s, sp.proposal); });
      if (!resp.ok) throw chaincode_error_from_message(resp.message);
      auto digest = resp.digest();
      if (i == 0)
      {
        tx.payload = resp.payload;
        tx.rwset = resp.rwset;
        tx.events = resp.events;
      }
      tx.endorsements.push_back({peers_[i].cert, digest, crypto::sign(peers_[i].key, digest)});
    }
    return tx;
  }

  CommitReport commit(std::vector<Transaction> txs)
  {
    auto head = ledgers_.front()->chain().back().block;
    auto block = Block::make(head.number + 1, clock_ms_, head.hash, std::move(txs));
    CommitReport report;
    for (auto &l : ledgers_) report = l->append_block(block);
    return report;
  }

  /// Endorse and commit one transaction; returns the parsed response payload.
  nlohmann::json invoke(const TestClient &c, const std::string &fn, std::vector<std::string> args = {})
  {
    auto tx = endorse(c, fn, std::move(args));
    auto payload = tx.payload;
    auto report = commit({std::move(tx)});
    if (report.flags.at(0) != TxValidation::valid)
    {
      throw std::runtime_error("transaction invalid: " + std::string(to_string(report.flags[0])));
    }
    last_events_ = ledgers_.front()->chain().back().block.transactions.front().events;
    if (payload.empty()) return nullptr;
    return nlohmann::json::parse(to_string(payload));
  }

  /// Read-only evaluation on peer 0.
  nlohmann::json query(const TestClient &c, const std::string &fn, std::vector<std::string> args = {})
  {
    auto p = proposal(c, fn, std::move(args));
    auto resp = ledgers_.front()->with_state([&](const WorldState &s) { return execute_readset_capture(*cc_, s, p); });
    if (!resp.ok) throw chaincode_error_from_message(resp.message);
    return nlohmann::json::parse(to_string(resp.payload));
  }

  std::optional<nlohmann::json> raw(const std::string &key)
  {
    return ledgers_.front()->with_state([&](const WorldState &s) -> std::optional<nlohmann::json> {
      auto *e = s.find(key);
      if (!e || !e->value) return std::nullopt;
      return nlohmann::json::parse(to_string(*e->value));
    });
  }

  const std::vector<ChaincodeEvent> &last_events() const { return last_events_; }

private:
  std::mt19937_64 rng_;
  Membership membership_;
  std::shared_ptr<const Chaincode> cc_;
  Block genesis_;
  std::vector<TestClient> peers_;
  std::vector<std::unique_ptr<PeerLedger>> ledgers_;
  std::uint64_t nonce_ = 0;
  std::uint64_t clock_ms_ = 1000;
  std::vector<ChaincodeEvent> last_events_;
};

/// Expects `expr` to throw ChaincodeError with the given code.
#define EXPECT_CC_ERROR(expr, errc)                                                    \
  do                                                                                   \
  {                                                                                    \
    try                                                                                \
    {                                                                                  \
      (void)(expr);                                                                    \
      ADD_FAILURE() << "expected " << ::hailchain::to_string(errc) << ", no error";    \
    }                                                                                  \
    catch (const ::hailchain::ChaincodeError &e)                                       \
    {                                                                                  \
      EXPECT_EQ(e.code(), errc) << e.what();                                           \
    }                                                                                  \
  } while (0)

}  // namespace hailchain::testing
