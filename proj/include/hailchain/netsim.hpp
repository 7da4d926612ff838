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

// Endorse / order / commit network over a discrete-event scheduler.
//
// Peers are single-server queues: endorsements, queries and block commits
// share one busy_until horizon per peer. The orderer is one logical sequencer
// that cuts a block at max_message_count or batch_timeout, whichever first.
// Clients learn the fate of their transactions from the first peer of their
// own organization (the anchor peer), which is also where chaincode event
// subscriptions live.

#include "hailchain/contract.hpp"
#include "hailchain/identity.hpp"
#include "hailchain/ledger.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hailchain::netsim {

using Micros = std::int64_t;

inline Micros from_ms(double ms) { return static_cast<Micros>(std::llround(ms * 1000.0)); }
inline double to_ms(Micros us) { return static_cast<double>(us) / 1000.0; }

class InvalidTopology : public std::runtime_error
{
public:
  explicit InvalidTopology(const std::string &what) : std::runtime_error("InvalidTopology: " + what) {}
};

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

struct ServiceModel
{
  double endorse_base_ms = 5.0;
  double jitter = 0.20;            // uniform +/- fraction of the base
  double coordination_ms = 2.0;    // client overhead per additional endorser
  double link_ms = 1.0;
  double commit_block_ms = 2.0;
  double commit_tx_ms = 0.5;
  double verify_endorsement_ms = 1.0;
};

struct OrdererConfig
{
  std::uint32_t max_message_count = 10;
  double batch_timeout_ms = 2000.0;
  double service_ms = 1.0;
};

struct OrgSpec
{
  std::string name;
  std::size_t peers = 2;
  std::size_t orderers = 1;
};

struct Topology
{
  std::vector<OrgSpec> orgs;
  OrdererConfig orderer;
  EndorsementPolicy::Kind policy = EndorsementPolicy::Kind::all_peers;
  std::size_t any_n = 1;
  ServiceModel service;

  std::size_t peer_count() const
  {
    std::size_t n = 0;
    for (const auto &o : orgs) n += o.peers;
    return n;
  }

  EndorsementPolicy endorsement_policy() const
  {
    switch (policy)
    {
    case EndorsementPolicy::Kind::all_peers: return EndorsementPolicy::all_peers(peer_count());
    case EndorsementPolicy::Kind::any_n: return EndorsementPolicy::any_n(any_n);
    case EndorsementPolicy::Kind::load_balanced: return EndorsementPolicy::load_balanced();
    }
    return EndorsementPolicy::all_peers(peer_count());
  }

  void validate() const
  {
    if (orgs.empty()) throw InvalidTopology("at least one organization is required");
    std::set<std::string> names;
    for (const auto &o : orgs)
    {
      if (!valid_identity_name(o.name)) throw InvalidTopology("bad organization name '" + o.name + "'");
      if (!names.insert(o.name).second) throw InvalidTopology("duplicate organization '" + o.name + "'");
      if (o.peers < 2) throw InvalidTopology("organization " + o.name + " needs at least two peers");
    }
    if (orderer.max_message_count == 0) throw InvalidTopology("max_message_count must be positive");
    if (!(orderer.batch_timeout_ms > 0)) throw InvalidTopology("batch_timeout_ms must be positive");
    if (policy == EndorsementPolicy::Kind::any_n && (any_n == 0 || any_n > peer_count()))
    {
      throw InvalidTopology("any_n must be between 1 and the peer count");
    }
    const auto &s = service;
    if (s.endorse_base_ms < 0 || s.jitter < 0 || s.jitter >= 1 || s.coordination_ms < 0 || s.link_ms < 0 ||
        s.commit_block_ms < 0 || s.commit_tx_ms < 0 || s.verify_endorsement_ms < 0 || orderer.service_ms < 0)
    {
      throw InvalidTopology("service times must be non-negative and jitter below 1");
    }
  }

  static std::string org_name(std::size_t i) { return "Org" + std::to_string(i + 1) + "PeerOrgMSP"; }

  /// `orgs` organizations of `peers_per_org` peers and one orderer each.
  static Topology standard(std::size_t orgs, std::size_t peers_per_org = 2)
  {
    Topology t;
    for (std::size_t i = 0; i < orgs; ++i) t.orgs.push_back({org_name(i), peers_per_org, 1});
    return t;
  }

  nlohmann::json to_json() const
  {
    nlohmann::json j;
    for (const auto &o : orgs) j["organizations"].push_back({{"name", o.name}, {"peers", o.peers}, {"orderers", o.orderers}});
    j["orderer"] = {{"max_message_count", orderer.max_message_count},
                    {"batch_timeout_ms", orderer.batch_timeout_ms},
                    {"service_ms", orderer.service_ms}};
    switch (policy)
    {
    case EndorsementPolicy::Kind::all_peers: j["policy"] = "all_peers"; break;
    case EndorsementPolicy::Kind::load_balanced: j["policy"] = "load_balanced"; break;
    case EndorsementPolicy::Kind::any_n: j["policy"] = {{"any_n", any_n}}; break;
    }
    j["service"] = {{"endorse_base_ms", service.endorse_base_ms},
                    {"jitter", service.jitter},
                    {"coordination_ms", service.coordination_ms},
                    {"link_ms", service.link_ms},
                    {"commit_block_ms", service.commit_block_ms},
                    {"commit_tx_ms", service.commit_tx_ms},
                    {"verify_endorsement_ms", service.verify_endorsement_ms}};
    return j;
  }

  static Topology from_json(const nlohmann::json &j)
  {
    Topology t;
    try
    {
      for (const auto &o : j.at("organizations"))
      {
        t.orgs.push_back({o.at("name").get<std::string>(), o.value("peers", std::size_t{2}),
                          o.value("orderers", std::size_t{1})});
      }
      if (j.contains("orderer"))
      {
        const auto &o = j["orderer"];
        t.orderer.max_message_count = o.value("max_message_count", t.orderer.max_message_count);
        t.orderer.batch_timeout_ms = o.value("batch_timeout_ms", t.orderer.batch_timeout_ms);
        t.orderer.service_ms = o.value("service_ms", t.orderer.service_ms);
      }
      if (j.contains("policy"))
      {
        const auto &p = j["policy"];
        if (p.is_object())
        {
          t.policy = EndorsementPolicy::Kind::any_n;
          t.any_n = p.at("any_n").get<std::size_t>();
        }
        else if (p == "all_peers") t.policy = EndorsementPolicy::Kind::all_peers;
        else if (p == "load_balanced") t.policy = EndorsementPolicy::Kind::load_balanced;
        else throw InvalidTopology("unknown policy " + p.dump());
      }
      if (j.contains("service"))
      {
        const auto &s = j["service"];
        auto &m = t.service;
        m.endorse_base_ms = s.value("endorse_base_ms", m.endorse_base_ms);
        m.jitter = s.value("jitter", m.jitter);
        m.coordination_ms = s.value("coordination_ms", m.coordination_ms);
        m.link_ms = s.value("link_ms", m.link_ms);
        m.commit_block_ms = s.value("commit_block_ms", m.commit_block_ms);
        m.commit_tx_ms = s.value("commit_tx_ms", m.commit_tx_ms);
        m.verify_endorsement_ms = s.value("verify_endorsement_ms", m.verify_endorsement_ms);
      }
    }
    catch (const nlohmann::json::exception &e)
    {
      throw InvalidTopology(e.what());
    }
    t.validate();
    return t;
  }

  static Topology load(const std::filesystem::path &path)
  {
    std::ifstream in(path);
    if (!in) throw InvalidTopology("cannot read " + path.string());
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw InvalidTopology(path.string() + " is not valid JSON");
    return from_json(j);
  }
};

// ---------------------------------------------------------------------------
// Scheduler
// ---------------------------------------------------------------------------

enum class ClockMode
{
  virtual_time,
  wall,
};

/// Discrete-event loop. In virtual mode time jumps to the next event; in wall
/// mode events wait for their real due time and `now()` is the real elapsed
/// time at which the running event started, so processing cost shows up in
/// measured latencies. Everything except post()/wake() is single-threaded.
class Scheduler
{
public:
  using Task = std::function<void()>;

  explicit Scheduler(ClockMode mode = ClockMode::virtual_time)
      : mode_(mode), origin_(std::chrono::steady_clock::now())
  {}

  ClockMode mode() const { return mode_; }
  Micros now() const { return now_; }

  void at(Micros t, Task fn)
  {
    queue_.push_back({std::max(t, now_), seq_++, std::move(fn)});
    std::push_heap(queue_.begin(), queue_.end(), Later{});
  }

  void after(Micros delay, Task fn) { at(now_ + std::max<Micros>(delay, 0), std::move(fn)); }

  bool idle() const { return queue_.empty() && inbox_empty(); }
  std::size_t pending() const { return queue_.size(); }
  std::uint64_t executed() const { return executed_; }

  /// Runs the earliest event (sleeping for it in wall mode). False when empty.
  bool run_next()
  {
    drain_inbox();
    if (queue_.empty()) return false;
    if (mode_ == ClockMode::wall)
    {
      auto due = queue_.front().time;
      auto real = elapsed();
      if (due > real) std::this_thread::sleep_for(std::chrono::microseconds(due - real));
    }
    std::pop_heap(queue_.begin(), queue_.end(), Later{});
    auto ev = std::move(queue_.back());
    queue_.pop_back();
    now_ = mode_ == ClockMode::wall ? std::max(ev.time, elapsed()) : ev.time;
    ++executed_;
    ev.fn();
    return true;
  }

  std::uint64_t run_until_idle()
  {
    std::uint64_t n = 0;
    while (run_next()) ++n;
    return n;
  }

  /// Runs until `done()` holds or nothing is left to run.
  template <typename Pred>
  bool run_until(Pred &&done)
  {
    while (!done())
    {
      if (!run_next()) return done();
    }
    return true;
  }

  /// Runs every event due at or before `t`, then advances the clock to `t`.
  void run_for(Micros duration)
  {
    auto end = now_ + duration;
    for (;;)
    {
      drain_inbox();
      if (queue_.empty() || queue_.front().time > end) break;
      run_next();
    }
    if (mode_ == ClockMode::wall)
    {
      auto real = elapsed();
      if (end > real) std::this_thread::sleep_for(std::chrono::microseconds(end - real));
    }
    now_ = std::max(now_, end);
  }

  // -- cross-thread entry points (wall mode) ------------------------------

  /// Queues `fn` to run on the loop thread at the loop's current time.
  void post(Task fn)
  {
    {
      std::lock_guard lock(inbox_mutex_);
      inbox_.push_back(std::move(fn));
    }
    cv_.notify_one();
  }

  void wake() { cv_.notify_one(); }

  /// Wall-mode service loop body: waits up to `max_wait` for posted work or
  /// the next due event, then runs everything that is due.
  void pump(std::chrono::milliseconds max_wait)
  {
    {
      std::unique_lock lock(inbox_mutex_);
      auto wait = std::chrono::duration_cast<std::chrono::microseconds>(max_wait).count();
      if (!queue_.empty()) wait = std::min<Micros>(wait, std::max<Micros>(queue_.front().time - elapsed(), 0));
      cv_.wait_for(lock, std::chrono::microseconds(wait), [&] { return !inbox_.empty(); });
    }
    drain_inbox();
    while (!queue_.empty() && queue_.front().time <= elapsed()) run_next();
  }

private:
  struct Event
  {
    Micros time;
    std::uint64_t seq;
    Task fn;
  };
  struct Later
  {
    bool operator()(const Event &a, const Event &b) const
    {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  Micros elapsed() const
  {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - origin_).count();
  }

  bool inbox_empty() const
  {
    std::lock_guard lock(inbox_mutex_);
    return inbox_.empty();
  }

  void drain_inbox()
  {
    std::deque<Task> tasks;
    {
      std::lock_guard lock(inbox_mutex_);
      tasks.swap(inbox_);
    }
    if (mode_ == ClockMode::wall) now_ = std::max(now_, elapsed());
    for (auto &t : tasks) at(now_, std::move(t));
  }

  ClockMode mode_;
  std::chrono::steady_clock::time_point origin_;
  Micros now_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t executed_ = 0;
  std::vector<Event> queue_;

  mutable std::mutex inbox_mutex_;
  std::condition_variable cv_;
  std::deque<Task> inbox_;
};

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

/// JSON-lines record of simulator events.
class Trace
{
public:
  bool enabled = true;

  void record(Micros t, std::string kind, nlohmann::json fields)
  {
    if (!enabled) return;
    fields["t_us"] = t;
    fields["kind"] = std::move(kind);
    lines_.push_back(fields.dump());
  }

  const std::vector<std::string> &lines() const { return lines_; }
  std::size_t size() const { return lines_.size(); }
  void clear() { lines_.clear(); }

  std::string str() const
  {
    std::string out;
    for (const auto &l : lines_) out += l + "\n";
    return out;
  }

  void write(std::ostream &os) const
  {
    for (const auto &l : lines_) os << l << '\n';
  }

private:
  std::vector<std::string> lines_;
};

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

struct ClientIdentity
{
  Certificate cert;
  crypto::SecretKey key;

  UserId id() const { return derive_user_id(cert); }
  const std::string &org() const { return cert.org_msp_id; }
};

struct PeerNode
{
  std::size_t index = 0;
  std::string name;
  std::string org;
  Certificate cert;
  crypto::SecretKey key;
  std::unique_ptr<PeerLedger> ledger;
  Micros busy_until = 0;
  std::uint64_t endorsements = 0;
};

struct TxOutcome
{
  enum class Status
  {
    committed,  // valid and applied
    invalid,    // ordered but failed validation
    rejected,   // an endorser's chaincode refused it
    mismatch,   // endorsers disagreed (EndorsementMismatch)
  };

  Status status = Status::rejected;
  TxValidation validation = TxValidation::pending;
  std::optional<ChaincodeErrc> errc;
  std::string message;
  std::string function;
  std::string tx_id;
  Bytes payload;
  std::uint64_t block = 0;
  double peer_ms = 0;
  double orderer_ms = 0;
  double event_ms = 0;
  Micros submitted_at = 0;
  Micros finished_at = 0;

  bool ok() const { return status == Status::committed; }

  nlohmann::json json() const
  {
    if (payload.empty()) return nullptr;
    return nlohmann::json::parse(to_string(payload), nullptr, false);
  }

  /// "valid", a validation code such as "ReadConflict", a chaincode error
  /// code, or "EndorsementMismatch".
  std::string code() const
  {
    switch (status)
    {
    case Status::committed: return "valid";
    case Status::invalid: return std::string(to_string(validation));
    case Status::rejected: return errc ? std::string(to_string(*errc)) : "Rejected";
    case Status::mismatch: return "EndorsementMismatch";
    }
    return "unknown";
  }
};

struct QueryOutcome
{
  bool ok = false;
  Bytes payload;
  std::optional<ChaincodeErrc> errc;
  std::string message;

  nlohmann::json json() const { return nlohmann::json::parse(to_string(payload), nullptr, false); }
};

struct EventDelivery
{
  std::string name;
  Bytes payload;
  std::string tx_id;
  std::uint64_t block = 0;
  Micros committed_at = 0;
};

struct BlockCut
{
  std::uint64_t number = 0;
  std::size_t size = 0;
  bool by_timeout = false;
  Micros at = 0;
};

struct NetworkOptions
{
  std::uint64_t seed = 1;
  ClockMode clock = ClockMode::virtual_time;
  bool trace = true;
};

class Network
{
public:
  using SubscriptionId = std::uint64_t;
  using EventHandler = std::function<void(const EventDelivery &)>;
  using TxCallback = std::function<void(const TxOutcome &)>;
  using QueryCallback = std::function<void(const QueryOutcome &)>;

  Network(Topology topology, std::shared_ptr<const Chaincode> chaincode, NetworkOptions options = {})
      : topology_(std::move(topology)),
        chaincode_(std::move(chaincode)),
        options_(options),
        scheduler_(options.clock),
        rng_(options.seed),
        policy_(topology_.endorsement_policy())
  {
    topology_.validate();
    trace_.enabled = options.trace;
    for (const auto &org : topology_.orgs)
    {
      membership_.create_org(org.name, crypto::keypair_from_engine(rng_));
    }
    genesis_ = Block::genesis(0);
    for (const auto &org : topology_.orgs)
    {
      anchor_.emplace(org.name, peers_.size());
      for (std::size_t i = 0; i < org.peers; ++i)
      {
        auto node = std::make_unique<PeerNode>();
        node->index = peers_.size();
        node->name = "peer" + std::to_string(i);
        node->org = org.name;
        auto [cert, key] = membership_.issue_certificate(org.name, node->name, Role::peer, rng_);
        node->cert = cert;
        node->key = key;
        node->ledger = std::make_unique<PeerLedger>(membership_, policy_, genesis_);
        peers_.push_back(std::move(node));
      }
      for (std::size_t i = 0; i < org.orderers; ++i)
      {
        auto [cert, key] = membership_.issue_certificate(org.name, "orderer" + std::to_string(i), Role::orderer, rng_);
        orderers_.push_back(cert);
      }
    }
    tip_number_ = genesis_.number;
    tip_hash_ = genesis_.hash;
  }

  Network(const Network &) = delete;
  Network &operator=(const Network &) = delete;

  // -- accessors ----------------------------------------------------------

  const Topology &topology() const { return topology_; }
  const EndorsementPolicy &policy() const { return policy_; }
  Scheduler &scheduler() { return scheduler_; }
  Trace &trace() { return trace_; }
  const Trace &trace() const { return trace_; }
  Membership &membership() { return membership_; }
  const Membership &membership() const { return membership_; }
  std::size_t peer_count() const { return peers_.size(); }
  PeerNode &peer(std::size_t i) { return *peers_.at(i); }
  const PeerNode &peer(std::size_t i) const { return *peers_.at(i); }
  const std::vector<Certificate> &orderers() const { return orderers_; }
  const std::vector<BlockCut> &cuts() const { return cuts_; }
  std::size_t pending_orders() const { return order_queue_.size(); }
  const Chaincode &chaincode() const { return *chaincode_; }

  /// Index of the peer a client of `org` talks to for queries, commit
  /// notifications and event subscriptions.
  std::size_t anchor_peer(const std::string &org) const
  {
    auto it = anchor_.find(org);
    if (it == anchor_.end()) throw IdentityError(IdentityErrc::UnknownOrg, "unknown organization '" + org + "'");
    return it->second;
  }

  /// Observer for every byte string that leaves a client: encoded signed
  /// proposals ("proposal") and endorsed transactions ("transaction").
  std::function<void(std::string_view channel, ByteView bytes)> wire_tap;

  // -- identities ---------------------------------------------------------

  ClientIdentity enroll(const std::string &org, const std::string &local_id, Role role = Role::client)
  {
    auto [cert, key] = membership_.issue_certificate(org, local_id, role, rng_);
    return {cert, key};
  }

  // -- transactions -------------------------------------------------------

  /// Endorse, order and commit one invocation. `done` fires once, on the
  /// scheduler, when the anchor peer of the client's org has committed the
  /// transaction or when endorsement fails.
  void submit(const ClientIdentity &client, std::string function, std::vector<std::string> args, TxCallback done)
  {
    Proposal p{std::move(function), std::move(args), client.cert, ++nonce_,
               static_cast<std::uint64_t>(scheduler_.now() / 1000)};
    submit_signed(client, SignedProposal::sign(std::move(p), client.key), std::move(done));
  }

  /// As submit(), with a caller-built (possibly forged) signed proposal.
  void submit_signed(const ClientIdentity &client, SignedProposal sp, TxCallback done)
  {
    auto tx = std::make_shared<InFlight>();
    tx->client_org = client.org();
    tx->signed_proposal = std::move(sp);
    tx->tx_id = tx->signed_proposal.proposal.tx_id();
    tx->outcome.tx_id = to_hex(tx->tx_id);
    tx->outcome.function = tx->signed_proposal.proposal.function;
    tx->outcome.submitted_at = scheduler_.now();
    tx->done = std::move(done);
    tx->endorsers = select_endorsers();
    tx->responses.resize(tx->endorsers.size());

    auto bytes = tx->signed_proposal.encode();
    if (wire_tap) wire_tap("proposal", bytes);
    trace_.record(scheduler_.now(), "propose",
                  {{"tx", tx->outcome.tx_id},
                   {"fn", tx->outcome.function},
                   {"client", derive_user_id(client.cert).value()},
                   {"endorsers", endorser_names(tx->endorsers)}});

    // Proposals whose signature does not verify are refused by every peer.
    const auto &signed_proposal = tx->signed_proposal;
    const auto &creator = signed_proposal.proposal.creator;
    const bool signature_ok = creator.role == Role::client && membership_.verify_certificate(creator) &&
                              membership_.verify_signature(creator.public_key, signed_proposal.proposal.encode(),
                                                           signed_proposal.signature);
    for (std::size_t slot = 0; slot < tx->endorsers.size(); ++slot)
    {
      auto peer_index = tx->endorsers[slot];
      scheduler_.after(link(), [this, tx, slot, peer_index, signature_ok] {
        auto &peer = *peers_[peer_index];
        auto start = std::max(scheduler_.now(), peer.busy_until);
        peer.busy_until = start + endorse_time();
        scheduler_.at(peer.busy_until, [this, tx, slot, peer_index, signature_ok] {
          auto &peer = *peers_[peer_index];
          ProposalResponse resp;
          if (!signature_ok)
          {
            resp.tx_id = tx->tx_id;
            resp.message = ChaincodeError(ChaincodeErrc::Unauthorized, "proposal signature rejected").what();
          }
          else
          {
            resp = peer.ledger->with_state([&](const WorldState &s) {
              return execute_readset_capture(*chaincode_, s, tx->signed_proposal.proposal);
            });
          }
          ++peer.endorsements;
          trace_.record(scheduler_.now(), "endorse",
                        {{"tx", tx->outcome.tx_id}, {"peer", peer_label(peer)}, {"ok", resp.ok}});
          scheduler_.after(link(), [this, tx, slot, resp = std::move(resp)]() mutable {
            tx->responses[slot] = std::move(resp);
            if (++tx->received == tx->endorsers.size()) endorsements_complete(tx);
          });
        });
      });
    }
  }

  /// Read-only evaluation on the anchor peer of the client's org.
  void query(const ClientIdentity &client, std::string function, std::vector<std::string> args, QueryCallback done)
  {
    Proposal p{std::move(function), std::move(args), client.cert, ++nonce_,
               static_cast<std::uint64_t>(scheduler_.now() / 1000)};
    auto sp = SignedProposal::sign(std::move(p), client.key);
    if (wire_tap) wire_tap("proposal", sp.encode());
    auto peer_index = anchor_peer(client.org());
    const bool signature_ok =
        membership_.verify_certificate(sp.proposal.creator) &&
        membership_.verify_signature(sp.proposal.creator.public_key, sp.proposal.encode(), sp.signature);
    scheduler_.after(link(), [this, sp = std::move(sp), peer_index, signature_ok, done = std::move(done)]() mutable {
      auto &peer = *peers_[peer_index];
      auto start = std::max(scheduler_.now(), peer.busy_until);
      peer.busy_until = start + endorse_time();
      scheduler_.at(peer.busy_until, [this, sp = std::move(sp), peer_index, signature_ok, done = std::move(done)] {
        QueryOutcome q;
        if (!signature_ok)
        {
          q.errc = ChaincodeErrc::Unauthorized;
          q.message = "proposal signature rejected";
        }
        else
        {
          auto resp = peers_[peer_index]->ledger->with_state(
              [&](const WorldState &s) { return execute_readset_capture(*chaincode_, s, sp.proposal); });
          q.ok = resp.ok;
          q.payload = std::move(resp.payload);
          if (!resp.ok)
          {
            auto err = chaincode_error_from_message(resp.message);
            q.errc = err.code();
            q.message = err.what();
          }
        }
        scheduler_.after(link(), [q = std::move(q), done = std::move(done)] { done(q); });
      });
    });
  }

  /// Chaincode events from valid transactions, as committed by the anchor
  /// peer of `org`. An empty `name` matches every event.
  SubscriptionId subscribe(const std::string &org, std::string name, EventHandler handler)
  {
    auto id = ++next_subscription_;
    subscriptions_.emplace(id, Subscription{anchor_peer(org), std::move(name), std::move(handler)});
    trace_.record(scheduler_.now(), "subscribe", {{"sub", id}, {"org", org}});
    return id;
  }

  void unsubscribe(SubscriptionId id) { subscriptions_.erase(id); }

  // -- synchronous helpers (virtual mode, caller owns the loop) -----------

  TxOutcome submit_and_wait(const ClientIdentity &client, std::string function, std::vector<std::string> args)
  {
    std::optional<TxOutcome> out;
    submit(client, std::move(function), std::move(args), [&](const TxOutcome &o) { out = o; });
    scheduler_.run_until([&] { return out.has_value(); });
    if (!out) throw std::logic_error("transaction never completed");
    return *out;
  }

  QueryOutcome query_and_wait(const ClientIdentity &client, std::string function, std::vector<std::string> args = {})
  {
    std::optional<QueryOutcome> out;
    query(client, std::move(function), std::move(args), [&](const QueryOutcome &q) { out = q; });
    scheduler_.run_until([&] { return out.has_value(); });
    if (!out) throw std::logic_error("query never completed");
    return *out;
  }

  std::uint64_t run_until_idle() { return scheduler_.run_until_idle(); }

  // -- consistency --------------------------------------------------------

  bool replicas_consistent() const
  {
    auto reference = encode_chain(peers_.front()->ledger->chain());
    auto hash = peers_.front()->ledger->state_hash();
    for (std::size_t i = 1; i < peers_.size(); ++i)
    {
      if (peers_[i]->ledger->state_hash() != hash) return false;
      if (encode_chain(peers_[i]->ledger->chain()) != reference) return false;
    }
    return true;
  }

  std::vector<Digest> state_hashes() const
  {
    std::vector<Digest> out;
    for (const auto &p : peers_) out.push_back(p->ledger->state_hash());
    return out;
  }

private:
  struct InFlight
  {
    std::string client_org;
    SignedProposal signed_proposal;
    Digest tx_id{};
    std::vector<std::size_t> endorsers;
    std::vector<ProposalResponse> responses;
    std::size_t received = 0;
    Micros registered_at = 0;
    Micros sent_to_orderer_at = 0;
    TxOutcome outcome;
    TxCallback done;
    bool finished = false;
  };

  struct Subscription
  {
    std::size_t peer;
    std::string name;
    EventHandler handler;
  };

  Micros link() const { return from_ms(topology_.service.link_ms); }

  Micros endorse_time()
  {
    const auto &s = topology_.service;
    double factor = 1.0;
    if (s.jitter > 0) factor += std::uniform_real_distribution<double>(-s.jitter, s.jitter)(rng_);
    return from_ms(s.endorse_base_ms * factor);
  }

  std::vector<std::size_t> select_endorsers()
  {
    std::vector<std::size_t> out;
    switch (policy_.kind)
    {
    case EndorsementPolicy::Kind::all_peers:
      for (std::size_t i = 0; i < peers_.size(); ++i) out.push_back(i);
      break;
    case EndorsementPolicy::Kind::any_n:
    case EndorsementPolicy::Kind::load_balanced:
      for (std::size_t i = 0; i < policy_.required(); ++i) out.push_back((rotation_ + i) % peers_.size());
      rotation_ = (rotation_ + 1) % peers_.size();
      break;
    }
    return out;
  }

  static std::string peer_label(const PeerNode &p) { return p.name + "." + p.org; }

  nlohmann::json endorser_names(const std::vector<std::size_t> &idx) const
  {
    auto a = nlohmann::json::array();
    for (auto i : idx) a.push_back(peer_label(*peers_[i]));
    return a;
  }

  void finish(const std::shared_ptr<InFlight> &tx)
  {
    if (tx->finished) return;
    tx->finished = true;
    tx->outcome.finished_at = scheduler_.now();
    trace_.record(scheduler_.now(), "outcome", {{"tx", tx->outcome.tx_id}, {"code", tx->outcome.code()}});
    if (tx->done) tx->done(tx->outcome);
  }

  void endorsements_complete(const std::shared_ptr<InFlight> &tx)
  {
    const auto k = tx->endorsers.size();
    auto coordination = from_ms(topology_.service.coordination_ms * static_cast<double>(k - 1));
    tx->outcome.peer_ms = to_ms(scheduler_.now() - tx->outcome.submitted_at + coordination);

    for (const auto &r : tx->responses)
    {
      if (!r.ok)
      {
        auto err = chaincode_error_from_message(r.message);
        tx->outcome.status = TxOutcome::Status::rejected;
        tx->outcome.errc = err.code();
        tx->outcome.message = err.what();
        finish(tx);
        return;
      }
    }
    auto digest = tx->responses.front().digest();
    for (const auto &r : tx->responses)
    {
      if (r.digest() != digest)
      {
        tx->outcome.status = TxOutcome::Status::mismatch;
        tx->outcome.message = "EndorsementMismatch: endorsers returned differing results";
        finish(tx);
        return;
      }
    }
    tx->outcome.payload = tx->responses.front().payload;
    trace_.record(scheduler_.now(), "endorsed", {{"tx", tx->outcome.tx_id}, {"peer_ms", tx->outcome.peer_ms}});

    scheduler_.after(coordination, [this, tx] {
      Transaction t;
      t.signed_proposal = tx->signed_proposal;
      const auto &first = tx->responses.front();
      t.payload = first.payload;
      t.rwset = first.rwset;
      t.events = first.events;
      for (std::size_t slot = 0; slot < tx->endorsers.size(); ++slot)
      {
        const auto &peer = *peers_[tx->endorsers[slot]];
        auto d = tx->responses[slot].digest();
        t.endorsements.push_back({peer.cert, d, crypto::sign(peer.key, d)});
      }
      tx->responses.clear();
      if (wire_tap) wire_tap("transaction", t.encode());

      // Register for the commit notification, then hand over to the orderer.
      tx->registered_at = scheduler_.now();
      tx->sent_to_orderer_at = scheduler_.now();
      awaiting_commit_.emplace(tx->outcome.tx_id, tx);
      trace_.record(scheduler_.now(), "order_submit", {{"tx", tx->outcome.tx_id}});

      scheduler_.after(link() + from_ms(topology_.orderer.service_ms), [this, tx, t = std::move(t)]() mutable {
        enqueue(std::move(t));
        scheduler_.after(link(), [this, tx] {
          tx->outcome.orderer_ms = to_ms(scheduler_.now() - tx->sent_to_orderer_at);
          trace_.record(scheduler_.now(), "order_ack", {{"tx", tx->outcome.tx_id}});
        });
      });
    });
  }

  // -- orderer ------------------------------------------------------------

  void enqueue(Transaction tx)
  {
    order_queue_.push_back(std::move(tx));
    trace_.record(scheduler_.now(), "order_enqueue", {{"queue", order_queue_.size()}});
    if (order_queue_.size() == 1)
    {
      auto generation = ++timer_generation_;
      scheduler_.after(from_ms(topology_.orderer.batch_timeout_ms), [this, generation] {
        if (generation == timer_generation_ && !order_queue_.empty()) cut(true);
      });
    }
    if (order_queue_.size() >= topology_.orderer.max_message_count) cut(false);
  }

  void cut(bool by_timeout)
  {
    ++timer_generation_;
    std::vector<Transaction> txs;
    txs.swap(order_queue_);
    auto block = std::make_shared<const Block>(Block::make(tip_number_ + 1,
                                                           static_cast<std::uint64_t>(scheduler_.now() / 1000),
                                                           tip_hash_, std::move(txs)));
    tip_number_ = block->number;
    tip_hash_ = block->hash;
    cuts_.push_back({block->number, block->transactions.size(), by_timeout, scheduler_.now()});
    trace_.record(scheduler_.now(), "cut",
                  {{"block", block->number},
                   {"size", block->transactions.size()},
                   {"reason", by_timeout ? "timeout" : "size"},
                   {"hash", to_hex(block->hash)}});

    const auto &s = topology_.service;
    std::size_t endorsements = 0;
    for (const auto &tx : block->transactions) endorsements += tx.endorsements.size();
    auto cost = from_ms(s.commit_block_ms + s.commit_tx_ms * static_cast<double>(block->transactions.size()) +
                        s.verify_endorsement_ms * static_cast<double>(endorsements));

    for (std::size_t p = 0; p < peers_.size(); ++p)
    {
      scheduler_.after(link(), [this, p, block, cost] {
        auto &peer = *peers_[p];
        auto start = std::max(scheduler_.now(), peer.busy_until);
        peer.busy_until = start + cost;
        scheduler_.at(peer.busy_until, [this, p, block] { commit_on(p, *block); });
      });
    }
  }

  void commit_on(std::size_t p, const Block &block)
  {
    auto &peer = *peers_[p];
    auto report = peer.ledger->append_block(block);
    auto flags = nlohmann::json::array();
    for (std::size_t i = 0; i < block.transactions.size(); ++i)
    {
      flags.push_back({{"tx", to_hex(block.transactions[i].tx_id())},
                       {"fn", block.transactions[i].proposal().function},
                       {"flag", to_string(report.flags[i])}});
    }
    trace_.record(scheduler_.now(), "commit", {{"peer", peer_label(peer)}, {"block", block.number}, {"txs", flags}});

    for (std::size_t i = 0; i < block.transactions.size(); ++i)
    {
      const auto &tx = block.transactions[i];
      auto flag = report.flags[i];
      auto id = to_hex(tx.tx_id());

      if (flag == TxValidation::valid)
      {
        for (const auto &ev : tx.events)
        {
          for (const auto &[sub_id, sub] : subscriptions_)
          {
            if (sub.peer != p || (!sub.name.empty() && sub.name != ev.name)) continue;
            EventDelivery d{ev.name, ev.payload, id, block.number, scheduler_.now()};
            trace_.record(scheduler_.now(), "event", {{"sub", sub_id}, {"name", ev.name}, {"tx", id}});
            scheduler_.after(link(), [this, sub_id, d = std::move(d)] {
              auto it = subscriptions_.find(sub_id);
              if (it != subscriptions_.end()) it->second.handler(d);
            });
          }
        }
      }

      auto it = awaiting_commit_.find(id);
      if (it == awaiting_commit_.end() || anchor_peer(it->second->client_org) != p) continue;
      auto inflight = it->second;
      awaiting_commit_.erase(it);
      inflight->outcome.block = block.number;
      inflight->outcome.validation = flag;
      inflight->outcome.status = flag == TxValidation::valid ? TxOutcome::Status::committed : TxOutcome::Status::invalid;
      if (flag != TxValidation::valid) inflight->outcome.message = std::string(to_string(flag));
      scheduler_.after(link(), [this, inflight] {
        inflight->outcome.event_ms = to_ms(scheduler_.now() - inflight->registered_at);
        finish(inflight);
      });
    }
  }

  Topology topology_;
  std::shared_ptr<const Chaincode> chaincode_;
  NetworkOptions options_;
  Scheduler scheduler_;
  Trace trace_;
  std::mt19937_64 rng_;
  Membership membership_;
  EndorsementPolicy policy_;
  Block genesis_;
  std::vector<std::unique_ptr<PeerNode>> peers_;
  std::vector<Certificate> orderers_;
  std::map<std::string, std::size_t> anchor_;
  std::uint64_t nonce_ = 0;
  std::size_t rotation_ = 0;

  std::vector<Transaction> order_queue_;
  std::uint64_t timer_generation_ = 0;
  std::uint64_t tip_number_ = 0;
  Digest tip_hash_{};
  std::vector<BlockCut> cuts_;

  std::map<std::string, std::shared_ptr<InFlight>> awaiting_commit_;
  std::map<SubscriptionId, Subscription> subscriptions_;
  SubscriptionId next_subscription_ = 0;
};

/// Builds a network from a topology, validating it first.
inline std::unique_ptr<Network> build_network(const Topology &topology,
                                              std::shared_ptr<const Chaincode> chaincode,
                                              NetworkOptions options = {})
{
  topology.validate();
  return std::make_unique<Network>(topology, std::move(chaincode), options);
}

}  // namespace hailchain::netsim
