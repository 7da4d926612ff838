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

#include "hailchain/codec.hpp"
#include "hailchain/crypto.hpp"
#include "hailchain/identity.hpp"

#include <json.hpp>

#include <algorithm>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace hailchain {

// ---------------------------------------------------------------------------
// Versions and read/write sets
// ---------------------------------------------------------------------------

/// Position of the transaction that last wrote a key.
struct Version
{
  std::uint64_t block = 0;
  std::uint32_t tx = 0;

  auto operator<=>(const Version &) const = default;
};

struct ReadEntry
{
  std::string key;
  std::optional<Version> version;  // nullopt: key never written

  bool operator==(const ReadEntry &) const = default;
};

struct WriteEntry
{
  std::string key;
  std::optional<Bytes> value;  // nullopt: delete (tombstone)

  bool operator==(const WriteEntry &) const = default;
};

struct ReadWriteSet
{
  std::vector<ReadEntry> reads;
  std::vector<WriteEntry> writes;

  void encode(Writer &w) const
  {
    w.u32(static_cast<std::uint32_t>(reads.size()));
    for (const auto &r : reads)
    {
      w.str(r.key).boolean(r.version.has_value());
      if (r.version) w.u64(r.version->block).u32(r.version->tx);
    }
    w.u32(static_cast<std::uint32_t>(writes.size()));
    for (const auto &wr : writes)
    {
      w.str(wr.key).boolean(wr.value.has_value());
      if (wr.value) w.bytes(*wr.value);
    }
  }

  Bytes encode() const
  {
    Writer w;
    encode(w);
    return std::move(w).take();
  }

  static ReadWriteSet decode(Reader &r)
  {
    ReadWriteSet s;
    auto nr = r.count();
    for (std::uint32_t i = 0; i < nr; ++i)
    {
      ReadEntry e;
      e.key = r.str();
      if (r.boolean()) e.version = Version{r.u64(), r.u32()};
      s.reads.push_back(std::move(e));
    }
    auto nw = r.count();
    for (std::uint32_t i = 0; i < nw; ++i)
    {
      WriteEntry e;
      e.key = r.str();
      if (r.boolean()) e.value = r.bytes();
      s.writes.push_back(std::move(e));
    }
    return s;
  }

  bool operator==(const ReadWriteSet &) const = default;
};

/// Opaque chaincode event as carried by the ledger; the chaincode defines
/// the payload layout.
struct ChaincodeEvent
{
  std::string name;
  Bytes payload;

  bool operator==(const ChaincodeEvent &) const = default;
};

inline void encode_events(Writer &w, const std::vector<ChaincodeEvent> &events)
{
  w.u32(static_cast<std::uint32_t>(events.size()));
  for (const auto &e : events) w.str(e.name).bytes(e.payload);
}

inline std::vector<ChaincodeEvent> decode_events(Reader &r)
{
  std::vector<ChaincodeEvent> out;
  auto n = r.count();
  for (std::uint32_t i = 0; i < n; ++i)
  {
    ChaincodeEvent e;
    e.name = r.str();
    e.payload = r.bytes();
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// World state
// ---------------------------------------------------------------------------

struct VersionedValue
{
  std::optional<Bytes> value;  // nullopt: tombstone
  Version version;

  bool operator==(const VersionedValue &) const = default;
};

/// Latest key -> (value, version). Deleted keys keep a tombstone carrying the
/// deleting transaction's version so stale reads of a since-deleted key are
/// still detected.
class WorldState
{
public:
  using Map = std::map<std::string, VersionedValue, std::less<>>;

  const VersionedValue *find(std::string_view key) const
  {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::optional<Version> version_of(std::string_view key) const
  {
    auto *e = find(key);
    if (!e) return std::nullopt;
    return e->version;
  }

  void apply(const std::vector<WriteEntry> &writes, Version at)
  {
    for (const auto &w : writes)
    {
      entries_.insert_or_assign(w.key, VersionedValue{w.value, at});
    }
  }

  /// Direct write bypassing the transaction pipeline; test fixtures only.
  void put_unchecked(const std::string &key, VersionedValue v) { entries_.insert_or_assign(key, std::move(v)); }

  const Map &entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  bool operator==(const WorldState &) const = default;

private:
  Map entries_;
};

/// SHA-256 over the sorted (key, value, version) triples. The empty state
/// hashes to SHA-256 of the empty string.
inline Digest state_hash(const WorldState &state)
{
  crypto::Sha256 h;
  for (const auto &[key, entry] : state.entries())
  {
    Writer w;
    w.str(key).boolean(entry.value.has_value());
    if (entry.value) w.bytes(*entry.value);
    w.u64(entry.version.block).u32(entry.version.tx);
    h.update(w.data());
  }
  return h.finish();
}

// ---------------------------------------------------------------------------
// Read/write-set capture
// ---------------------------------------------------------------------------

/// Runs one invocation against an immutable state view. Reads record the
/// version observed on first access; writes are buffered, and reading a key
/// already written in this invocation returns the buffered value without
/// recording a read.
class TxSimulator
{
public:
  explicit TxSimulator(const WorldState &snapshot) : snapshot_(snapshot) {}

  std::optional<Bytes> get_state(const std::string &key)
  {
    if (auto it = write_index_.find(key); it != write_index_.end())
    {
      return writes_[it->second].value;
    }
    auto *entry = snapshot_.find(key);
    record_read(key, entry);
    if (!entry) return std::nullopt;
    return entry->value;
  }

  void put_state(const std::string &key, Bytes value) { buffer_write(key, std::move(value)); }

  void del_state(const std::string &key) { buffer_write(key, std::nullopt); }

  /// Live keys starting with prefix, merged with this invocation's writes.
  std::vector<std::pair<std::string, Bytes>> scan_prefix(const std::string &prefix)
  {
    std::map<std::string, Bytes> merged;
    for (auto it = snapshot_.entries().lower_bound(prefix); it != snapshot_.entries().end(); ++it)
    {
      if (it->first.compare(0, prefix.size(), prefix) != 0) break;
      if (write_index_.contains(it->first)) continue;
      record_read(it->first, &it->second);
      if (it->second.value) merged.emplace(it->first, *it->second.value);
    }
    for (const auto &w : writes_)
    {
      if (w.key.compare(0, prefix.size(), prefix) != 0) continue;
      if (w.value) merged.insert_or_assign(w.key, *w.value);
    }
    return {merged.begin(), merged.end()};
  }

  ReadWriteSet result() const { return {reads_, writes_}; }

private:
  void record_read(const std::string &key, const VersionedValue *entry)
  {
    if (!read_keys_.insert(key).second) return;
    reads_.push_back({key, entry ? std::optional<Version>(entry->version) : std::nullopt});
  }

  void buffer_write(const std::string &key, std::optional<Bytes> value)
  {
    if (auto it = write_index_.find(key); it != write_index_.end())
    {
      writes_[it->second].value = std::move(value);
      return;
    }
    write_index_.emplace(key, writes_.size());
    writes_.push_back({key, std::move(value)});
  }

  const WorldState &snapshot_;
  std::vector<ReadEntry> reads_;
  std::set<std::string> read_keys_;
  std::vector<WriteEntry> writes_;
  std::map<std::string, std::size_t> write_index_;
};

// ---------------------------------------------------------------------------
// Proposals, endorsements, transactions
// ---------------------------------------------------------------------------

struct Proposal
{
  std::string function;
  std::vector<std::string> args;
  Certificate creator;
  std::uint64_t nonce = 0;
  std::uint64_t timestamp_ms = 0;  // client clock; the only time chaincode sees

  void encode(Writer &w) const
  {
    w.str(function).u32(static_cast<std::uint32_t>(args.size()));
    for (const auto &a : args) w.str(a);
    creator.encode(w);
    w.u64(nonce).u64(timestamp_ms);
  }

  Bytes encode() const
  {
    Writer w;
    encode(w);
    return std::move(w).take();
  }

  static Proposal decode(Reader &r)
  {
    Proposal p;
    p.function = r.str();
    auto n = r.count();
    for (std::uint32_t i = 0; i < n; ++i) p.args.push_back(r.str());
    p.creator = Certificate::decode(r);
    p.nonce = r.u64();
    p.timestamp_ms = r.u64();
    return p;
  }

  Digest tx_id() const
  {
    Writer w;
    creator.encode(w);
    w.u64(nonce).str(function).u32(static_cast<std::uint32_t>(args.size()));
    for (const auto &a : args) w.str(a);
    return crypto::sha256(w.data());
  }

  bool operator==(const Proposal &) const = default;
};

struct SignedProposal
{
  Proposal proposal;
  crypto::Signature signature{};

  static SignedProposal sign(Proposal p, const crypto::SecretKey &key)
  {
    SignedProposal sp{std::move(p), {}};
    sp.signature = crypto::sign(key, sp.proposal.encode());
    return sp;
  }

  bool signature_valid() const
  {
    return crypto::verify_sig(proposal.creator.public_key, proposal.encode(), signature);
  }

  Bytes encode() const
  {
    Writer w;
    proposal.encode(w);
    w.fixed(signature);
    return std::move(w).take();
  }

  bool operator==(const SignedProposal &) const = default;
};

/// Digest every endorser signs: binds the transaction id to the simulated
/// result.
inline Digest response_digest(const Digest &tx_id, ByteView payload, const ReadWriteSet &rwset,
                              const std::vector<ChaincodeEvent> &events)
{
  Writer w;
  w.fixed(tx_id).bytes(payload);
  rwset.encode(w);
  encode_events(w, events);
  return crypto::sha256(w.data());
}

struct ProposalResponse
{
  Digest tx_id{};
  bool ok = false;
  std::string message;  // error text when !ok
  Bytes payload;
  ReadWriteSet rwset;
  std::vector<ChaincodeEvent> events;

  Digest digest() const { return response_digest(tx_id, payload, rwset, events); }
};

struct Endorsement
{
  Certificate endorser;
  Digest response_digest{};
  crypto::Signature signature{};

  bool operator==(const Endorsement &) const = default;
};

struct Transaction
{
  SignedProposal signed_proposal;
  Bytes payload;
  ReadWriteSet rwset;
  std::vector<ChaincodeEvent> events;
  std::vector<Endorsement> endorsements;

  Digest tx_id() const { return signed_proposal.proposal.tx_id(); }
  const Proposal &proposal() const { return signed_proposal.proposal; }

  void encode(Writer &w) const
  {
    signed_proposal.proposal.encode(w);
    w.fixed(signed_proposal.signature).bytes(payload);
    rwset.encode(w);
    encode_events(w, events);
    w.u32(static_cast<std::uint32_t>(endorsements.size()));
    for (const auto &e : endorsements)
    {
      e.endorser.encode(w);
      w.fixed(e.response_digest).fixed(e.signature);
    }
  }

  Bytes encode() const
  {
    Writer w;
    encode(w);
    return std::move(w).take();
  }

  static Transaction decode(Reader &r)
  {
    Transaction tx;
    tx.signed_proposal.proposal = Proposal::decode(r);
    tx.signed_proposal.signature = r.fixed<crypto::Signature{}.size()>();
    tx.payload = r.bytes();
    tx.rwset = ReadWriteSet::decode(r);
    tx.events = decode_events(r);
    auto n = r.count();
    for (std::uint32_t i = 0; i < n; ++i)
    {
      Endorsement e;
      e.endorser = Certificate::decode(r);
      e.response_digest = r.fixed<32>();
      e.signature = r.fixed<crypto::Signature{}.size()>();
      tx.endorsements.push_back(std::move(e));
    }
    return tx;
  }

  bool operator==(const Transaction &) const = default;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class TxValidation : std::uint8_t
{
  pending = 0,
  valid = 1,
  read_conflict = 2,
  policy_unmet = 3,
  bad_signature = 4,
  bad_creator = 5,
  duplicate_tx_id = 6,
};

inline std::string_view to_string(TxValidation v)
{
  switch (v)
  {
  case TxValidation::pending: return "pending";
  case TxValidation::valid: return "valid";
  case TxValidation::read_conflict: return "ReadConflict";
  case TxValidation::policy_unmet: return "PolicyUnmet";
  case TxValidation::bad_signature: return "BadSignature";
  case TxValidation::bad_creator: return "BadCreator";
  case TxValidation::duplicate_tx_id: return "DuplicateTxId";
  }
  return "unknown";
}

struct EndorsementPolicy
{
  enum class Kind : std::uint8_t
  {
    all_peers,
    any_n,
    load_balanced,
  };

  Kind kind = Kind::all_peers;
  std::size_t n = 1;  // all_peers: channel peer count; any_n: threshold

  static EndorsementPolicy all_peers(std::size_t peer_count) { return {Kind::all_peers, peer_count}; }
  static EndorsementPolicy any_n(std::size_t n) { return {Kind::any_n, n}; }
  static EndorsementPolicy load_balanced() { return {Kind::load_balanced, 1}; }

  std::size_t required() const { return kind == Kind::load_balanced ? 1 : n; }

  std::string name() const
  {
    switch (kind)
    {
    case Kind::all_peers: return "AllPeers(" + std::to_string(n) + ")";
    case Kind::any_n: return "AnyN(" + std::to_string(n) + ")";
    case Kind::load_balanced: return "LoadBalanced";
    }
    return "unknown";
  }
};

/// Commit-time check of one transaction against the current state. Signature
/// failures take precedence over policy, policy over read conflicts.
inline TxValidation validate_transaction(const Transaction &tx, const WorldState &state,
                                         const EndorsementPolicy &policy, const Membership &membership)
{
  const auto &creator = tx.proposal().creator;
  if (creator.role != Role::client || !membership.verify_certificate(creator)) return TxValidation::bad_creator;
  const auto &sp = tx.signed_proposal;
  if (!membership.verify_signature(creator.public_key, sp.proposal.encode(), sp.signature))
  {
    return TxValidation::bad_signature;
  }

  auto expected = response_digest(tx.tx_id(), tx.payload, tx.rwset, tx.events);
  std::set<std::string> endorsers;
  for (const auto &e : tx.endorsements)
  {
    if (e.endorser.role != Role::peer || !membership.verify_certificate(e.endorser)) return TxValidation::bad_signature;
    if (e.response_digest != expected) return TxValidation::bad_signature;
    if (!membership.verify_signature(e.endorser.public_key, e.response_digest, e.signature))
    {
      return TxValidation::bad_signature;
    }
    endorsers.insert(derive_user_id(e.endorser).value());
  }
  if (endorsers.size() < policy.required()) return TxValidation::policy_unmet;

  for (const auto &r : tx.rwset.reads)
  {
    if (state.version_of(r.key) != r.version) return TxValidation::read_conflict;
  }
  return TxValidation::valid;
}

// ---------------------------------------------------------------------------
// Blocks and chain
// ---------------------------------------------------------------------------

struct Block
{
  std::uint64_t number = 0;
  std::uint64_t timestamp_ms = 0;
  Digest prev_hash{};
  std::vector<Transaction> transactions;
  Digest hash{};

  /// Canonical bytes of everything the block hash covers.
  Bytes header_and_body() const
  {
    Writer w;
    w.str("hailchain.block.v1").u64(number).u64(timestamp_ms).fixed(prev_hash);
    w.u32(static_cast<std::uint32_t>(transactions.size()));
    for (const auto &tx : transactions) tx.encode(w);
    return std::move(w).take();
  }

  Digest compute_hash() const { return crypto::sha256(header_and_body()); }

  static Block make(std::uint64_t number, std::uint64_t timestamp_ms, const Digest &prev,
                    std::vector<Transaction> txs)
  {
    Block b{number, timestamp_ms, prev, std::move(txs), {}};
    b.hash = b.compute_hash();
    return b;
  }

  static Block genesis(std::uint64_t timestamp_ms) { return make(0, timestamp_ms, kZeroDigest, {}); }

  bool operator==(const Block &) const = default;
};

/// A block as stored by a committing peer: the ordered block plus the
/// per-transaction validation flags, chained through a second digest so the
/// flags are tamper-evident too.
struct CommittedBlock
{
  Block block;
  std::vector<TxValidation> flags;
  Digest commit_hash{};

  static Digest compute_commit_hash(const Digest &prev_commit, const Block &block,
                                    const std::vector<TxValidation> &flags)
  {
    Writer w;
    w.fixed(prev_commit).fixed(block.hash).u32(static_cast<std::uint32_t>(flags.size()));
    for (auto f : flags) w.u8(static_cast<std::uint8_t>(f));
    return crypto::sha256(w.data());
  }

  void encode(Writer &w) const
  {
    w.u64(block.number).u64(block.timestamp_ms).fixed(block.prev_hash);
    w.u32(static_cast<std::uint32_t>(block.transactions.size()));
    for (const auto &tx : block.transactions) tx.encode(w);
    w.fixed(block.hash);
    w.u32(static_cast<std::uint32_t>(flags.size()));
    for (auto f : flags) w.u8(static_cast<std::uint8_t>(f));
    w.fixed(commit_hash);
  }

  Bytes encode() const
  {
    Writer w;
    encode(w);
    return std::move(w).take();
  }

  static CommittedBlock decode(Reader &r)
  {
    CommittedBlock cb;
    cb.block.number = r.u64();
    cb.block.timestamp_ms = r.u64();
    cb.block.prev_hash = r.fixed<32>();
    auto n = r.count();
    for (std::uint32_t i = 0; i < n; ++i) cb.block.transactions.push_back(Transaction::decode(r));
    cb.block.hash = r.fixed<32>();
    auto nf = r.count();
    for (std::uint32_t i = 0; i < nf; ++i)
    {
      auto f = r.u8();
      if (f > static_cast<std::uint8_t>(TxValidation::duplicate_tx_id)) throw DecodeError("unknown validation flag");
      cb.flags.push_back(static_cast<TxValidation>(f));
    }
    cb.commit_hash = r.fixed<32>();
    return cb;
  }

  bool operator==(const CommittedBlock &) const = default;
};

using Chain = std::vector<CommittedBlock>;

inline Bytes encode_chain(const Chain &chain)
{
  Writer w;
  w.u32(static_cast<std::uint32_t>(chain.size()));
  for (const auto &b : chain) b.encode(w);
  return std::move(w).take();
}

inline Chain decode_chain(ByteView data)
{
  Reader r(data);
  Chain chain;
  auto n = r.count();
  for (std::uint32_t i = 0; i < n; ++i) chain.push_back(CommittedBlock::decode(r));
  r.expect_done();
  return chain;
}

/// True iff every block hash recomputes, every block links to its
/// predecessor, numbering is contiguous from a zero-linked genesis, and the
/// commit-hash chain over validation flags recomputes.
inline bool verify_chain(const Chain &chain)
{
  Digest prev = kZeroDigest;
  Digest prev_commit = kZeroDigest;
  for (std::size_t i = 0; i < chain.size(); ++i)
  {
    const auto &cb = chain[i];
    if (cb.block.number != i) return false;
    if (cb.block.prev_hash != prev) return false;
    if (cb.block.compute_hash() != cb.block.hash) return false;
    if (cb.flags.size() != cb.block.transactions.size()) return false;
    if (CommittedBlock::compute_commit_hash(prev_commit, cb.block, cb.flags) != cb.commit_hash) return false;
    prev = cb.block.hash;
    prev_commit = cb.commit_hash;
  }
  return true;
}

inline bool verify_chain_bytes(ByteView data)
{
  try
  {
    return verify_chain(decode_chain(data));
  }
  catch (const DecodeError &)
  {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Per-peer ledger
// ---------------------------------------------------------------------------

class LedgerError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct CommitReport
{
  std::uint64_t block_number = 0;
  std::vector<TxValidation> flags;
};

/// One peer's replica: chain plus world state. Snapshot reads may run
/// concurrently; block application is exclusive.
class PeerLedger
{
public:
  PeerLedger(const Membership &membership, EndorsementPolicy policy, const Block &genesis)
      : membership_(&membership), policy_(policy)
  {
    if (genesis.number != 0 || genesis.prev_hash != kZeroDigest || genesis.compute_hash() != genesis.hash ||
        !genesis.transactions.empty())
    {
      throw LedgerError("invalid genesis block");
    }
    CommittedBlock cb{genesis, {}, CommittedBlock::compute_commit_hash(kZeroDigest, genesis, {})};
    chain_.push_back(std::move(cb));
  }

  PeerLedger(const PeerLedger &) = delete;
  PeerLedger &operator=(const PeerLedger &) = delete;

  /// Validates every transaction in order against the state as updated by the
  /// valid transactions before it, applies valid writes at (block, index),
  /// and appends the block whatever the outcome.
  CommitReport append_block(const Block &candidate)
  {
    std::unique_lock lock(mutex_);
    const auto &head = chain_.back();
    if (candidate.prev_hash != head.block.hash || candidate.number != head.block.number + 1)
    {
      throw LedgerError("BrokenChain: block " + std::to_string(candidate.number) + " does not extend height " +
                        std::to_string(head.block.number));
    }
    if (candidate.compute_hash() != candidate.hash) throw LedgerError("BrokenChain: block hash mismatch");

    CommitReport report;
    report.block_number = candidate.number;
    std::unordered_set<std::string> block_ids;
    for (std::uint32_t i = 0; i < candidate.transactions.size(); ++i)
    {
      const auto &tx = candidate.transactions[i];
      auto id = to_hex(tx.tx_id());
      TxValidation v;
      if (tx_ids_.contains(id) || block_ids.contains(id))
      {
        v = TxValidation::duplicate_tx_id;
      }
      else
      {
        v = validate_transaction(tx, state_, policy_, *membership_);
      }
      block_ids.insert(id);
      if (v == TxValidation::valid) state_.apply(tx.rwset.writes, Version{candidate.number, i});
      report.flags.push_back(v);
    }
    tx_ids_.insert(block_ids.begin(), block_ids.end());
    auto commit = CommittedBlock::compute_commit_hash(chain_.back().commit_hash, candidate, report.flags);
    chain_.push_back(CommittedBlock{candidate, report.flags, commit});
    return report;
  }

  /// Re-validates stored blocks from a file; fails if recorded flags differ.
  void replay(const Chain &stored)
  {
    for (const auto &cb : stored)
    {
      if (cb.block.number == 0)
      {
        if (cb.block.hash != chain_.front().block.hash) throw LedgerError("stored genesis differs from topology");
        continue;
      }
      auto report = append_block(cb.block);
      if (report.flags != cb.flags) throw LedgerError("replayed validation flags differ at block " +
                                                      std::to_string(cb.block.number));
    }
  }

  template <typename F>
  decltype(auto) with_state(F &&f) const
  {
    std::shared_lock lock(mutex_);
    return std::forward<F>(f)(state_);
  }

  Digest state_hash() const
  {
    std::shared_lock lock(mutex_);
    return hailchain::state_hash(state_);
  }

  std::uint64_t height() const
  {
    std::shared_lock lock(mutex_);
    return chain_.size();
  }

  Chain chain() const
  {
    std::shared_lock lock(mutex_);
    return chain_;
  }

  /// Number and hash of the newest block.
  std::pair<std::uint64_t, Digest> tip() const
  {
    std::shared_lock lock(mutex_);
    return {chain_.back().block.number, chain_.back().block.hash};
  }

  CommittedBlock block(std::uint64_t n) const
  {
    std::shared_lock lock(mutex_);
    return chain_.at(n);
  }

  const EndorsementPolicy &policy() const { return policy_; }

  /// Test hook: mutate state outside the pipeline to simulate divergence.
  void corrupt_state_for_test(const std::string &key, Bytes value)
  {
    std::unique_lock lock(mutex_);
    state_.put_unchecked(key, VersionedValue{std::move(value), Version{~0ull, 0}});
  }

private:
  const Membership *membership_;
  EndorsementPolicy policy_;
  mutable std::shared_mutex mutex_;
  Chain chain_;
  WorldState state_;
  std::unordered_set<std::string> tx_ids_;
};

// ---------------------------------------------------------------------------
// Persistence and JSON dump
// ---------------------------------------------------------------------------

/// Append-only file of length-prefixed canonical committed blocks.
class LedgerFile
{
public:
  explicit LedgerFile(std::filesystem::path path) : path_(std::move(path)) {}

  void append(const CommittedBlock &cb) const
  {
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw LedgerError("cannot open ledger file " + path_.string());
    auto bytes = cb.encode();
    Writer len;
    len.u32(static_cast<std::uint32_t>(bytes.size()));
    out.write(reinterpret_cast<const char *>(len.data().data()), static_cast<std::streamsize>(len.data().size()));
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw LedgerError("write failed on " + path_.string());
  }

  Chain load() const
  {
    Chain chain;
    if (!std::filesystem::exists(path_)) return chain;
    std::ifstream in(path_, std::ios::binary);
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(data);
    while (!r.done())
    {
      auto n = r.u32();
      if (n > r.remaining()) throw LedgerError("truncated ledger file " + path_.string());
      Bytes rec(n);
      for (auto &b : rec) b = r.u8();
      Reader rr(rec);
      chain.push_back(CommittedBlock::decode(rr));
      rr.expect_done();
    }
    return chain;
  }

  const std::filesystem::path &path() const { return path_; }

private:
  std::filesystem::path path_;
};

inline nlohmann::json value_to_json(const Bytes &value)
{
  auto text = to_string(value);
  auto parsed = nlohmann::json::parse(text, nullptr, false);
  if (!parsed.is_discarded()) return parsed;
  return {{"hex", to_hex(value)}};
}

inline nlohmann::json to_json(const CommittedBlock &cb)
{
  auto txs = nlohmann::json::array();
  for (std::size_t i = 0; i < cb.block.transactions.size(); ++i)
  {
    const auto &tx = cb.block.transactions[i];
    const auto &p = tx.proposal();
    nlohmann::json reads = nlohmann::json::array();
    for (const auto &r : tx.rwset.reads)
    {
      nlohmann::json v = nullptr;
      if (r.version) v = {r.version->block, r.version->tx};
      reads.push_back({{"key", r.key}, {"version", v}});
    }
    nlohmann::json writes = nlohmann::json::array();
    for (const auto &w : tx.rwset.writes)
    {
      writes.push_back({{"key", w.key},
                        {"delete", !w.value.has_value()},
                        {"value", w.value ? value_to_json(*w.value) : nlohmann::json(nullptr)}});
    }
    nlohmann::json endorsers = nlohmann::json::array();
    for (const auto &e : tx.endorsements) endorsers.push_back(derive_user_id(e.endorser).value());
    nlohmann::json events = nlohmann::json::array();
    for (const auto &e : tx.events) events.push_back({{"name", e.name}, {"payload", value_to_json(e.payload)}});
    txs.push_back({
        {"tx_id", to_hex(tx.tx_id())},
        {"function", p.function},
        {"args", p.args},
        {"creator", derive_user_id(p.creator).value()},
        {"timestamp_ms", p.timestamp_ms},
        {"endorsers", endorsers},
        {"validation", i < cb.flags.size() ? std::string(to_string(cb.flags[i])) : "pending"},
        {"reads", reads},
        {"writes", writes},
        {"events", events},
    });
  }
  return {
      {"number", cb.block.number},
      {"timestamp_ms", cb.block.timestamp_ms},
      {"prev_hash", to_hex(cb.block.prev_hash)},
      {"hash", to_hex(cb.block.hash)},
      {"commit_hash", to_hex(cb.commit_hash)},
      {"transactions", txs},
  };
}

}  // namespace hailchain
