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

#include <json.hpp>

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace hailchain {

enum class Role : std::uint8_t
{
  peer = 0,
  orderer = 1,
  client = 2,
};

inline std::string_view to_string(Role r)
{
  switch (r)
  {
  case Role::peer: return "peer";
  case Role::orderer: return "orderer";
  case Role::client: return "client";
  }
  return "unknown";
}

enum class IdentityErrc
{
  DuplicateOrg,
  DuplicateLocalId,
  InvalidName,
  UnknownOrg,
  InvalidCertificate,
};

class IdentityError : public std::runtime_error
{
public:
  IdentityError(IdentityErrc code, const std::string &what) : std::runtime_error(what), code_(code) {}
  IdentityErrc code() const { return code_; }

private:
  IdentityErrc code_;
};

inline constexpr char kUserIdSeparator = '@';

/// Names may not be empty and may not contain the UserId separator, which
/// keeps local_id + '@' + msp_id injective.
inline bool valid_identity_name(std::string_view name)
{
  return !name.empty() && name.find(kUserIdSeparator) == std::string_view::npos;
}

struct Certificate
{
  std::string local_id;
  std::string org_msp_id;
  Role role = Role::client;
  crypto::PublicKey public_key{};
  crypto::Signature issuer_signature{};

  /// The bytes covered by the issuer signature.
  Bytes signed_bytes() const
  {
    Writer w;
    w.str("hailchain.cert.v1").str(local_id).str(org_msp_id).u8(static_cast<std::uint8_t>(role)).fixed(public_key);
    return std::move(w).take();
  }

  void encode(Writer &w) const
  {
    w.str(local_id).str(org_msp_id).u8(static_cast<std::uint8_t>(role)).fixed(public_key).fixed(issuer_signature);
  }

  Bytes encode() const
  {
    Writer w;
    encode(w);
    return std::move(w).take();
  }

  static Certificate decode(Reader &r)
  {
    Certificate c;
    c.local_id = r.str();
    c.org_msp_id = r.str();
    auto role = r.u8();
    if (role > static_cast<std::uint8_t>(Role::client)) throw DecodeError("unknown certificate role");
    c.role = static_cast<Role>(role);
    c.public_key = r.fixed<crypto::PublicKey{}.size()>();
    c.issuer_signature = r.fixed<crypto::Signature{}.size()>();
    return c;
  }

  static Certificate decode(ByteView data)
  {
    Reader r(data);
    auto c = decode(r);
    r.expect_done();
    return c;
  }

  bool operator==(const Certificate &) const = default;
};

inline nlohmann::json to_json(const Certificate &c)
{
  return {
      {"local_id", c.local_id},
      {"org_msp_id", c.org_msp_id},
      {"role", std::string(to_string(c.role))},
      {"public_key", to_hex(c.public_key)},
      {"issuer_signature", to_hex(c.issuer_signature)},
  };
}

inline Certificate certificate_from_json(const nlohmann::json &j)
{
  Certificate c;
  c.local_id = j.at("local_id").get<std::string>();
  c.org_msp_id = j.at("org_msp_id").get<std::string>();
  auto role = j.at("role").get<std::string>();
  if (role == "peer") c.role = Role::peer;
  else if (role == "orderer") c.role = Role::orderer;
  else if (role == "client") c.role = Role::client;
  else throw DecodeError("unknown certificate role: " + role);
  auto pk = from_hex(j.at("public_key").get<std::string>());
  auto sig = from_hex(j.at("issuer_signature").get<std::string>());
  if (pk.size() != c.public_key.size() || sig.size() != c.issuer_signature.size())
  {
    throw DecodeError("bad key or signature length");
  }
  std::copy(pk.begin(), pk.end(), c.public_key.begin());
  std::copy(sig.begin(), sig.end(), c.issuer_signature.begin());
  return c;
}

/// Globally unique identity string: local_id '@' org_msp_id.
class UserId
{
public:
  UserId() = default;

  const std::string &value() const { return value_; }
  bool empty() const { return value_.empty(); }

  /// Parses a previously derived UserId (for example one stored in the
  /// ledger). Never used to establish who a caller is.
  static std::optional<UserId> parse(std::string_view s)
  {
    auto at = s.find(kUserIdSeparator);
    if (at == std::string_view::npos) return std::nullopt;
    if (!valid_identity_name(s.substr(0, at)) || !valid_identity_name(s.substr(at + 1))) return std::nullopt;
    UserId id;
    id.value_ = std::string(s);
    return id;
  }

  auto operator<=>(const UserId &) const = default;

private:
  friend UserId derive_user_id(const Certificate &cert);
  friend UserId make_user_id(std::string_view local_id, std::string_view org_msp_id);
  std::string value_;
};

inline UserId make_user_id(std::string_view local_id, std::string_view org_msp_id)
{
  if (!valid_identity_name(local_id) || !valid_identity_name(org_msp_id))
  {
    throw IdentityError(IdentityErrc::InvalidCertificate, "identity names must be nonempty and free of '@'");
  }
  UserId id;
  id.value_.reserve(local_id.size() + org_msp_id.size() + 1);
  id.value_.append(local_id).push_back(kUserIdSeparator);
  id.value_.append(org_msp_id);
  return id;
}

/// The only way chaincode learns who is calling.
inline UserId derive_user_id(const Certificate &cert)
{
  return make_user_id(cert.local_id, cert.org_msp_id);
}

class Organization
{
public:
  Organization(std::string msp_id, crypto::KeyPair root) : msp_id_(std::move(msp_id)), root_(std::move(root)) {}

  const std::string &msp_id() const { return msp_id_; }
  const crypto::PublicKey &root_public_key() const { return root_.public_key; }
  const std::map<std::string, Certificate> &registry() const { return registry_; }

  /// Issues a certificate for a fresh keypair. The secret key is returned to
  /// the caller once and is not retained by the organization.
  std::pair<Certificate, crypto::SecretKey> issue_certificate(const std::string &local_id, Role role)
  {
    auto kp = crypto::random_keypair();
    return {issue_for_key(local_id, role, kp.public_key), kp.secret_key};
  }

  template <typename Engine>
  std::pair<Certificate, crypto::SecretKey> issue_certificate(const std::string &local_id, Role role, Engine &rng)
  {
    auto kp = crypto::keypair_from_engine(rng);
    return {issue_for_key(local_id, role, kp.public_key), kp.secret_key};
  }

  Certificate issue_for_key(const std::string &local_id, Role role, const crypto::PublicKey &pk)
  {
    if (!valid_identity_name(local_id))
    {
      throw IdentityError(IdentityErrc::InvalidName, "invalid local id '" + local_id + "'");
    }
    if (registry_.contains(local_id))
    {
      throw IdentityError(IdentityErrc::DuplicateLocalId, "local id '" + local_id + "' already issued in " + msp_id_);
    }
    Certificate cert;
    cert.local_id = local_id;
    cert.org_msp_id = msp_id_;
    cert.role = role;
    cert.public_key = pk;
    cert.issuer_signature = crypto::sign(root_.secret_key, cert.signed_bytes());
    registry_.emplace(local_id, cert);
    return cert;
  }

  /// Re-admits a certificate issued earlier (e.g. restored from a wallet).
  void admit(const Certificate &cert)
  {
    if (cert.org_msp_id != msp_id_ ||
        !crypto::verify_sig(root_.public_key, cert.signed_bytes(), cert.issuer_signature))
    {
      throw IdentityError(IdentityErrc::InvalidCertificate, "certificate not issued by " + msp_id_);
    }
    auto [it, inserted] = registry_.emplace(cert.local_id, cert);
    if (!inserted && it->second != cert)
    {
      throw IdentityError(IdentityErrc::DuplicateLocalId, "local id '" + cert.local_id + "' already issued");
    }
  }

private:
  std::string msp_id_;
  crypto::KeyPair root_;
  std::map<std::string, Certificate> registry_;
};

/// Network-wide membership: every organization's root of trust, shared with
/// all nodes at bootstrap. Read-mostly; issuance takes the writer lock.
class Membership
{
public:
  Membership() = default;
  Membership(const Membership &) = delete;
  Membership &operator=(const Membership &) = delete;

  const Organization &create_org(const std::string &name)
  {
    return create_org(name, crypto::random_keypair());
  }

  const Organization &create_org(const std::string &name, crypto::KeyPair root)
  {
    if (!valid_identity_name(name))
    {
      throw IdentityError(IdentityErrc::InvalidName, "invalid organization name '" + name + "'");
    }
    std::unique_lock lock(mutex_);
    if (orgs_.contains(name))
    {
      throw IdentityError(IdentityErrc::DuplicateOrg, "organization '" + name + "' already exists");
    }
    return orgs_.emplace(name, Organization(name, std::move(root))).first->second;
  }

  std::pair<Certificate, crypto::SecretKey> issue_certificate(const std::string &org, const std::string &local_id,
                                                              Role role)
  {
    std::unique_lock lock(mutex_);
    return mutable_org(org).issue_certificate(local_id, role);
  }

  template <typename Engine>
  std::pair<Certificate, crypto::SecretKey> issue_certificate(const std::string &org, const std::string &local_id,
                                                              Role role, Engine &rng)
  {
    std::unique_lock lock(mutex_);
    return mutable_org(org).issue_certificate(local_id, role, rng);
  }

  void admit(const Certificate &cert)
  {
    std::unique_lock lock(mutex_);
    mutable_org(cert.org_msp_id).admit(cert);
  }

  /// True iff the issuer signature verifies under the named org's root key.
  /// Results are cached by certificate digest; org roots never change.
  bool verify_certificate(const Certificate &cert) const
  {
    auto fingerprint = crypto::sha256(cert.encode());
    {
      std::lock_guard guard(cache_mutex_);
      if (verified_.contains(fingerprint)) return true;
    }
    std::shared_lock lock(mutex_);
    auto it = orgs_.find(cert.org_msp_id);
    if (it == orgs_.end()) return false;
    if (!valid_identity_name(cert.local_id)) return false;
    if (!crypto::verify_sig(it->second.root_public_key(), cert.signed_bytes(), cert.issuer_signature)) return false;
    std::lock_guard guard(cache_mutex_);
    verified_.insert(fingerprint);
    return true;
  }

  /// Signature check memoized on (key, signature, message digest). Only
  /// successes are remembered.
  bool verify_signature(const crypto::PublicKey &public_key, ByteView message, const crypto::Signature &signature) const
  {
    crypto::Sha256 h;
    h.update(public_key).update(signature).update(crypto::sha256(message));
    auto fingerprint = h.finish();
    {
      std::lock_guard guard(cache_mutex_);
      if (signatures_.contains(fingerprint)) return true;
    }
    if (!crypto::verify_sig(public_key, message, signature)) return false;
    std::lock_guard guard(cache_mutex_);
    if (signatures_.size() >= kSignatureCacheLimit) signatures_.clear();
    signatures_.insert(fingerprint);
    return true;
  }

  bool has_org(const std::string &name) const
  {
    std::shared_lock lock(mutex_);
    return orgs_.contains(name);
  }

  bool has_local_id(const std::string &org, const std::string &local_id) const
  {
    std::shared_lock lock(mutex_);
    auto it = orgs_.find(org);
    return it != orgs_.end() && it->second.registry().contains(local_id);
  }

  std::vector<std::string> org_names() const
  {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto &[name, _] : orgs_) out.push_back(name);
    return out;
  }

  nlohmann::json to_json() const
  {
    std::shared_lock lock(mutex_);
    auto out = nlohmann::json::array();
    for (const auto &[name, org] : orgs_)
    {
      auto certs = nlohmann::json::array();
      for (const auto &[_, c] : org.registry()) certs.push_back(hailchain::to_json(c));
      out.push_back({{"msp_id", name}, {"root_public_key", to_hex(org.root_public_key())}, {"certificates", certs}});
    }
    return out;
  }

private:
  Organization &mutable_org(const std::string &name)
  {
    auto it = orgs_.find(name);
    if (it == orgs_.end()) throw IdentityError(IdentityErrc::UnknownOrg, "unknown organization '" + name + "'");
    return it->second;
  }

  mutable std::shared_mutex mutex_;
  std::map<std::string, Organization> orgs_;
  mutable std::mutex cache_mutex_;
  mutable std::set<Digest> verified_;
  mutable std::set<Digest> signatures_;
  static constexpr std::size_t kSignatureCacheLimit = 1 << 20;
};

}  // namespace hailchain
