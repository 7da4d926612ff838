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

#include <sodium.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace hailchain {

using Digest = std::array<std::uint8_t, 32>;

inline constexpr Digest kZeroDigest{};

namespace crypto {

inline void ensure_init()
{
  static const bool ok = [] { return sodium_init() >= 0; }();
  if (!ok) throw std::runtime_error("libsodium initialisation failed");
}

class Sha256
{
public:
  Sha256()
  {
    ensure_init();
    crypto_hash_sha256_init(&state_);
  }

  Sha256 &update(ByteView data)
  {
    crypto_hash_sha256_update(&state_, data.data(), data.size());
    return *this;
  }

  Digest finish()
  {
    Digest out{};
    crypto_hash_sha256_final(&state_, out.data());
    return out;
  }

private:
  crypto_hash_sha256_state state_{};
};

inline Digest sha256(ByteView data)
{
  return Sha256{}.update(data).finish();
}

inline Digest sha256(std::string_view data) { return sha256(as_bytes(data)); }

using PublicKey = std::array<std::uint8_t, crypto_sign_PUBLICKEYBYTES>;
using Signature = std::array<std::uint8_t, crypto_sign_BYTES>;

/// Ed25519 secret key. Holds the 32-byte seed and the expanded key; never
/// serialised into ledger structures.
class SecretKey
{
public:
  SecretKey() = default;
  explicit SecretKey(const std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> &sk) : sk_(sk) {}

  ~SecretKey() { sodium_memzero(sk_.data(), sk_.size()); }
  SecretKey(const SecretKey &) = default;
  SecretKey &operator=(const SecretKey &) = default;

  const std::uint8_t *data() const { return sk_.data(); }

  std::array<std::uint8_t, crypto_sign_SEEDBYTES> seed() const
  {
    std::array<std::uint8_t, crypto_sign_SEEDBYTES> s{};
    crypto_sign_ed25519_sk_to_seed(s.data(), sk_.data());
    return s;
  }

private:
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk_{};
};

struct KeyPair
{
  PublicKey public_key{};
  SecretKey secret_key;
};

inline KeyPair keypair_from_seed(const std::array<std::uint8_t, crypto_sign_SEEDBYTES> &seed)
{
  ensure_init();
  KeyPair kp;
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
  crypto_sign_seed_keypair(kp.public_key.data(), sk.data(), seed.data());
  kp.secret_key = SecretKey(sk);
  sodium_memzero(sk.data(), sk.size());
  return kp;
}

/// Deterministic keypair derived from a seeded engine; simulation runs use
/// this so identical seeds produce identical certificates.
template <typename Engine>
KeyPair keypair_from_engine(Engine &rng)
{
  std::array<std::uint8_t, crypto_sign_SEEDBYTES> seed{};
  std::uniform_int_distribution<int> byte(0, 255);
  std::generate(seed.begin(), seed.end(), [&] { return static_cast<std::uint8_t>(byte(rng)); });
  return keypair_from_seed(seed);
}

inline KeyPair random_keypair()
{
  ensure_init();
  std::array<std::uint8_t, crypto_sign_SEEDBYTES> seed{};
  randombytes_buf(seed.data(), seed.size());
  return keypair_from_seed(seed);
}

inline Signature sign(const SecretKey &secret, ByteView message)
{
  ensure_init();
  Signature sig{};
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret.data());
  return sig;
}

inline bool verify_sig(const PublicKey &pk, ByteView message, const Signature &sig)
{
  ensure_init();
  return crypto_sign_verify_detached(sig.data(), message.data(), message.size(), pk.data()) == 0;
}

inline void random_fill(std::span<std::uint8_t> out)
{
  ensure_init();
  randombytes_buf(out.data(), out.size());
}

}  // namespace crypto
}  // namespace hailchain
