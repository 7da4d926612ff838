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

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hailchain {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s)
{
  return {reinterpret_cast<const std::uint8_t *>(s.data()), s.size()};
}

inline Bytes to_bytes(std::string_view s)
{
  auto v = as_bytes(s);
  return {v.begin(), v.end()};
}

inline std::string to_string(ByteView b)
{
  return {reinterpret_cast<const char *>(b.data()), b.size()};
}

inline std::string to_hex(ByteView b)
{
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (auto c : b)
  {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0x0f]);
  }
  return out;
}

inline Bytes from_hex(std::string_view hex)
{
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0)
  {
    throw std::invalid_argument("odd-length hex string");
  }
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
  {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0)
    {
      throw std::invalid_argument("invalid hex digit");
    }
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

class DecodeError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Canonical byte layout shared by every hashed or signed structure:
/// integers are fixed-width big-endian, variable-length fields carry a
/// u32 big-endian length prefix, fields appear in declaration order.
class Writer
{
public:
  Writer &u8(std::uint8_t v)
  {
    buf_.push_back(v);
    return *this;
  }

  Writer &u32(std::uint32_t v)
  {
    for (int shift = 24; shift >= 0; shift -= 8)
    {
      buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    }
    return *this;
  }

  Writer &u64(std::uint64_t v)
  {
    for (int shift = 56; shift >= 0; shift -= 8)
    {
      buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    }
    return *this;
  }

  Writer &boolean(bool v) { return u8(v ? 1 : 0); }

  Writer &bytes(ByteView b)
  {
    u32(static_cast<std::uint32_t>(b.size()));
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
  }

  Writer &str(std::string_view s) { return bytes(as_bytes(s)); }

  template <std::size_t N>
  Writer &fixed(const std::array<std::uint8_t, N> &a)
  {
    buf_.insert(buf_.end(), a.begin(), a.end());
    return *this;
  }

  /// Raw append with no prefix; used for nesting already-encoded structures.
  Writer &raw(ByteView b)
  {
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
  }

  const Bytes &data() const & { return buf_; }
  Bytes take() && { return std::move(buf_); }

private:
  Bytes buf_;
};

class Reader
{
public:
  explicit Reader(ByteView data) : data_(data) {}

  std::uint8_t u8()
  {
    need(1);
    return data_[pos_++];
  }

  std::uint32_t u32()
  {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_++];
    return v;
  }

  std::uint64_t u64()
  {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | data_[pos_++];
    return v;
  }

  bool boolean()
  {
    auto v = u8();
    if (v > 1) throw DecodeError("non-canonical boolean");
    return v == 1;
  }

  Bytes bytes()
  {
    auto n = u32();
    need(n);
    Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
              data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

  std::string str()
  {
    auto n = u32();
    need(n);
    std::string out(reinterpret_cast<const char *>(data_.data() + pos_), n);
    pos_ += n;
    return out;
  }

  template <std::size_t N>
  std::array<std::uint8_t, N> fixed()
  {
    need(N);
    std::array<std::uint8_t, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = data_[pos_++];
    return out;
  }

  /// Element count for a list; bounded by the bytes left so corrupt input
  /// cannot trigger huge allocations.
  std::uint32_t count()
  {
    auto n = u32();
    if (n > remaining()) throw DecodeError("list count exceeds input");
    return n;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

  void expect_done() const
  {
    if (!done()) throw DecodeError("trailing bytes");
  }

private:
  void need(std::size_t n) const
  {
    if (data_.size() - pos_ < n) throw DecodeError("truncated input");
  }

  ByteView data_;
  std::size_t pos_ = 0;
};

}  // namespace hailchain
