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

#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace hailchain {

struct GeoPoint
{
  double lat = 0;
  double lon = 0;

  static bool in_range(double lat, double lon)
  {
    return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
  }

  bool operator==(const GeoPoint &) const = default;
};

namespace detail {

// [-]digits[.digits{1,7}]
inline std::optional<double> parse_coordinate(std::string_view s)
{
  std::size_t i = 0;
  if (i < s.size() && s[i] == '-') ++i;
  std::size_t int_digits = 0;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i, ++int_digits;
  if (int_digits == 0 || int_digits > 3) return std::nullopt;
  if (i < s.size() && s[i] == '.')
  {
    ++i;
    std::size_t frac = 0;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i, ++frac;
    if (frac == 0 || frac > 7) return std::nullopt;
  }
  if (i != s.size()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string format_coordinate(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.7f", v);
  std::string s(buf);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

}  // namespace detail

/// Wire form "lat,lon", each with at most seven fractional digits.
inline std::optional<GeoPoint> parse_geopoint(std::string_view s)
{
  auto comma = s.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  auto lat = detail::parse_coordinate(s.substr(0, comma));
  auto lon = detail::parse_coordinate(s.substr(comma + 1));
  if (!lat || !lon || !GeoPoint::in_range(*lat, *lon)) return std::nullopt;
  return GeoPoint{*lat, *lon};
}

inline std::string format_geopoint(const GeoPoint &p)
{
  return detail::format_coordinate(p.lat) + "," + detail::format_coordinate(p.lon);
}

inline constexpr double kEarthRadiusMeters = 6371008.8;

/// Great-circle distance in meters.
inline double haversine_meters(const GeoPoint &a, const GeoPoint &b)
{
  constexpr double deg = 3.14159265358979323846 / 180.0;
  double dlat = (b.lat - a.lat) * deg;
  double dlon = (b.lon - a.lon) * deg;
  double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
             std::cos(a.lat * deg) * std::cos(b.lat * deg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2 * kEarthRadiusMeters * std::asin(std::sqrt(std::fmin(1.0, h)));
}

}  // namespace hailchain
