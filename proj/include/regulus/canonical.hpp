#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <string>

#include "regulus/crypto.hpp"
#include "regulus/errors.hpp"

// Canonical key-value serialization. Record payloads are byte strings with a
// single admissible encoding, so identical content always hashes to the same
// record id: keys strictly increasing lexicographically, every key and value
// prefixed with a little-endian u32 length.

namespace regulus::canonical {

using crypto::Byte;
using crypto::Bytes;

// std::map keeps keys sorted, which is exactly the canonical key order.
using KvMap = std::map<std::string, std::string>;

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<Byte>(v >> (8 * i)));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<Byte>(v >> (8 * i)));
}

inline void put_i64(Bytes& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }

inline void put_string(Bytes& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

inline Bytes encode(const KvMap& kv) {
  Bytes out;
  for (const auto& [k, v] : kv) {
    put_string(out, k);
    put_string(out, v);
  }
  return out;
}

// Strict decoder: rejects trailing bytes, truncated fields, and keys that are
// not strictly increasing (the non-canonical orderings).
inline KvMap decode(std::span<const Byte> data) {
  KvMap kv;
  std::size_t pos = 0;
  auto read_u32 = [&]() -> std::uint32_t {
    if (pos + 4 > data.size()) fail(Errc::malformed_payload, "truncated length prefix");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  };
  auto read_string = [&]() -> std::string {
    std::uint32_t len = read_u32();
    if (pos + len > data.size()) fail(Errc::malformed_payload, "truncated string");
    std::string s(reinterpret_cast<const char*>(data.data() + pos), len);
    pos += len;
    return s;
  };
  std::string prev;
  bool first = true;
  while (pos < data.size()) {
    std::string k = read_string();
    std::string v = read_string();
    if (!first && k <= prev) fail(Errc::malformed_payload, "keys not strictly increasing");
    prev = k;
    first = false;
    kv.emplace(std::move(k), std::move(v));
  }
  return kv;
}

inline bool is_canonical(std::span<const Byte> data) {
  try {
    decode(data);
    return true;
  } catch (const Error&) {
    return false;
  }
}

// Shortest round-trip decimal form, so payloads carrying reals stay stable
// across export/import cycles.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    fail(Errc::parse_error, "not a decimal number: " + s);
  }
  return v;
}

inline std::int64_t parse_i64(const std::string& s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    fail(Errc::parse_error, "not an integer: " + s);
  }
  return v;
}

}  // namespace regulus::canonical
