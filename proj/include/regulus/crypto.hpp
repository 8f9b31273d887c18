#pragma once

#include <sodium.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "regulus/errors.hpp"

// Thin wrappers over libsodium: SHA-256 for content hashes and Ed25519 for
// detached record signatures. Also the seed-splitting helper every
// deterministic subsystem uses to derive independent RNG streams.

namespace regulus::crypto {

using Byte = unsigned char;
using Bytes = std::vector<Byte>;
using Hash32 = std::array<Byte, 32>;

inline constexpr std::size_t kSignatureBytes = crypto_sign_BYTES;        // 64
inline constexpr std::size_t kPublicKeyBytes = crypto_sign_PUBLICKEYBYTES;  // 32
inline constexpr std::size_t kSeedBytes = crypto_sign_SEEDBYTES;         // 32

using Signature = std::array<Byte, kSignatureBytes>;
using PublicKey = std::array<Byte, kPublicKeyBytes>;
using SecretKey = std::array<Byte, crypto_sign_SECRETKEYBYTES>;

inline void init() {
  static const int rc = sodium_init();
  if (rc < 0) fail(Errc::io_error, "libsodium init failed");
}

inline Hash32 sha256(std::span<const Byte> data) {
  init();
  Hash32 out{};
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

struct KeyPair {
  PublicKey public_key{};
  SecretKey secret_key{};

  // Deterministic keypair from a 32-byte seed.
  static KeyPair from_seed(const std::array<Byte, kSeedBytes>& seed) {
    init();
    KeyPair kp;
    crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), seed.data());
    return kp;
  }

  static KeyPair from_seed(std::uint64_t seed);
};

inline Signature sign(std::span<const Byte> message, const SecretKey& sk) {
  init();
  Signature sig{};
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), sk.data());
  return sig;
}

inline bool verify(std::span<const Byte> message, const Signature& sig, const PublicKey& pk) {
  init();
  return crypto_sign_verify_detached(sig.data(), message.data(), message.size(), pk.data()) == 0;
}

// --- hex ---

inline std::string to_hex(std::span<const Byte> data) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (Byte b : data) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0f]);
  }
  return out;
}

inline std::string to_hex(const Hash32& h) { return to_hex(std::span<const Byte>(h.data(), h.size())); }

inline Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) fail(Errc::parse_error, "odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) fail(Errc::parse_error, "non-hex character");
    out[i] = static_cast<Byte>((hi << 4) | lo);
  }
  return out;
}

template <std::size_t N>
inline std::array<Byte, N> array_from_hex(std::string_view hex) {
  Bytes raw = from_hex(hex);
  if (raw.size() != N) fail(Errc::parse_error, "hex string has wrong length");
  std::array<Byte, N> out{};
  std::memcpy(out.data(), raw.data(), N);
  return out;
}

// --- seed derivation ---

// splitmix64: the usual finalizer, used to fan one master seed out into
// decorrelated per-subsystem streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 0x51ed2701a2b9e473ULL));
}

inline KeyPair KeyPair::from_seed(std::uint64_t seed) {
  std::array<Byte, kSeedBytes> raw{};
  for (std::size_t i = 0; i < kSeedBytes / 8; ++i) {
    std::uint64_t w = splitmix64(seed + i);
    for (std::size_t j = 0; j < 8; ++j) raw[i * 8 + j] = static_cast<Byte>(w >> (8 * j));
  }
  return from_seed(raw);
}

}  // namespace regulus::crypto
