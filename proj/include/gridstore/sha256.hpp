#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>

#include "gridstore/serialize.hpp"

namespace gridstore {

using Digest = std::array<std::uint8_t, 32>;

/// Incremental SHA-256 (FIPS 180-2). Self-contained so the library stays
/// header-only; checked against the standard test vectors.
class Sha256 {
 public:
  Sha256() { reset(); }

  void reset() {
    state_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
              0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
    total_ = 0;
    buffered_ = 0;
  }

  Sha256& update(std::span<const std::uint8_t> data) {
    total_ += data.size();
    std::size_t off = 0;
    if (buffered_ > 0) {
      std::size_t need = 64 - buffered_;
      std::size_t take = data.size() < need ? data.size() : need;
      std::memcpy(buf_.data() + buffered_, data.data(), take);
      buffered_ += take;
      off += take;
      if (buffered_ == 64) {
        compress(buf_.data());
        buffered_ = 0;
      }
    }
    while (data.size() - off >= 64) {
      compress(data.data() + off);
      off += 64;
    }
    if (off < data.size()) {
      buffered_ = data.size() - off;
      std::memcpy(buf_.data(), data.data() + off, buffered_);
    }
    return *this;
  }

  Sha256& update_byte(std::uint8_t b) { return update(std::span<const std::uint8_t>(&b, 1)); }

  Digest finish() {
    std::uint64_t bits = total_ * 8;
    std::uint8_t pad = 0x80;
    update(std::span<const std::uint8_t>(&pad, 1));
    static constexpr std::uint8_t kZero[64] = {};
    while (buffered_ != 56) update(std::span<const std::uint8_t>(kZero, (buffered_ < 56 ? 56 : 120) - buffered_));
    std::uint8_t len[8];
    for (int i = 0; i < 8; ++i) len[i] = static_cast<std::uint8_t>(bits >> (56 - 8 * i));
    update(std::span<const std::uint8_t>(len, 8));
    Digest out;
    for (int i = 0; i < 8; ++i) {
      out[4 * i] = static_cast<std::uint8_t>(state_[i] >> 24);
      out[4 * i + 1] = static_cast<std::uint8_t>(state_[i] >> 16);
      out[4 * i + 2] = static_cast<std::uint8_t>(state_[i] >> 8);
      out[4 * i + 3] = static_cast<std::uint8_t>(state_[i]);
    }
    reset();
    return out;
  }

 private:
  static std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

  void compress(const std::uint8_t* p) {
    static constexpr std::uint32_t K[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
        0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
        0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
        0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
        0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
        0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
        0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
        0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
             (std::uint32_t(p[4 * i + 2]) << 8) | p[4 * i + 3];
    for (int i = 16; i < 64; ++i) {
      std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    auto [a, b, c, d, e, f, g, h] = std::tuple{state_[0], state_[1], state_[2], state_[3],
                                               state_[4], state_[5], state_[6], state_[7]};
    for (int i = 0; i < 64; ++i) {
      std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      std::uint32_t ch = (e & f) ^ (~e & g);
      std::uint32_t t1 = h + s1 + ch + K[i] + w[i];
      std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      std::uint32_t t2 = s0 + maj;
      h = g; g = f; f = e; e = d + t1;
      d = c; c = b; b = a; a = t1 + t2;
    }
    state_[0] += a; state_[1] += b; state_[2] += c; state_[3] += d;
    state_[4] += e; state_[5] += f; state_[6] += g; state_[7] += h;
  }

  std::array<std::uint32_t, 8> state_;
  std::array<std::uint8_t, 64> buf_;
  std::uint64_t total_ = 0;
  std::size_t buffered_ = 0;
};

inline Digest sha256(std::span<const std::uint8_t> data) {
  Sha256 h;
  h.update(data);
  return h.finish();
}

inline Digest sha256(const Bytes& data) { return sha256(std::span<const std::uint8_t>(data)); }

// Domain-separation prefixes for every hash use in the protocol. Keeping the
// registry in one place makes the preimage layouts auditable.
namespace domain {
inline constexpr std::uint8_t kMerkleLeaf = 0x00;
inline constexpr std::uint8_t kMerkleNode = 0x01;
inline constexpr std::uint8_t kBlobId = 0x02;
inline constexpr std::uint8_t kStoreAck = 0x03;
inline constexpr std::uint8_t kAttestation = 0x04;
inline constexpr std::uint8_t kPublicKey = 0x05;
inline constexpr std::uint8_t kSignature = 0x06;
inline constexpr std::uint8_t kChannel = 0x07;
inline constexpr std::uint8_t kChallengeConfirm = 0x08;
inline constexpr std::uint8_t kCoin = 0x09;
inline constexpr std::uint8_t kPrf = 0x0a;
inline constexpr std::uint8_t kReadySignal = 0x0b;
}  // namespace domain

inline Digest tagged_hash(std::uint8_t tag, std::span<const std::uint8_t> data) {
  Sha256 h;
  h.update_byte(tag);
  h.update(data);
  return h.finish();
}

inline std::string digest_hex(const Digest& d) {
  return to_hex(std::span<const std::uint8_t>(d.data(), d.size()));
}

inline Digest digest_from_hex(std::string_view hex) {
  Bytes b = from_hex(hex);
  if (b.size() != 32) throw DecodeError("digest must be 32 bytes");
  Digest d;
  std::memcpy(d.data(), b.data(), 32);
  return d;
}

}  // namespace gridstore
