#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gridstore/commitments.hpp"
#include "gridstore/signing.hpp"

namespace gridstore {

// End-of-epoch storage challenges. The shared coin is a seeded mock standing
// in for a 2f+1-threshold DKG coin: its value is fixed by (coin_seed, epoch)
// and becomes usable once acknowledgments cover 2f+1 shards, so replays are
// bit-identical.

inline Digest challenge_coin(std::uint64_t coin_seed, std::uint64_t epoch) {
  ByteWriter w;
  w.u64(coin_seed);
  w.u64(epoch);
  return tagged_hash(domain::kCoin, w.data());
}

namespace detail {

/// Unbiased bounded draws from a keyed-hash stream over (coin, node, counter).
class PrfStream {
 public:
  PrfStream(const Digest& coin, const PartyId& node) : coin_(coin), node_(node) {}

  std::uint64_t next_below(std::uint64_t bound) {
    // rejection sampling keeps the draw uniform
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    while (true) {
      std::uint64_t v = next_u64();
      if (v < limit) return v % bound;
    }
  }

 private:
  std::uint64_t next_u64() {
    if (offset_ + 8 > block_.size()) {
      ByteWriter w;
      w.raw(std::span<const std::uint8_t>(coin_.data(), coin_.size()));
      w.str(node_);
      w.u64(counter_++);
      block_ = tagged_hash(domain::kPrf, w.data());
      offset_ = 0;
    }
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | block_[offset_ + i];
    offset_ += 8;
    return v;
  }

  Digest coin_;
  PartyId node_;
  std::uint64_t counter_ = 0;
  Digest block_{};
  std::size_t offset_ = 32;  // force a refill on first use
};

}  // namespace detail

/// PRF sampling without replacement from the certified-blob universe. The
/// universe must already be sorted (chain queries return it that way) so all
/// parties derive the same selection. k >= universe size degenerates to the
/// full challenge protocol.
inline std::vector<BlobId> select_challenged_blobs(const Digest& coin, const PartyId& node,
                                                   std::uint64_t k,
                                                   const std::vector<BlobId>& certified) {
  if (certified.empty()) return {};
  if (k == 0 || k >= certified.size()) return certified;
  detail::PrfStream prf(coin, node);
  std::vector<std::uint32_t> indices(certified.size());
  for (std::uint32_t i = 0; i < indices.size(); ++i) indices[i] = i;
  std::vector<BlobId> out;
  out.reserve(k);
  std::uint64_t remaining = certified.size();
  for (std::uint64_t taken = 0; taken < k; ++taken, --remaining) {
    std::uint64_t pick = prf.next_below(remaining);
    out.push_back(certified[indices[pick]]);
    indices[pick] = indices[remaining - 1];
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Binds the whole selection context; confirmation signatures cover it, so a
/// prover cannot substitute a friendlier blob set.
inline Digest challenge_set_digest(const Digest& coin, std::uint64_t epoch, std::uint64_t k,
                                   const std::vector<BlobId>& certified) {
  Sha256 h;
  h.update_byte(domain::kPrf);
  h.update(std::span<const std::uint8_t>(coin.data(), coin.size()));
  ByteWriter w;
  w.u64(epoch);
  w.u64(k);
  w.u32(static_cast<std::uint32_t>(certified.size()));
  h.update(w.data());
  for (const auto& id : certified) h.update(std::span<const std::uint8_t>(id.data(), id.size()));
  return h.finish();
}

/// Probability that a node holding `held_fraction` of blobs answers a k-blob
/// challenge, under independent sampling: p^k.
inline long double challenge_pass_probability(long double held_fraction, std::uint64_t k) {
  if (held_fraction <= 0.0L) return k == 0 ? 1.0L : 0.0L;
  return std::exp(static_cast<long double>(k) * std::log(held_fraction));
}

/// Same quantity by exponentiation-by-squaring; kept as an independent route
/// for cross-checking the probability claims.
inline long double pow_by_squaring(long double base, std::uint64_t exponent) {
  long double acc = 1.0L;
  while (exponent > 0) {
    if (exponent & 1) acc *= base;
    base *= base;
    exponent >>= 1;
  }
  return acc;
}

struct ChallengeRatePolicy {
  long double failure_threshold = 0.01L;  // read-failure rate that triggers escalation
  std::uint64_t full_set_size = 0;        // cap: the full challenge protocol
};

/// Monotone non-decreasing escalation of the sampled-challenge count: doubles
/// above the failure threshold, capped at the full set.
inline std::uint64_t adapt_challenge_rate(std::uint64_t k, long double read_failure_rate,
                                          const ChallengeRatePolicy& policy) {
  if (read_failure_rate <= 0.0L || read_failure_rate < policy.failure_threshold) return k;
  std::uint64_t doubled = k >= (UINT64_MAX >> 1) ? UINT64_MAX : 2 * k;
  if (policy.full_set_size > 0 && doubled > policy.full_set_size) return policy.full_set_size;
  return doubled;
}

}  // namespace gridstore
