#pragma once

#include <map>
#include <span>
#include <string>

#include "gridstore/sha256.hpp"

namespace gridstore {

using PartyId = std::string;
using Signature = Digest;

/// Deterministic signature scheme over 32-byte keys for the simulation: the
/// registry plays the role of the PKI, issuing per-party keys from its seed
/// and answering verification queries. Not a real asymmetric scheme; the
/// closed world of the simulator is the trust boundary, and adversarial code
/// paths only ever sign with keys of corrupted parties.
class KeyRegistry {
 public:
  explicit KeyRegistry(std::uint64_t seed = 0) : seed_(seed) {}

  void ensure(const PartyId& party) {
    if (keys_.contains(party)) return;
    ByteWriter w;
    w.u64(seed_);
    w.str(party);
    Digest sk = sha256(w.data());
    keys_.emplace(party, sk);
  }

  Digest public_key(const PartyId& party) const {
    return tagged_hash(domain::kPublicKey, key_span(secret(party)));
  }

  Signature sign(const PartyId& party, std::span<const std::uint8_t> msg) const {
    const Digest& sk = secret(party);
    Sha256 h;
    h.update_byte(domain::kSignature);
    h.update(key_span(sk));
    h.update(msg);
    return h.finish();
  }

  bool verify(const PartyId& party, std::span<const std::uint8_t> msg,
              const Signature& sig) const {
    auto it = keys_.find(party);
    if (it == keys_.end()) return false;
    Sha256 h;
    h.update_byte(domain::kSignature);
    h.update(key_span(it->second));
    h.update(msg);
    return h.finish() == sig;
  }

 private:
  static std::span<const std::uint8_t> key_span(const Digest& d) {
    return std::span<const std::uint8_t>(d.data(), d.size());
  }
  const Digest& secret(const PartyId& party) const {
    auto it = keys_.find(party);
    if (it == keys_.end()) throw std::runtime_error("no key issued for party: " + party);
    return it->second;
  }

  std::uint64_t seed_;
  std::map<PartyId, Digest> keys_;
};

// Preimages for signatures that travel inside certificates and therefore are
// verified by parties other than the message recipient.

inline Bytes store_ack_preimage(const Digest& blob_id, std::uint64_t epoch) {
  ByteWriter w;
  w.u8(domain::kStoreAck);
  w.raw(std::span<const std::uint8_t>(blob_id.data(), blob_id.size()));
  w.u64(epoch);
  return w.take();
}

inline Bytes attestation_preimage(const Digest& blob_id) {
  ByteWriter w;
  w.u8(domain::kAttestation);
  w.raw(std::span<const std::uint8_t>(blob_id.data(), blob_id.size()));
  return w.take();
}

inline Bytes challenge_confirm_preimage(std::uint64_t epoch, const PartyId& prover,
                                        const Digest& set_digest) {
  ByteWriter w;
  w.u8(domain::kChallengeConfirm);
  w.u64(epoch);
  w.str(prover);
  w.raw(std::span<const std::uint8_t>(set_digest.data(), set_digest.size()));
  return w.take();
}

inline Bytes ready_signal_preimage(std::uint64_t epoch, const PartyId& node) {
  ByteWriter w;
  w.u8(domain::kReadySignal);
  w.u64(epoch);
  w.str(node);
  return w.take();
}

}  // namespace gridstore
