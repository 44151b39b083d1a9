#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gridstore/commitments.hpp"
#include "gridstore/signing.hpp"

namespace gridstore {

// Mock control plane: a totally ordered, non-censoring log of control
// transactions. State is a pure fold over the event log, so exporting the
// log and replaying it reproduces the state bit-for-bit.

using Epoch = std::uint64_t;

struct Committee {
  Epoch epoch = 0;
  std::vector<PartyId> assignment;  // shard index -> owning node

  std::uint32_t n_shards() const { return static_cast<std::uint32_t>(assignment.size()); }
  std::uint32_t fault_bound() const { return (n_shards() - 1) / 3; }

  std::set<PartyId> members() const {
    return std::set<PartyId>(assignment.begin(), assignment.end());
  }
  bool has_member(const PartyId& p) const {
    return std::find(assignment.begin(), assignment.end(), p) != assignment.end();
  }
  std::vector<std::uint32_t> shards_of(const PartyId& p) const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == p) out.push_back(i);
    return out;
  }
  /// Quorum arithmetic is always in shards.
  std::uint32_t weight_of(const std::set<PartyId>& parties) const {
    std::uint32_t w = 0;
    for (const auto& p : assignment)
      if (parties.contains(p)) ++w;
    return w;
  }

  Bytes serialize() const {
    ByteWriter w;
    w.u64(epoch);
    w.u32(n_shards());
    for (const auto& p : assignment) w.str(p);
    return w.take();
  }
  static Committee deserialize(ByteReader& r) {
    Committee c;
    c.epoch = r.u64();
    auto n = r.u32();
    if (n == 0 || n > gf16::kMaxCodeLength) throw DecodeError("bad committee size");
    c.assignment.resize(n);
    for (auto& p : c.assignment) p = r.str();
    return c;
  }

  bool operator==(const Committee&) const = default;
};

struct Certificate {
  BlobId blob_id{};
  Epoch epoch = 0;
  std::vector<std::pair<PartyId, Signature>> signatures;

  Bytes serialize() const {
    ByteWriter w;
    w.raw(std::span<const std::uint8_t>(blob_id.data(), blob_id.size()));
    w.u64(epoch);
    w.u32(static_cast<std::uint32_t>(signatures.size()));
    for (const auto& [p, s] : signatures) {
      w.str(p);
      w.raw(std::span<const std::uint8_t>(s.data(), s.size()));
    }
    return w.take();
  }
  static Certificate deserialize(ByteReader& r) {
    Certificate c;
    auto id = r.bytes_fixed(32);
    std::copy(id.begin(), id.end(), c.blob_id.begin());
    c.epoch = r.u64();
    auto n = r.u32();
    if (n > gf16::kMaxCodeLength) throw DecodeError("oversized certificate");
    c.signatures.resize(n);
    for (auto& [p, s] : c.signatures) {
      p = r.str();
      auto sig = r.bytes_fixed(32);
      std::copy(sig.begin(), sig.end(), s.begin());
    }
    return c;
  }

  bool operator==(const Certificate&) const = default;
};

struct ChallengeCertificate {
  PartyId prover;
  Epoch epoch = 0;
  Digest set_digest{};  // binds the challenged-blob selection the confirmers checked
  std::vector<std::pair<PartyId, Signature>> confirmations;

  Bytes serialize() const {
    ByteWriter w;
    w.str(prover);
    w.u64(epoch);
    w.raw(std::span<const std::uint8_t>(set_digest.data(), set_digest.size()));
    w.u32(static_cast<std::uint32_t>(confirmations.size()));
    for (const auto& [p, s] : confirmations) {
      w.str(p);
      w.raw(std::span<const std::uint8_t>(s.data(), s.size()));
    }
    return w.take();
  }
  static ChallengeCertificate deserialize(ByteReader& r) {
    ChallengeCertificate c;
    c.prover = r.str();
    c.epoch = r.u64();
    auto d = r.bytes_fixed(32);
    std::copy(d.begin(), d.end(), c.set_digest.begin());
    auto n = r.u32();
    if (n > gf16::kMaxCodeLength) throw DecodeError("oversized challenge certificate");
    c.confirmations.resize(n);
    for (auto& [p, s] : c.confirmations) {
      p = r.str();
      auto sig = r.bytes_fixed(32);
      std::copy(sig.begin(), sig.end(), s.begin());
    }
    return c;
  }

  bool operator==(const ChallengeCertificate&) const = default;
};

enum class ChainEventKind : std::uint8_t {
  kRegistered = 0,
  kCertified = 1,
  kAttested = 2,
  kInvalidated = 3,
  kReconfigStarted = 4,
  kReadySignaled = 5,
  kEpochCompleted = 6,
  kChallengeStarted = 7,
  kChallengeCertified = 8,
  kChallengeEnded = 9,
};

inline const char* chain_event_name(ChainEventKind k) {
  switch (k) {
    case ChainEventKind::kRegistered: return "registered";
    case ChainEventKind::kCertified: return "certified";
    case ChainEventKind::kAttested: return "attested";
    case ChainEventKind::kInvalidated: return "invalidated";
    case ChainEventKind::kReconfigStarted: return "reconfig-started";
    case ChainEventKind::kReadySignaled: return "ready-signaled";
    case ChainEventKind::kEpochCompleted: return "epoch-completed";
    case ChainEventKind::kChallengeStarted: return "challenge-started";
    case ChainEventKind::kChallengeCertified: return "challenge-certified";
    case ChainEventKind::kChallengeEnded: return "challenge-ended";
  }
  return "unknown";
}

struct ChainEvent {
  std::uint64_t seq = 0;
  ChainEventKind kind{};
  Bytes payload;  // canonical serialization of the event body

  bool operator==(const ChainEvent&) const = default;
};

struct BlobRegistration {
  BlobId id{};
  std::uint64_t size = 0;
  Epoch expiry_epoch = 0;
  Epoch registered_epoch = 0;  // the committee epoch writes were targeted at

  bool operator==(const BlobRegistration&) const = default;
};

enum class EpochPhase : std::uint8_t { kSteady = 0, kReconfiguring = 1, kChallenge = 2 };

/// Outcome of submitting a control transaction.
struct TxResult {
  bool ok = false;
  std::string error;

  static TxResult success() { return {true, {}}; }
  static TxResult fail(std::string why) { return {false, std::move(why)}; }
};

class Chain {
 public:
  Chain(Committee genesis, const KeyRegistry* registry)
      : registry_(registry), current_epoch_(genesis.epoch) {
    if (genesis.epoch == 0) throw std::runtime_error("genesis epoch must be positive");
    committees_.emplace(genesis.epoch, std::move(genesis));
  }

  // -- transactions ---------------------------------------------------------

  TxResult reserve_blob(const BlobId& id, std::uint64_t size, Epoch expiry_epoch) {
    if (size == 0) return TxResult::fail("size must be positive");
    if (expiry_epoch < current_epoch_) return TxResult::fail("expiry is in the past");
    Epoch target = write_target_epoch();
    auto it = registrations_.find(id);
    if (it != registrations_.end()) {
      const auto& r = it->second;
      if (r.size == size && r.expiry_epoch == expiry_epoch)
        return TxResult::success();  // idempotent re-registration
      return TxResult::fail("conflicting registration for blob id");
    }
    ByteWriter w;
    w.raw(std::span<const std::uint8_t>(id.data(), id.size()));
    w.u64(size);
    w.u64(expiry_epoch);
    w.u64(target);
    append(ChainEventKind::kRegistered, w.take());
    return TxResult::success();
  }

  TxResult store_certificate(const Certificate& cert) {
    auto reg = registrations_.find(cert.blob_id);
    if (reg == registrations_.end()) return TxResult::fail("blob id not registered");
    if (certificates_.contains(cert.blob_id)) return TxResult::fail("duplicate certificate");
    auto committee = committees_.find(cert.epoch);
    if (committee == committees_.end() || !epoch_live(cert.epoch))
      return TxResult::fail("certificate epoch has no live committee");
    std::set<PartyId> signers;
    Bytes preimage = store_ack_preimage(cert.blob_id, cert.epoch);
    for (const auto& [party, sig] : cert.signatures) {
      if (!committee->second.has_member(party)) return TxResult::fail("signer outside committee");
      if (!registry_->verify(party, preimage, sig)) return TxResult::fail("invalid signature");
      signers.insert(party);  // duplicates collapse here
    }
    std::uint32_t quorum = 2 * committee->second.fault_bound() + 1;
    if (committee->second.weight_of(signers) < quorum)
      return TxResult::fail("certificate below 2f+1 shard quorum");
    append(ChainEventKind::kCertified, cert.serialize());
    return TxResult::success();
  }

  TxResult attest_inconsistency(const BlobId& id, const PartyId& node, const Signature& sig) {
    if (!certificates_.contains(id)) return TxResult::fail("blob has no availability certificate");
    if (!any_live_committee_member(node)) return TxResult::fail("attester outside committee");
    if (!registry_->verify(node, attestation_preimage(id), sig))
      return TxResult::fail("invalid attestation signature");
    if (attestations_[id].contains(node)) return TxResult::success();  // counted once
    ByteWriter w;
    w.raw(std::span<const std::uint8_t>(id.data(), id.size()));
    w.str(node);
    append(ChainEventKind::kAttested, w.take());
    maybe_invalidate(id);
    return TxResult::success();
  }

  TxResult begin_reconfiguration(Committee next) {
    if (phase_ != EpochPhase::kSteady) return TxResult::fail("reconfiguration needs steady phase");
    if (next.epoch != current_epoch_ + 1) return TxResult::fail("next committee epoch must be e+1");
    if (next.n_shards() != committee(current_epoch_).n_shards())
      return TxResult::fail("shard count must be stable across epochs");
    if (committees_.contains(next.epoch)) return TxResult::fail("duplicate reconfiguration start");
    append(ChainEventKind::kReconfigStarted, next.serialize());
    return TxResult::success();
  }

  TxResult signal_ready(const PartyId& node, const Signature& sig) {
    if (phase_ != EpochPhase::kReconfiguring) return TxResult::fail("no reconfiguration running");
    Epoch next = current_epoch_ + 1;
    const auto& committee = committees_.at(next);
    if (!committee.has_member(node)) return TxResult::success();  // non-member signals ignored
    if (!registry_->verify(node, ready_signal_preimage(next, node), sig))
      return TxResult::fail("invalid ready signature");
    if (ready_signals_.contains(node)) return TxResult::success();
    ByteWriter w;
    w.u64(next);
    w.str(node);
    append(ChainEventKind::kReadySignaled, w.take());
    std::uint32_t quorum = 2 * committee.fault_bound() + 1;
    if (committee.weight_of(ready_signals_) >= quorum) {
      ByteWriter done;
      done.u64(next);
      append(ChainEventKind::kEpochCompleted, done.take());
    }
    return TxResult::success();
  }

  TxResult begin_challenge(std::uint64_t k) {
    if (phase_ != EpochPhase::kSteady) return TxResult::fail("challenge needs steady phase");
    ByteWriter w;
    w.u64(current_epoch_);
    w.u64(k);
    append(ChainEventKind::kChallengeStarted, w.take());
    return TxResult::success();
  }

  TxResult certify_challenge(const ChallengeCertificate& cert) {
    if (phase_ != EpochPhase::kChallenge) return TxResult::fail("no challenge running");
    if (cert.epoch != current_epoch_) return TxResult::fail("challenge certificate epoch mismatch");
    const auto& committee = committees_.at(current_epoch_);
    if (!committee.has_member(cert.prover)) return TxResult::fail("prover outside committee");
    if (challenge_certified_.contains(cert.prover))
      return TxResult::fail("duplicate challenge certificate");
    Bytes preimage = challenge_confirm_preimage(cert.epoch, cert.prover, cert.set_digest);
    std::set<PartyId> confirmers;
    for (const auto& [party, sig] : cert.confirmations) {
      if (!committee.has_member(party)) return TxResult::fail("confirmer outside committee");
      if (!registry_->verify(party, preimage, sig))
        return TxResult::fail("invalid confirmation signature");
      confirmers.insert(party);
    }
    std::uint32_t quorum = 2 * committee.fault_bound() + 1;
    if (committee.weight_of(confirmers) < quorum)
      return TxResult::fail("challenge certificate below 2f+1 shard quorum");
    append(ChainEventKind::kChallengeCertified, cert.serialize());
    if (committee.weight_of(challenge_certified_) >= quorum) {
      ByteWriter w;
      w.u64(current_epoch_);
      append(ChainEventKind::kChallengeEnded, w.take());
    }
    return TxResult::success();
  }

  TxResult end_challenge() {
    if (phase_ != EpochPhase::kChallenge)
      return TxResult::fail("no challenge running");
    const auto& committee = committees_.at(current_epoch_);
    std::uint32_t quorum = 2 * committee.fault_bound() + 1;
    if (committee.weight_of(challenge_certified_) < quorum)
      return TxResult::fail("challenge certificates below 2f+1 shard quorum");
    ByteWriter w;
    w.u64(current_epoch_);
    append(ChainEventKind::kChallengeEnded, w.take());
    return TxResult::success();
  }

  // -- queries --------------------------------------------------------------

  std::uint64_t seq() const { return seq_; }
  Epoch current_epoch() const { return current_epoch_; }
  EpochPhase phase() const { return phase_; }
  Epoch write_target_epoch() const {
    return phase_ == EpochPhase::kReconfiguring ? current_epoch_ + 1 : current_epoch_;
  }
  bool epoch_live(Epoch e) const {
    if (e == current_epoch_) return true;
    return phase_ == EpochPhase::kReconfiguring && e == current_epoch_ + 1;
  }

  bool is_registered(const BlobId& id) const { return registrations_.contains(id); }
  std::optional<BlobRegistration> registration(const BlobId& id) const {
    auto it = registrations_.find(id);
    if (it == registrations_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<Certificate> read_certificate(const BlobId& id) const {
    auto it = certificates_.find(id);
    if (it == certificates_.end()) return std::nullopt;
    return it->second;
  }
  bool is_invalid(const BlobId& id) const { return invalid_blobs_.contains(id); }
  std::optional<std::uint64_t> invalidation_seq(const BlobId& id) const {
    auto it = invalidation_seq_.find(id);
    if (it == invalidation_seq_.end()) return std::nullopt;
    return it->second;
  }
  std::uint32_t attestation_weight(const BlobId& id) const {
    auto it = attestations_.find(id);
    if (it == attestations_.end()) return 0;
    return committee(attestation_epoch(id)).weight_of(it->second);
  }
  const Committee& committee(Epoch e) const { return committees_.at(e); }
  bool has_committee(Epoch e) const { return committees_.contains(e); }
  const std::set<PartyId>& ready_signals() const { return ready_signals_; }
  const std::set<PartyId>& challenge_certified() const { return challenge_certified_; }
  std::optional<std::uint64_t> challenge_k() const { return challenge_k_; }
  std::optional<std::uint64_t> challenge_anchor_seq() const { return challenge_anchor_seq_; }
  bool expired(const BlobRegistration& reg) const { return reg.expiry_epoch < current_epoch_; }

  const std::vector<ChainEvent>& events() const { return log_; }
  std::vector<ChainEvent> events_since(std::uint64_t seq) const {
    std::vector<ChainEvent> out;
    for (const auto& e : log_)
      if (e.seq > seq) out.push_back(e);
    return out;
  }

  /// Certified, unexpired, not-invalidated blobs whose certificate sequenced
  /// at or before `anchor`: the deterministic universe for challenges.
  std::vector<BlobId> certified_blobs_as_of(std::uint64_t anchor) const {
    std::vector<BlobId> out;
    for (const auto& [id, seq] : certificate_seq_) {
      if (seq > anchor) continue;
      if (invalid_blobs_.contains(id)) continue;
      const auto& reg = registrations_.at(id);
      if (reg.expiry_epoch < current_epoch_) continue;
      out.push_back(id);
    }
    return out;  // std::map iteration: sorted by blob id
  }

  /// Committee that serves reads for a blob written in `epoch_written`.
  Epoch read_epoch_for(Epoch epoch_written) const {
    if (phase_ == EpochPhase::kReconfiguring && epoch_written == current_epoch_ + 1)
      return epoch_written;
    return current_epoch_;
  }

  // -- replay ---------------------------------------------------------------

  /// Rebuild state as a pure fold over an exported log.
  static Chain replay(const std::vector<ChainEvent>& log, Committee genesis,
                      const KeyRegistry* registry) {
    Chain c(std::move(genesis), registry);
    for (const auto& e : log) {
      c.seq_ = e.seq - 1;
      c.append_replay(e);
    }
    return c;
  }

  bool state_equals(const Chain& other) const {
    return registrations_ == other.registrations_ && certificates_ == other.certificates_ &&
           attestations_ == other.attestations_ && invalid_blobs_ == other.invalid_blobs_ &&
           committees_ == other.committees_ && current_epoch_ == other.current_epoch_ &&
           phase_ == other.phase_ && ready_signals_ == other.ready_signals_ &&
           challenge_certified_ == other.challenge_certified_ && log_ == other.log_;
  }

 private:
  bool any_live_committee_member(const PartyId& p) const {
    if (committee(current_epoch_).has_member(p)) return true;
    return phase_ == EpochPhase::kReconfiguring && committees_.contains(current_epoch_ + 1) &&
           committees_.at(current_epoch_ + 1).has_member(p);
  }

  Epoch attestation_epoch(const BlobId& id) const {
    const auto& reg = registrations_.at(id);
    return committees_.contains(reg.registered_epoch) && epoch_live(reg.registered_epoch)
               ? reg.registered_epoch
               : current_epoch_;
  }

  void maybe_invalidate(const BlobId& id) {
    if (invalid_blobs_.contains(id)) return;
    std::uint32_t f = committee(current_epoch_).fault_bound();
    if (attestation_weight(id) >= f + 1) {
      ByteWriter w;
      w.raw(std::span<const std::uint8_t>(id.data(), id.size()));
      append(ChainEventKind::kInvalidated, w.take());
    }
  }

  void append(ChainEventKind kind, Bytes payload) {
    ChainEvent e{++seq_, kind, std::move(payload)};
    apply(e);
    log_.push_back(std::move(e));
  }

  void append_replay(const ChainEvent& e) {
    seq_ = e.seq;
    apply(e);
    log_.push_back(e);
  }

  void apply(const ChainEvent& e) {
    ByteReader r{std::span<const std::uint8_t>(e.payload)};
    switch (e.kind) {
      case ChainEventKind::kRegistered: {
        BlobRegistration reg;
        auto id = r.bytes_fixed(32);
        std::copy(id.begin(), id.end(), reg.id.begin());
        reg.size = r.u64();
        reg.expiry_epoch = r.u64();
        reg.registered_epoch = r.u64();
        registrations_.emplace(reg.id, reg);
        break;
      }
      case ChainEventKind::kCertified: {
        auto cert = Certificate::deserialize(r);
        certificate_seq_.emplace(cert.blob_id, e.seq);
        certificates_.emplace(cert.blob_id, std::move(cert));
        break;
      }
      case ChainEventKind::kAttested: {
        BlobId id;
        auto b = r.bytes_fixed(32);
        std::copy(b.begin(), b.end(), id.begin());
        attestations_[id].insert(r.str());
        break;
      }
      case ChainEventKind::kInvalidated: {
        BlobId id;
        auto b = r.bytes_fixed(32);
        std::copy(b.begin(), b.end(), id.begin());
        invalid_blobs_.insert(id);
        invalidation_seq_.emplace(id, e.seq);
        break;
      }
      case ChainEventKind::kReconfigStarted: {
        auto next = Committee::deserialize(r);
        phase_ = EpochPhase::kReconfiguring;
        ready_signals_.clear();
        committees_.emplace(next.epoch, std::move(next));
        break;
      }
      case ChainEventKind::kReadySignaled: {
        r.u64();
        ready_signals_.insert(r.str());
        break;
      }
      case ChainEventKind::kEpochCompleted: {
        current_epoch_ = r.u64();
        phase_ = EpochPhase::kSteady;
        ready_signals_.clear();
        break;
      }
      case ChainEventKind::kChallengeStarted: {
        r.u64();
        challenge_k_ = r.u64();
        challenge_anchor_seq_ = e.seq;
        challenge_certified_.clear();
        phase_ = EpochPhase::kChallenge;
        break;
      }
      case ChainEventKind::kChallengeCertified: {
        auto cert = ChallengeCertificate::deserialize(r);
        challenge_certified_.insert(cert.prover);
        break;
      }
      case ChainEventKind::kChallengeEnded: {
        phase_ = EpochPhase::kSteady;
        challenge_k_.reset();
        challenge_anchor_seq_.reset();
        break;
      }
    }
  }

  const KeyRegistry* registry_;
  std::uint64_t seq_ = 0;
  Epoch current_epoch_;
  EpochPhase phase_ = EpochPhase::kSteady;
  std::vector<ChainEvent> log_;

  std::map<BlobId, BlobRegistration> registrations_;
  std::map<BlobId, Certificate> certificates_;
  std::map<BlobId, std::uint64_t> certificate_seq_;
  std::map<BlobId, std::set<PartyId>> attestations_;
  std::set<BlobId> invalid_blobs_;
  std::map<BlobId, std::uint64_t> invalidation_seq_;
  std::map<Epoch, Committee> committees_;
  std::set<PartyId> ready_signals_;
  std::set<PartyId> challenge_certified_;
  std::optional<std::uint64_t> challenge_k_;
  std::optional<std::uint64_t> challenge_anchor_seq_;
};

}  // namespace gridstore
