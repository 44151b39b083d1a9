#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "gridstore/chain.hpp"
#include "gridstore/commitments.hpp"

namespace gridstore {

// Canonical message schemas. Every payload has a fixed byte layout built from
// the primitives in serialize.hpp; transcripts record (type, size, digest) of
// exactly these bytes, and channel signatures cover them.

enum class MsgType : std::uint8_t {
  kStoreRequest = 0,
  kStoreResponse = 1,
  kMetadataRequest = 2,
  kMetadataResponse = 3,
  kSliverRequest = 4,
  kSliverResponse = 5,
  kRecoverySymbolRequest = 6,
  kRecoverySymbolResponse = 7,
  kInconsistencyProof = 8,
  kChallengeEntered = 9,
  kChallengeProve = 10,
  kChallengeConfirm = 11,
  kShardTransferRequest = 12,
  kShardTransferData = 13,
  kChainTx = 14,
  kChainNotify = 15,
};

inline const char* msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::kStoreRequest: return "store-request";
    case MsgType::kStoreResponse: return "store-response";
    case MsgType::kMetadataRequest: return "metadata-request";
    case MsgType::kMetadataResponse: return "metadata-response";
    case MsgType::kSliverRequest: return "sliver-request";
    case MsgType::kSliverResponse: return "sliver-response";
    case MsgType::kRecoverySymbolRequest: return "recovery-symbol-request";
    case MsgType::kRecoverySymbolResponse: return "recovery-symbol-response";
    case MsgType::kInconsistencyProof: return "inconsistency-proof";
    case MsgType::kChallengeEntered: return "challenge-entered";
    case MsgType::kChallengeProve: return "challenge-prove";
    case MsgType::kChallengeConfirm: return "challenge-confirm";
    case MsgType::kShardTransferRequest: return "shard-transfer-request";
    case MsgType::kShardTransferData: return "shard-transfer-data";
    case MsgType::kChainTx: return "chain-tx";
    case MsgType::kChainNotify: return "chain-notify";
  }
  return "unknown";
}

/// Reason codes carried by every refusal so tests can assert causes.
enum class Refusal : std::uint8_t {
  kNone = 0,
  kWrongShard = 1,
  kUnregistered = 2,
  kCommitmentMismatch = 3,
  kIdMismatch = 4,
  kEpochMismatch = 5,
  kUnknownBlob = 6,
  kNoCertificate = 7,
  kChallengeRunning = 8,
  kInvalidBlob = 9,
  kNotHolding = 10,
  kPrimaryDisabled = 11,
};

inline const char* refusal_name(Refusal r) {
  switch (r) {
    case Refusal::kNone: return "ok";
    case Refusal::kWrongShard: return "wrong-shard";
    case Refusal::kUnregistered: return "unregistered";
    case Refusal::kCommitmentMismatch: return "commitment-mismatch";
    case Refusal::kIdMismatch: return "id-mismatch";
    case Refusal::kEpochMismatch: return "epoch-mismatch";
    case Refusal::kUnknownBlob: return "unknown-blob";
    case Refusal::kNoCertificate: return "no-certificate";
    case Refusal::kChallengeRunning: return "challenge-running";
    case Refusal::kInvalidBlob: return "invalid-blob";
    case Refusal::kNotHolding: return "not-holding";
    case Refusal::kPrimaryDisabled: return "primary-reads-disabled";
  }
  return "unknown";
}

namespace wire {

inline void put_digest(ByteWriter& w, const Digest& d) {
  w.raw(std::span<const std::uint8_t>(d.data(), d.size()));
}

inline Digest get_digest(ByteReader& r) {
  Digest d;
  auto b = r.bytes_fixed(32);
  std::copy(b.begin(), b.end(), d.begin());
  return d;
}

inline void put_symbols(ByteWriter& w, const std::vector<Bytes>& symbols) {
  w.u32(static_cast<std::uint32_t>(symbols.size()));
  for (const auto& s : symbols) w.bytes(s);
}

inline std::vector<Bytes> get_symbols(ByteReader& r) {
  auto n = r.u32();
  if (n > gf16::kMaxCodeLength) throw DecodeError("oversized symbol list");
  std::vector<Bytes> out(n);
  for (auto& s : out) s = r.bytes();
  return out;
}

inline void put_pair(ByteWriter& w, const SliverPair& p) {
  w.u32(p.index);
  put_symbols(w, p.primary.symbols);
  put_symbols(w, p.secondary.symbols);
}

inline SliverPair get_pair(ByteReader& r) {
  SliverPair p;
  p.index = r.u32();
  p.primary.index = p.index;
  p.secondary.index = p.index;
  p.primary.symbols = get_symbols(r);
  p.secondary.symbols = get_symbols(r);
  return p;
}

}  // namespace wire

struct StoreRequestMsg {
  BlobId blob_id{};
  Epoch epoch = 0;  // committee the write targets
  Bytes metadata;   // canonical BlobMetadata serialization
  std::vector<SliverPair> pairs;

  Bytes serialize() const {
    ByteWriter w;
    wire::put_digest(w, blob_id);
    w.u64(epoch);
    w.bytes(metadata);
    w.u32(static_cast<std::uint32_t>(pairs.size()));
    for (const auto& p : pairs) wire::put_pair(w, p);
    return w.take();
  }
  static StoreRequestMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    StoreRequestMsg m;
    m.blob_id = wire::get_digest(r);
    m.epoch = r.u64();
    m.metadata = r.bytes();
    auto n = r.u32();
    if (n > gf16::kMaxCodeLength) throw DecodeError("oversized pair list");
    m.pairs.resize(n);
    for (auto& p : m.pairs) p = wire::get_pair(r);
    r.expect_done();
    return m;
  }
};

struct StoreResponseMsg {
  BlobId blob_id{};
  Epoch epoch = 0;
  Refusal refusal = Refusal::kNone;
  Signature ack{};  // over store_ack_preimage(blob_id, epoch) when refusal == kNone

  Bytes serialize() const {
    ByteWriter w;
    wire::put_digest(w, blob_id);
    w.u64(epoch);
    w.u8(static_cast<std::uint8_t>(refusal));
    wire::put_digest(w, ack);
    return w.take();
  }
  static StoreResponseMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    StoreResponseMsg m;
    m.blob_id = wire::get_digest(r);
    m.epoch = r.u64();
    m.refusal = static_cast<Refusal>(r.u8());
    m.ack = wire::get_digest(r);
    r.expect_done();
    return m;
  }
};

struct MetadataRequestMsg {
  BlobId blob_id{};

  Bytes serialize() const {
    ByteWriter w;
    wire::put_digest(w, blob_id);
    return w.take();
  }
  static MetadataRequestMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    MetadataRequestMsg m;
    m.blob_id = wire::get_digest(r);
    r.expect_done();
    return m;
  }
};

struct MetadataResponseMsg {
  BlobId blob_id{};
  Refusal refusal = Refusal::kNone;
  std::uint64_t evidence_seq = 0;  // invalidation pointer when refusal == kInvalidBlob
  std::vector<MetadataShard> shards;

  Bytes serialize() const {
    ByteWriter w;
    wire::put_digest(w, blob_id);
    w.u8(static_cast<std::uint8_t>(refusal));
    w.u64(evidence_seq);
    w.u32(static_cast<std::uint32_t>(shards.size()));
    for (const auto& s : shards) w.raw(s.serialize());
    return w.take();
  }
  static MetadataResponseMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    MetadataResponseMsg m;
    m.blob_id = wire::get_digest(r);
    m.refusal = static_cast<Refusal>(r.u8());
    m.evidence_seq = r.u64();
    auto n = r.u32();
    if (n > gf16::kMaxCodeLength) throw DecodeError("oversized shard list");
    m.shards.resize(n);
    for (auto& s : m.shards) s = MetadataShard::deserialize(r);
    r.expect_done();
    return m;
  }
};

struct SliverRequestMsg {
  BlobId blob_id{};
  Dimension dimension = Dimension::kSecondary;

  Bytes serialize() const {
    ByteWriter w;
    wire::put_digest(w, blob_id);
    w.u8(static_cast<std::uint8_t>(dimension));
    return w.take();
  }
  static SliverRequestMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    SliverRequestMsg m;
    m.blob_id = wire::get_digest(r);
    m.dimension = static_cast<Dimension>(r.u8());
    r.expect_done();
    return m;
  }
};

struct SliverResponseMsg {
  BlobId blob_id{};
  Dimension dimension = Dimension::kSecondary;
  Refusal refusal = Refusal::kNone;
  std::uint64_t evidence_seq = 0;
  // slivers for every shard the responder owns, keyed by shard index
  std::vector<std::pair<std::uint32_t, std::vector<Bytes>>> slivers;

  Bytes serialize() const {
    ByteWriter w;
    wire::put_digest(w, blob_id);
    w.u8(static_cast<std::uint8_t>(dimension));
    w.u8(static_cast<std::uint8_t>(refusal));
    w.u64(evidence_seq);
    w.u32(static_cast<std::uint32_t>(slivers.size()));
    for (const auto& [shard, symbols] : slivers) {
      w.u32(shard);
      wire::put_symbols(w, symbols);
    }
    return w.take();
  }
  static SliverResponseMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    SliverResponseMsg m;
    m.blob_id = wire::get_digest(r);
    m.dimension = static_cast<Dimension>(r.u8());
    m.refusal = static_cast<Refusal>(r.u8());
    m.evidence_seq = r.u64();
    auto n = r.u32();
    if (n > gf16::kMaxCodeLength) throw DecodeError("oversized sliver list");
    m.slivers.resize(n);
    for (auto& [shard, symbols] : m.slivers) {
      shard = r.u32();
      symbols = wire::get_symbols(r);
    }
    r.expect_done();
    return m;
  }
};

struct RecoverySymbolRequestMsg {
  BlobId blob_id{};
  std::uint32_t target_shard = 0;     // the sliver the requester is rebuilding
  Dimension target_dimension = Dimension::kSecondary;

  Bytes serialize() const {
    ByteWriter w;
    wire::put_digest(w, blob_id);
    w.u32(target_shard);
    w.u8(static_cast<std::uint8_t>(target_dimension));
    return w.take();
  }
  static RecoverySymbolRequestMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    RecoverySymbolRequestMsg m;
    m.blob_id = wire::get_digest(r);
    m.target_shard = r.u32();
    m.target_dimension = static_cast<Dimension>(r.u8());
    r.expect_done();
    return m;
  }
};

struct RecoverySymbolResponseMsg {
  BlobId blob_id{};
  std::uint32_t target_shard = 0;
  Dimension target_dimension = Dimension::kSecondary;
  Refusal refusal = Refusal::kNone;
  std::uint64_t evidence_seq = 0;
  std::vector<SymbolProof> proofs;  // one per shard the responder expanded

  Bytes serialize() const {
    ByteWriter w;
    wire::put_digest(w, blob_id);
    w.u32(target_shard);
    w.u8(static_cast<std::uint8_t>(target_dimension));
    w.u8(static_cast<std::uint8_t>(refusal));
    w.u64(evidence_seq);
    w.u32(static_cast<std::uint32_t>(proofs.size()));
    for (const auto& p : proofs) w.raw(p.serialize());
    return w.take();
  }
  static RecoverySymbolResponseMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    RecoverySymbolResponseMsg m;
    m.blob_id = wire::get_digest(r);
    m.target_shard = r.u32();
    m.target_dimension = static_cast<Dimension>(r.u8());
    m.refusal = static_cast<Refusal>(r.u8());
    m.evidence_seq = r.u64();
    auto n = r.u32();
    if (n > gf16::kMaxCodeLength) throw DecodeError("oversized proof list");
    m.proofs.resize(n);
    for (auto& p : m.proofs) p = SymbolProof::deserialize(r);
    r.expect_done();
    return m;
  }
};

/// Third-party-verifiable evidence that a committed sliver cannot be
/// recovered from writer-committed symbols: the collected openings decode to
/// a sliver whose recomputed commitment differs from the metadata root.
struct InconsistencyProof {
  BlobId blob_id{};
  std::uint32_t target_index = 0;
  Dimension target_dimension = Dimension::kSecondary;
  std::vector<SymbolProof> symbols;

  Bytes serialize() const {
    ByteWriter w;
    wire::put_digest(w, blob_id);
    w.u32(target_index);
    w.u8(static_cast<std::uint8_t>(target_dimension));
    w.u32(static_cast<std::uint32_t>(symbols.size()));
    for (const auto& s : symbols) w.raw(s.serialize());
    return w.take();
  }
  static InconsistencyProof deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    InconsistencyProof p;
    p.blob_id = wire::get_digest(r);
    p.target_index = r.u32();
    p.target_dimension = static_cast<Dimension>(r.u8());
    auto n = r.u32();
    if (n > gf16::kMaxCodeLength) throw DecodeError("oversized proof list");
    p.symbols.resize(n);
    for (auto& s : p.symbols) s = SymbolProof::deserialize(r);
    r.expect_done();
    return p;
  }
};

struct ChallengeEnteredMsg {
  Epoch epoch = 0;

  Bytes serialize() const {
    ByteWriter w;
    w.u64(epoch);
    return w.take();
  }
  static ChallengeEnteredMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    ChallengeEnteredMsg m;
    m.epoch = r.u64();
    r.expect_done();
    return m;
  }
};

struct ChallengeProveMsg {
  Epoch epoch = 0;
  Digest set_digest{};
  // per challenged blob: openings of every symbol shared between the
  // prover's shards and the verifier's shards
  std::vector<std::pair<BlobId, std::vector<SymbolProof>>> blobs;

  Bytes serialize() const {
    ByteWriter w;
    w.u64(epoch);
    wire::put_digest(w, set_digest);
    w.u32(static_cast<std::uint32_t>(blobs.size()));
    for (const auto& [id, proofs] : blobs) {
      wire::put_digest(w, id);
      w.u32(static_cast<std::uint32_t>(proofs.size()));
      for (const auto& p : proofs) w.raw(p.serialize());
    }
    return w.take();
  }
  static ChallengeProveMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    ChallengeProveMsg m;
    m.epoch = r.u64();
    m.set_digest = wire::get_digest(r);
    auto n = r.u32();
    if (n > 1u << 20) throw DecodeError("oversized challenge message");
    m.blobs.resize(n);
    for (auto& [id, proofs] : m.blobs) {
      id = wire::get_digest(r);
      auto k = r.u32();
      if (k > gf16::kMaxCodeLength) throw DecodeError("oversized proof list");
      proofs.resize(k);
      for (auto& p : proofs) p = SymbolProof::deserialize(r);
    }
    r.expect_done();
    return m;
  }
};

struct ChallengeConfirmMsg {
  Epoch epoch = 0;
  PartyId prover;
  Signature signature{};  // over challenge_confirm_preimage(epoch, prover, set_digest)
  Digest set_digest{};

  Bytes serialize() const {
    ByteWriter w;
    w.u64(epoch);
    w.str(prover);
    wire::put_digest(w, signature);
    wire::put_digest(w, set_digest);
    return w.take();
  }
  static ChallengeConfirmMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    ChallengeConfirmMsg m;
    m.epoch = r.u64();
    m.prover = r.str();
    m.signature = wire::get_digest(r);
    m.set_digest = wire::get_digest(r);
    r.expect_done();
    return m;
  }
};

struct ShardTransferRequestMsg {
  std::uint32_t shard = 0;
  Epoch epoch = 0;  // the new committee's epoch

  Bytes serialize() const {
    ByteWriter w;
    w.u32(shard);
    w.u64(epoch);
    return w.take();
  }
  static ShardTransferRequestMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    ShardTransferRequestMsg m;
    m.shard = r.u32();
    m.epoch = r.u64();
    r.expect_done();
    return m;
  }
};

struct ShardTransferDataMsg {
  std::uint32_t shard = 0;
  Refusal refusal = Refusal::kNone;
  // blob id, canonical metadata bytes, and the shard's sliver pair
  std::vector<std::tuple<BlobId, Bytes, SliverPair>> blobs;

  Bytes serialize() const {
    ByteWriter w;
    w.u32(shard);
    w.u8(static_cast<std::uint8_t>(refusal));
    w.u32(static_cast<std::uint32_t>(blobs.size()));
    for (const auto& [id, meta, pair] : blobs) {
      wire::put_digest(w, id);
      w.bytes(meta);
      wire::put_pair(w, pair);
    }
    return w.take();
  }
  static ShardTransferDataMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    ShardTransferDataMsg m;
    m.shard = r.u32();
    m.refusal = static_cast<Refusal>(r.u8());
    auto n = r.u32();
    if (n > 1u << 20) throw DecodeError("oversized transfer");
    m.blobs.resize(n);
    for (auto& [id, meta, pair] : m.blobs) {
      id = wire::get_digest(r);
      meta = r.bytes();
      pair = wire::get_pair(r);
    }
    r.expect_done();
    return m;
  }
};

// Control-plane transactions travel as messages to the chain party.

enum class TxKind : std::uint8_t {
  kReserve = 0,
  kCertificate = 1,
  kAttest = 2,
  kReconfigStart = 3,
  kReady = 4,
  kChallengeStart = 5,
  kChallengeCertificate = 6,
};

struct ChainTxMsg {
  TxKind kind{};
  Bytes body;

  Bytes serialize() const {
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(kind));
    w.bytes(body);
    return w.take();
  }
  static ChainTxMsg deserialize(std::span<const std::uint8_t> b) {
    ByteReader r{b};
    ChainTxMsg m;
    m.kind = static_cast<TxKind>(r.u8());
    m.body = r.bytes();
    r.expect_done();
    return m;
  }
};

inline ChainTxMsg tx_reserve(const BlobId& id, std::uint64_t size, Epoch expiry) {
  ByteWriter w;
  wire::put_digest(w, id);
  w.u64(size);
  w.u64(expiry);
  return ChainTxMsg{TxKind::kReserve, w.take()};
}

inline ChainTxMsg tx_certificate(const Certificate& cert) {
  return ChainTxMsg{TxKind::kCertificate, cert.serialize()};
}

inline ChainTxMsg tx_attest(const BlobId& id, const PartyId& node, const Signature& sig) {
  ByteWriter w;
  wire::put_digest(w, id);
  w.str(node);
  wire::put_digest(w, sig);
  return ChainTxMsg{TxKind::kAttest, w.take()};
}

inline ChainTxMsg tx_reconfig_start(const Committee& next) {
  return ChainTxMsg{TxKind::kReconfigStart, next.serialize()};
}

inline ChainTxMsg tx_ready(const PartyId& node, const Signature& sig) {
  ByteWriter w;
  w.str(node);
  wire::put_digest(w, sig);
  return ChainTxMsg{TxKind::kReady, w.take()};
}

inline ChainTxMsg tx_challenge_start(std::uint64_t k) {
  ByteWriter w;
  w.u64(k);
  return ChainTxMsg{TxKind::kChallengeStart, w.take()};
}

inline ChainTxMsg tx_challenge_certificate(const ChallengeCertificate& cert) {
  return ChainTxMsg{TxKind::kChallengeCertificate, cert.serialize()};
}

}  // namespace gridstore
