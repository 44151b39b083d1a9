#pragma once

#include <map>
#include <optional>
#include <vector>

#include "gridstore/codec.hpp"
#include "gridstore/merkle.hpp"

namespace gridstore {

using BlobId = Digest;

inline constexpr std::uint16_t kEncodingTag = 0x3247;  // "2G": 2-dimensional grid code, v1

/// Merkle root over all n expanded symbols of one sliver.
struct SliverCommitment {
  Digest root{};
  Dimension dimension = Dimension::kPrimary;
  std::uint32_t index = 0;

  bool operator==(const SliverCommitment&) const = default;
};

/// The per-blob commitment set plus the fields bound into the blob id.
struct BlobMetadata {
  std::vector<Digest> primary_roots;    // length n, indexed by shard
  std::vector<Digest> secondary_roots;  // length n
  std::uint64_t blob_len = 0;
  std::uint32_t symbol_size = 0;
  std::uint16_t encoding_tag = kEncodingTag;
  std::uint64_t epoch_written = 0;

  std::uint32_t n_shards() const { return static_cast<std::uint32_t>(primary_roots.size()); }

  EncodingConfig config() const {
    std::uint32_t n = n_shards();
    if (n == 0 || (n - 1) % 3 != 0 || secondary_roots.size() != n)
      throw DecodeError("metadata commitment lists are malformed");
    return EncodingConfig::make((n - 1) / 3, symbol_size);
  }

  // Canonical layout: blob_len, symbol_size, encoding_tag, epoch_written,
  // primary roots, secondary roots; lists are count-prefixed.
  Bytes serialize() const {
    ByteWriter w;
    w.u64(blob_len);
    w.u32(symbol_size);
    w.u16(encoding_tag);
    w.u64(epoch_written);
    w.u32(static_cast<std::uint32_t>(primary_roots.size()));
    for (const auto& d : primary_roots) w.raw(std::span<const std::uint8_t>(d.data(), d.size()));
    w.u32(static_cast<std::uint32_t>(secondary_roots.size()));
    for (const auto& d : secondary_roots) w.raw(std::span<const std::uint8_t>(d.data(), d.size()));
    return w.take();
  }

  static BlobMetadata deserialize(std::span<const std::uint8_t> buf) {
    ByteReader r{buf};
    BlobMetadata m;
    m.blob_len = r.u64();
    m.symbol_size = r.u32();
    m.encoding_tag = r.u16();
    m.epoch_written = r.u64();
    auto np = r.u32();
    if (np > gf16::kMaxCodeLength) throw DecodeError("commitment list too long");
    m.primary_roots.resize(np);
    for (auto& d : m.primary_roots) {
      auto b = r.bytes_fixed(32);
      std::copy(b.begin(), b.end(), d.begin());
    }
    auto ns = r.u32();
    if (ns > gf16::kMaxCodeLength) throw DecodeError("commitment list too long");
    m.secondary_roots.resize(ns);
    for (auto& d : m.secondary_roots) {
      auto b = r.bytes_fixed(32);
      std::copy(b.begin(), b.end(), d.begin());
    }
    r.expect_done();
    return m;
  }

  bool operator==(const BlobMetadata&) const = default;
};

inline SliverCommitment commit_sliver(const PrimarySliver& sliver, const EncodingConfig& config) {
  auto tree = MerkleTree::build(expand_primary_full(sliver, config));
  return SliverCommitment{tree.root(), Dimension::kPrimary, sliver.index};
}

inline SliverCommitment commit_sliver(const SecondarySliver& sliver,
                                      const EncodingConfig& config) {
  auto tree = MerkleTree::build(expand_secondary_full(sliver, config));
  return SliverCommitment{tree.root(), Dimension::kSecondary, sliver.index};
}

inline BlobMetadata make_metadata(const std::vector<SliverPair>& pairs, std::uint64_t blob_len,
                                  const EncodingConfig& config, std::uint64_t epoch_written = 0) {
  if (pairs.size() != config.n_shards)
    throw CodecError("metadata needs all n sliver pairs from one encoding");
  BlobMetadata m;
  m.blob_len = blob_len;
  m.symbol_size = config.symbol_size;
  m.epoch_written = epoch_written;
  m.primary_roots.resize(pairs.size());
  m.secondary_roots.resize(pairs.size());
  for (const auto& p : pairs) {
    m.primary_roots[p.index] = commit_sliver(p.primary, config).root;
    m.secondary_roots[p.index] = commit_sliver(p.secondary, config).root;
  }
  return m;
}

/// Blob id: hash over the pair of Merkle roots of the commitment lists plus
/// the encoding parameters. epoch_written is deliberately not bound here.
inline BlobId make_blob_id(const BlobMetadata& m) {
  auto root_of = [](const std::vector<Digest>& roots) {
    return MerkleTree::from_leaf_hashes(roots).root();
  };
  Digest rp = root_of(m.primary_roots);
  Digest rs = root_of(m.secondary_roots);
  ByteWriter w;
  w.raw(std::span<const std::uint8_t>(rp.data(), rp.size()));
  w.raw(std::span<const std::uint8_t>(rs.data(), rs.size()));
  w.u64(m.blob_len);
  w.u32(m.symbol_size);
  w.u16(m.encoding_tag);
  return tagged_hash(domain::kBlobId, w.data());
}

/// Membership proof for one cell of E against a sliver commitment.
struct SymbolProof {
  IntersectionSymbol symbol;
  MerkleProof path;

  // The sliver the proof opens: its shard index and dimension.
  std::uint32_t sliver_index() const {
    return symbol.origin == Dimension::kPrimary ? symbol.row : symbol.col;
  }
  Dimension dimension() const { return symbol.origin; }

  Bytes serialize() const {
    ByteWriter w;
    w.u32(symbol.row);
    w.u32(symbol.col);
    w.u8(static_cast<std::uint8_t>(symbol.origin));
    w.bytes(symbol.data);
    w.raw(path.serialize());
    return w.take();
  }

  static SymbolProof deserialize(ByteReader& r) {
    SymbolProof p;
    p.symbol.row = r.u32();
    p.symbol.col = r.u32();
    p.symbol.origin = static_cast<Dimension>(r.u8());
    p.symbol.data = r.bytes();
    p.path = MerkleProof::deserialize(r);
    return p;
  }

  bool operator==(const SymbolProof&) const = default;
};

inline SymbolProof prove_symbol(const PrimarySliver& sliver, std::uint32_t j,
                                const EncodingConfig& config) {
  auto expanded = expand_primary_full(sliver, config);
  if (j >= expanded.size()) throw CodecError("symbol index out of range");
  auto tree = MerkleTree::build(expanded);
  return SymbolProof{IntersectionSymbol{sliver.index, j, expanded[j], Dimension::kPrimary},
                     tree.prove(j)};
}

inline SymbolProof prove_symbol(const SecondarySliver& sliver, std::uint32_t i,
                                const EncodingConfig& config) {
  auto expanded = expand_secondary_full(sliver, config);
  if (i >= expanded.size()) throw CodecError("symbol index out of range");
  auto tree = MerkleTree::build(expanded);
  return SymbolProof{IntersectionSymbol{i, sliver.index, expanded[i], Dimension::kSecondary},
                     tree.prove(i)};
}

/// Accepts iff the proof opens position (row, col) of the committed expanded
/// sliver. The leaf index inside E is bound by the path, so a valid proof
/// pins the symbol's coordinates, not just its bytes.
inline bool verify_symbol(const SymbolProof& proof, const Digest& sliver_root) {
  std::uint32_t expect_leaf =
      proof.symbol.origin == Dimension::kPrimary ? proof.symbol.col : proof.symbol.row;
  if (proof.path.leaf_index != expect_leaf) return false;
  return merkle_verify(sliver_root, proof.symbol.data, proof.path);
}

/// Convenience: look up the right commitment list in the metadata.
inline bool verify_symbol(const SymbolProof& proof, const BlobMetadata& metadata) {
  std::uint32_t sliver = proof.sliver_index();
  if (sliver >= metadata.n_shards()) return false;
  if (proof.path.leaf_count != metadata.n_shards()) return false;
  const auto& roots = proof.symbol.origin == Dimension::kPrimary ? metadata.primary_roots
                                                                 : metadata.secondary_roots;
  return verify_symbol(proof, roots[sliver]);
}

// ---------------------------------------------------------------------------
// 1D metadata distribution: nodes keep one (f+1)-of-n shard of the serialized
// metadata instead of replicating the full commitment lists everywhere.

struct MetadataShard {
  std::uint32_t shard_index = 0;
  Bytes symbol;
  std::uint32_t total_len = 0;    // serialized metadata length before padding
  Digest encoding_root{};         // Merkle root over all n encoded symbols
  MerkleProof proof;              // opening of `symbol` under encoding_root

  Bytes serialize() const {
    ByteWriter w;
    w.u32(shard_index);
    w.bytes(symbol);
    w.u32(total_len);
    w.raw(std::span<const std::uint8_t>(encoding_root.data(), encoding_root.size()));
    w.raw(proof.serialize());
    return w.take();
  }

  static MetadataShard deserialize(ByteReader& r) {
    MetadataShard s;
    s.shard_index = r.u32();
    s.symbol = r.bytes();
    s.total_len = r.u32();
    auto b = r.bytes_fixed(32);
    std::copy(b.begin(), b.end(), s.encoding_root.begin());
    s.proof = MerkleProof::deserialize(r);
    return s;
  }

  bool operator==(const MetadataShard&) const = default;
};

inline std::vector<MetadataShard> encode_metadata(const BlobMetadata& metadata,
                                                  const EncodingConfig& config) {
  Bytes serialized = metadata.serialize();
  const std::uint32_t t = config.secondary_sliver_len();
  std::uint64_t per = (serialized.size() + t - 1) / t;
  if (per < 2) per = 2;
  if (per % 2 != 0) ++per;
  std::vector<Bytes> source(t, Bytes(per, 0));
  for (std::size_t i = 0; i < serialized.size(); ++i) source[i / per][i % per] = serialized[i];
  auto encoded = rs_encode(source, t, config.n_shards);
  auto tree = MerkleTree::build(encoded);
  std::vector<MetadataShard> shards(config.n_shards);
  for (std::uint32_t i = 0; i < config.n_shards; ++i) {
    shards[i] = MetadataShard{i, encoded[i], static_cast<std::uint32_t>(serialized.size()),
                              tree.root(), tree.prove(i)};
  }
  return shards;
}

/// Decode metadata from shards: shards with invalid openings are discarded,
/// candidates are grouped by encoding root, and a decoded candidate is
/// accepted only if it re-derives `expected_id`. Forged groups fail that
/// check; the honest group decodes identically from any f+1 of its shards.
inline std::optional<BlobMetadata> decode_metadata(const std::vector<MetadataShard>& shards,
                                                   const EncodingConfig& config,
                                                   const BlobId& expected_id) {
  const std::uint32_t t = config.secondary_sliver_len();
  std::map<Digest, std::map<std::uint32_t, const MetadataShard*>> groups;
  for (const auto& s : shards) {
    if (s.shard_index >= config.n_shards) continue;
    if (s.proof.leaf_index != s.shard_index) continue;
    if (!merkle_verify(s.encoding_root, s.symbol, s.proof)) continue;
    groups[s.encoding_root].emplace(s.shard_index, &s);
  }
  for (const auto& [root, members] : groups) {
    if (members.size() < t) continue;
    std::vector<Symbol> subset;
    std::uint32_t expect_len = members.begin()->second->total_len;
    bool uniform = true;
    for (const auto& [idx, shard] : members) {
      if (shard->total_len != expect_len || shard->symbol.size() != members.begin()->second->symbol.size())
        uniform = false;
      subset.push_back(Symbol{idx, shard->symbol});
    }
    if (!uniform) continue;
    try {
      auto source = rs_decode(std::move(subset), t, config.n_shards);
      Bytes serialized;
      for (const auto& s : source) serialized.insert(serialized.end(), s.begin(), s.end());
      if (serialized.size() < expect_len) continue;
      serialized.resize(expect_len);
      auto metadata = BlobMetadata::deserialize(serialized);
      if (make_blob_id(metadata) == expected_id && metadata.config().n_shards == config.n_shards)
        return metadata;
    } catch (const DecodeError&) {
    } catch (const CodecError&) {
    }
  }
  return std::nullopt;
}

}  // namespace gridstore
