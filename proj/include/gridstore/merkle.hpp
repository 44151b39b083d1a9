#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gridstore/serialize.hpp"
#include "gridstore/sha256.hpp"

namespace gridstore {

// Binary Merkle tree with domain-separated leaf/node hashes, index-ordered
// leaves, and duplicate-last padding up to the next power of two.

struct MerkleProof {
  std::uint32_t leaf_index = 0;
  std::uint32_t leaf_count = 0;
  std::vector<Digest> path;  // sibling digests, leaf level first

  Bytes serialize() const {
    ByteWriter w;
    w.u32(leaf_index);
    w.u32(leaf_count);
    w.u32(static_cast<std::uint32_t>(path.size()));
    for (const auto& d : path) w.raw(std::span<const std::uint8_t>(d.data(), d.size()));
    return w.take();
  }

  static MerkleProof deserialize(ByteReader& r) {
    MerkleProof p;
    p.leaf_index = r.u32();
    p.leaf_count = r.u32();
    auto n = r.u32();
    if (n > 64) throw DecodeError("merkle path too long");
    p.path.resize(n);
    for (auto& d : p.path) {
      auto b = r.bytes_fixed(32);
      std::copy(b.begin(), b.end(), d.begin());
    }
    return p;
  }

  bool operator==(const MerkleProof&) const = default;
};

inline Digest merkle_leaf_hash(std::span<const std::uint8_t> data) {
  return tagged_hash(domain::kMerkleLeaf, data);
}

inline Digest merkle_node_hash(const Digest& left, const Digest& right) {
  Sha256 h;
  h.update_byte(domain::kMerkleNode);
  h.update(std::span<const std::uint8_t>(left.data(), left.size()));
  h.update(std::span<const std::uint8_t>(right.data(), right.size()));
  return h.finish();
}

class MerkleTree {
 public:
  static MerkleTree from_leaf_hashes(std::vector<Digest> leaves) {
    if (leaves.empty()) throw DecodeError("merkle tree needs at least one leaf");
    MerkleTree t;
    t.leaf_count_ = static_cast<std::uint32_t>(leaves.size());
    while ((leaves.size() & (leaves.size() - 1)) != 0) leaves.push_back(leaves.back());
    t.levels_.push_back(std::move(leaves));
    while (t.levels_.back().size() > 1) {
      const auto& prev = t.levels_.back();
      std::vector<Digest> next(prev.size() / 2);
      for (std::size_t i = 0; i < next.size(); ++i)
        next[i] = merkle_node_hash(prev[2 * i], prev[2 * i + 1]);
      t.levels_.push_back(std::move(next));
    }
    return t;
  }

  static MerkleTree build(const std::vector<Bytes>& leaves) {
    std::vector<Digest> hashes;
    hashes.reserve(leaves.size());
    for (const auto& l : leaves) hashes.push_back(merkle_leaf_hash(l));
    return from_leaf_hashes(std::move(hashes));
  }

  const Digest& root() const { return levels_.back().front(); }
  std::uint32_t leaf_count() const { return leaf_count_; }

  MerkleProof prove(std::uint32_t index) const {
    if (index >= leaf_count_) throw DecodeError("merkle proof index out of range");
    MerkleProof p;
    p.leaf_index = index;
    p.leaf_count = leaf_count_;
    std::uint32_t pos = index;
    for (std::size_t level = 0; level + 1 < levels_.size(); ++level) {
      p.path.push_back(levels_[level][pos ^ 1]);
      pos >>= 1;
    }
    return p;
  }

 private:
  std::uint32_t leaf_count_ = 0;
  std::vector<std::vector<Digest>> levels_;
};

/// Recompute the root from a leaf hash and sibling path; constant-shape, no
/// exceptions: malformed proofs simply fail to verify.
inline bool merkle_verify_hash(const Digest& root, Digest leaf, const MerkleProof& proof) {
  if (proof.leaf_count == 0 || proof.leaf_index >= proof.leaf_count) return false;
  std::uint32_t padded = 1;
  std::uint32_t depth = 0;
  while (padded < proof.leaf_count) {
    padded <<= 1;
    ++depth;
  }
  if (proof.path.size() != depth) return false;
  std::uint32_t pos = proof.leaf_index;
  for (const auto& sibling : proof.path) {
    leaf = (pos & 1) ? merkle_node_hash(sibling, leaf) : merkle_node_hash(leaf, sibling);
    pos >>= 1;
  }
  return leaf == root;
}

inline bool merkle_verify(const Digest& root, std::span<const std::uint8_t> leaf_data,
                          const MerkleProof& proof) {
  return merkle_verify_hash(root, merkle_leaf_hash(leaf_data), proof);
}

}  // namespace gridstore
