#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>

#include "gridstore/challenge.hpp"
#include "gridstore/host.hpp"

namespace gridstore {

/// Third-party verification of an inconsistency claim by trial recovery: all
/// openings must verify, lie on the claimed line of E with the dimension the
/// recovery consumes, and decode (lowest source indices first) to a sliver
/// whose recomputed commitment differs from the committed root.
inline bool verify_inconsistency(const InconsistencyProof& proof, const BlobMetadata& metadata) {
  try {
    if (make_blob_id(metadata) != proof.blob_id) return false;
    EncodingConfig cfg = metadata.config();
    if (proof.target_index >= cfg.n_shards) return false;
    const bool secondary_target = proof.target_dimension == Dimension::kSecondary;
    const std::uint32_t threshold =
        secondary_target ? cfg.secondary_sliver_len() : cfg.primary_sliver_len();
    std::map<std::uint32_t, IntersectionSymbol> line;
    for (const auto& p : proof.symbols) {
      if (!verify_symbol(p, metadata)) return false;
      if (secondary_target) {
        if (p.symbol.origin != Dimension::kPrimary || p.symbol.col != proof.target_index)
          return false;
        line.emplace(p.symbol.row, p.symbol);
      } else {
        if (p.symbol.origin != Dimension::kSecondary || p.symbol.row != proof.target_index)
          return false;
        line.emplace(p.symbol.col, p.symbol);
      }
    }
    if (line.size() < threshold) return false;
    std::vector<IntersectionSymbol> subset;
    for (const auto& [idx, sym] : line) {
      subset.push_back(sym);
      if (subset.size() == threshold) break;
    }
    if (secondary_target) {
      auto sliver = recover_secondary(subset, proof.target_index, cfg);
      return commit_sliver(sliver, cfg).root != metadata.secondary_roots[proof.target_index];
    }
    auto sliver = recover_primary(subset, proof.target_index, cfg);
    return commit_sliver(sliver, cfg).root != metadata.primary_roots[proof.target_index];
  } catch (const CodecError&) {
    return false;
  } catch (const DecodeError&) {
    return false;
  }
}

struct NodeOptions {
  bool allow_primary_reads = false;
  bool full_read_recovery = false;  // baseline: recover by reading the whole blob
  std::uint64_t reconfig_fallback_delay = 200;
  std::uint64_t coin_seed = 0;
};

/// Storage-node state machine. All effects go through the ProtocolHost, so
/// the same code runs under the simulator and under unit-test stubs.
class StorageNode {
 public:
  struct StoredPair {
    std::optional<PrimarySliver> primary;
    std::optional<SecondarySliver> secondary;
    bool complete() const { return primary.has_value() && secondary.has_value(); }
  };

  struct BlobStore {
    std::optional<BlobMetadata> metadata;
    std::map<std::uint32_t, StoredPair> pairs;  // keyed by shard
    bool invalid = false;
    std::uint64_t evidence_seq = 0;
  };

  StorageNode(ProtocolHost* host, NodeOptions options) : host_(host), options_(options) {}

  // -- accessors used by tests, monitors and metrics -------------------------

  const std::map<BlobId, BlobStore>& store() const { return store_; }
  bool has_complete_pair(const BlobId& id, std::uint32_t shard) const {
    auto it = store_.find(id);
    if (it == store_.end()) return false;
    auto p = it->second.pairs.find(shard);
    return p != it->second.pairs.end() && p->second.complete();
  }
  const BlobMetadata* metadata_of(const BlobId& id) const {
    auto it = store_.find(id);
    return it != store_.end() && it->second.metadata ? &*it->second.metadata : nullptr;
  }
  bool challenge_entered() const { return chal_ && chal_->entered && !chal_->finished; }
  bool challenge_open() const { return chal_ && chal_->open; }
  /// Reads of a blob are suspended while the node is in a challenge phase and
  /// the blob is (or may still turn out to be) in someone's challenged set.
  bool challenge_blocks_reads(const BlobId& id) const {
    if (!challenge_entered()) return false;
    if (!chal_->open) return true;  // selection unknown until the coin opens
    return chal_->blocked.contains(id);
  }
  std::uint64_t recovery_downloaded(const BlobId& id) const {
    auto it = recovery_bytes_.find(id);
    return it == recovery_bytes_.end() ? 0 : it->second;
  }
  std::uint64_t stored_sliver_bytes() const {
    std::uint64_t total = 0;
    for (const auto& [id, blob] : store_) {
      for (const auto& [shard, pair] : blob.pairs) {
        if (pair.primary)
          for (const auto& s : pair.primary->symbols) total += s.size();
        if (pair.secondary)
          for (const auto& s : pair.secondary->symbols) total += s.size();
      }
    }
    return total;
  }

  const std::set<std::uint32_t>& transferred_shards() const { return transferred_shards_; }

  /// Adversarial state surgery for fault-injection scenarios.
  void inject_primary(const BlobId& id, std::uint32_t shard, PrimarySliver sliver) {
    store_[id].pairs[shard].primary = std::move(sliver);
  }
  bool erase_sliver(const BlobId& id, std::uint32_t shard, Dimension dim) {
    auto it = store_.find(id);
    if (it == store_.end()) return false;
    auto p = it->second.pairs.find(shard);
    if (p == it->second.pairs.end()) return false;
    if (dim == Dimension::kPrimary) p->second.primary.reset();
    else p->second.secondary.reset();
    return true;
  }

  // -- chain observation ------------------------------------------------------

  void on_chain_events(std::span<const ChainEvent> events) {
    for (const auto& e : events) {
      switch (e.kind) {
        case ChainEventKind::kInvalidated: {
          ByteReader r{std::span<const std::uint8_t>(e.payload)};
          BlobId id = wire::get_digest(r);
          auto& blob = store_[id];
          blob.invalid = true;
          blob.evidence_seq = e.seq;
          recovery_.erase(id);
          pending_symbol_requests_.erase(id);
          host_->note("blob-invalidated", &id);
          break;
        }
        case ChainEventKind::kReconfigStarted:
          on_reconfig_started();
          break;
        case ChainEventKind::kEpochCompleted:
          on_epoch_completed();
          break;
        case ChainEventKind::kChallengeStarted:
          on_challenge_started();
          break;
        case ChainEventKind::kChallengeEnded:
          on_challenge_ended();
          break;
        default:
          break;
      }
    }
    ensure_obligations();
    check_ready();
  }

  // -- message dispatch -------------------------------------------------------

  void on_message(const PartyId& src, MsgType type, const Bytes& payload) {
    switch (type) {
      case MsgType::kStoreRequest:
        handle_store_request(src, StoreRequestMsg::deserialize(payload));
        break;
      case MsgType::kMetadataRequest:
        handle_metadata_request(src, MetadataRequestMsg::deserialize(payload));
        break;
      case MsgType::kMetadataResponse:
        handle_metadata_response(src, MetadataResponseMsg::deserialize(payload), payload.size());
        break;
      case MsgType::kSliverRequest:
        handle_sliver_request(src, SliverRequestMsg::deserialize(payload));
        break;
      case MsgType::kSliverResponse:
        handle_sliver_response(src, SliverResponseMsg::deserialize(payload), payload.size());
        break;
      case MsgType::kRecoverySymbolRequest:
        handle_recovery_symbol_request(src, RecoverySymbolRequestMsg::deserialize(payload), false);
        break;
      case MsgType::kRecoverySymbolResponse:
        handle_recovery_symbol_response(src, RecoverySymbolResponseMsg::deserialize(payload),
                                        payload.size());
        break;
      case MsgType::kInconsistencyProof:
        handle_inconsistency_proof(src, InconsistencyProof::deserialize(payload));
        break;
      case MsgType::kChallengeEntered:
        handle_challenge_entered(src, ChallengeEnteredMsg::deserialize(payload));
        break;
      case MsgType::kChallengeProve:
        handle_challenge_prove(src, payload);
        break;
      case MsgType::kChallengeConfirm:
        handle_challenge_confirm(src, ChallengeConfirmMsg::deserialize(payload));
        break;
      case MsgType::kShardTransferRequest:
        handle_shard_transfer_request(src, ShardTransferRequestMsg::deserialize(payload));
        break;
      case MsgType::kShardTransferData:
        handle_shard_transfer_data(src, ShardTransferDataMsg::deserialize(payload));
        break;
      default:
        break;
    }
  }

  void on_timer(TimerKind kind, std::uint64_t, std::uint64_t) {
    if (kind == TimerKind::kReconfigFallback) {
      fallback_fired_ = true;
      ensure_obligations();
    }
  }

  /// Exposed for collusion bypasses: corrupted peers may be served ignoring
  /// the availability and challenge gates.
  void handle_recovery_symbol_request(const PartyId& src, const RecoverySymbolRequestMsg& req,
                                      bool bypass_gates) {
    RecoverySymbolResponseMsg resp;
    resp.blob_id = req.blob_id;
    resp.target_shard = req.target_shard;
    resp.target_dimension = req.target_dimension;
    auto it = store_.find(req.blob_id);
    if (!bypass_gates) {
      if (it != store_.end() && it->second.invalid) {
        resp.refusal = Refusal::kInvalidBlob;
        resp.evidence_seq = it->second.evidence_seq;
        host_->send(src, MsgType::kRecoverySymbolResponse, resp.serialize());
        return;
      }
      if (!host_->chain().read_certificate(req.blob_id)) {
        resp.refusal = Refusal::kNoCertificate;
        host_->send(src, MsgType::kRecoverySymbolResponse, resp.serialize());
        return;
      }
      if (challenge_blocks_reads(req.blob_id)) {
        resp.refusal = Refusal::kChallengeRunning;
        host_->send(src, MsgType::kRecoverySymbolResponse, resp.serialize());
        return;
      }
    }
    if (it == store_.end() || !it->second.metadata) {
      resp.refusal = Refusal::kNotHolding;
      pending_symbol_requests_[req.blob_id].insert(
          {src, req.target_shard, static_cast<std::uint8_t>(req.target_dimension)});
      host_->send(src, MsgType::kRecoverySymbolResponse, resp.serialize());
      return;
    }
    EncodingConfig cfg = it->second.metadata->config();
    if (req.target_shard >= cfg.n_shards) {
      resp.refusal = Refusal::kWrongShard;
      host_->send(src, MsgType::kRecoverySymbolResponse, resp.serialize());
      return;
    }
    for (const auto& [shard, pair] : it->second.pairs) {
      if (req.target_dimension == Dimension::kSecondary && pair.primary)
        resp.proofs.push_back(prove_symbol(*pair.primary, req.target_shard, cfg));
      if (req.target_dimension == Dimension::kPrimary && pair.secondary)
        resp.proofs.push_back(prove_symbol(*pair.secondary, req.target_shard, cfg));
    }
    if (resp.proofs.empty()) {
      resp.refusal = Refusal::kNotHolding;
      pending_symbol_requests_[req.blob_id].insert(
          {src, req.target_shard, static_cast<std::uint8_t>(req.target_dimension)});
    }
    host_->send(src, MsgType::kRecoverySymbolResponse, resp.serialize());
  }

 private:
  // -- committee helpers ------------------------------------------------------

  std::vector<std::uint32_t> my_shards(Epoch e) const {
    if (!host_->chain().has_committee(e)) return {};
    return host_->chain().committee(e).shards_of(host_->self());
  }
  bool member_of(Epoch e) const {
    return host_->chain().has_committee(e) &&
           host_->chain().committee(e).has_member(host_->self());
  }
  std::set<PartyId> peers(Epoch e) const { return host_->chain().committee(e).members(); }

  // -- store path -------------------------------------------------------------

  void handle_store_request(const PartyId& src, const StoreRequestMsg& req) {
    auto refuse = [&](Refusal why) {
      StoreResponseMsg resp{req.blob_id, req.epoch, why, {}};
      host_->send(src, MsgType::kStoreResponse, resp.serialize());
    };
    // Check 1: the node is responsible for exactly these shards.
    if (!host_->chain().epoch_live(req.epoch)) return refuse(Refusal::kEpochMismatch);
    auto mine = my_shards(req.epoch);
    std::set<std::uint32_t> mine_set(mine.begin(), mine.end());
    if (req.pairs.empty()) return refuse(Refusal::kWrongShard);
    for (const auto& p : req.pairs)
      if (!mine_set.contains(p.index)) return refuse(Refusal::kWrongShard);
    // Check 2: the blob id is registered on chain.
    auto reg = host_->chain().registration(req.blob_id);
    if (!reg) return refuse(Refusal::kUnregistered);
    if (reg->registered_epoch != req.epoch) return refuse(Refusal::kEpochMismatch);
    // Check 3: metadata is well formed, re-derives the id, commits the slivers.
    BlobMetadata metadata;
    EncodingConfig cfg;
    try {
      metadata = BlobMetadata::deserialize(req.metadata);
      cfg = metadata.config();
    } catch (const DecodeError&) {
      return refuse(Refusal::kIdMismatch);
    } catch (const CodecError&) {
      return refuse(Refusal::kIdMismatch);
    }
    if (make_blob_id(metadata) != req.blob_id) return refuse(Refusal::kIdMismatch);
    if (metadata.epoch_written != reg->registered_epoch) return refuse(Refusal::kEpochMismatch);
    if (cfg.n_shards != host_->chain().committee(req.epoch).n_shards())
      return refuse(Refusal::kIdMismatch);
    try {
      for (const auto& p : req.pairs) {
        if (commit_sliver(p.primary, cfg).root != metadata.primary_roots[p.index])
          return refuse(Refusal::kCommitmentMismatch);
        if (commit_sliver(p.secondary, cfg).root != metadata.secondary_roots[p.index])
          return refuse(Refusal::kCommitmentMismatch);
      }
    } catch (const CodecError&) {
      return refuse(Refusal::kCommitmentMismatch);
    }

    auto& blob = store_[req.blob_id];
    blob.metadata = metadata;
    for (const auto& p : req.pairs) {
      blob.pairs[p.index].primary = p.primary;
      blob.pairs[p.index].secondary = p.secondary;
    }
    host_->note("stored-pairs", &req.blob_id);
    serve_pending(req.blob_id);
    StoreResponseMsg resp{req.blob_id, req.epoch, Refusal::kNone,
                          host_->sign(store_ack_preimage(req.blob_id, req.epoch))};
    host_->send(src, MsgType::kStoreResponse, resp.serialize());
    check_ready();
  }

  // -- serving ----------------------------------------------------------------

  void handle_metadata_request(const PartyId& src, const MetadataRequestMsg& req) {
    MetadataResponseMsg resp;
    resp.blob_id = req.blob_id;
    auto it = store_.find(req.blob_id);
    if (it != store_.end() && it->second.invalid) {
      resp.refusal = Refusal::kInvalidBlob;
      resp.evidence_seq = it->second.evidence_seq;
    } else if (it == store_.end() || !it->second.metadata) {
      resp.refusal = Refusal::kUnknownBlob;
      pending_metadata_requests_[req.blob_id].insert(src);
    } else {
      EncodingConfig cfg = it->second.metadata->config();
      auto shards = encode_metadata(*it->second.metadata, cfg);
      std::set<std::uint32_t> mine;
      for (Epoch e : live_epochs())
        for (auto s : my_shards(e)) mine.insert(s);
      for (auto s : mine)
        if (s < shards.size()) resp.shards.push_back(shards[s]);
      if (resp.shards.empty()) resp.refusal = Refusal::kNotHolding;
    }
    host_->send(src, MsgType::kMetadataResponse, resp.serialize());
  }

  void handle_sliver_request(const PartyId& src, const SliverRequestMsg& req) {
    SliverResponseMsg resp;
    resp.blob_id = req.blob_id;
    resp.dimension = req.dimension;
    auto it = store_.find(req.blob_id);
    if (it != store_.end() && it->second.invalid) {
      resp.refusal = Refusal::kInvalidBlob;
      resp.evidence_seq = it->second.evidence_seq;
    } else if (!host_->chain().read_certificate(req.blob_id)) {
      resp.refusal = Refusal::kNoCertificate;
    } else if (challenge_blocks_reads(req.blob_id)) {
      resp.refusal = Refusal::kChallengeRunning;
    } else if (req.dimension == Dimension::kPrimary && !options_.allow_primary_reads) {
      resp.refusal = Refusal::kPrimaryDisabled;
    } else if (it == store_.end()) {
      resp.refusal = Refusal::kNotHolding;
    } else {
      for (const auto& [shard, pair] : it->second.pairs) {
        if (req.dimension == Dimension::kSecondary && pair.secondary)
          resp.slivers.emplace_back(shard, pair.secondary->symbols);
        if (req.dimension == Dimension::kPrimary && pair.primary)
          resp.slivers.emplace_back(shard, pair.primary->symbols);
      }
      if (resp.slivers.empty()) {
        resp.refusal = Refusal::kNotHolding;
        pending_sliver_requests_[req.blob_id].insert(
            {src, static_cast<std::uint8_t>(req.dimension)});
      }
    }
    if (resp.refusal == Refusal::kNotHolding && it == store_.end())
      pending_sliver_requests_[req.blob_id].insert(
          {src, static_cast<std::uint8_t>(req.dimension)});
    host_->send(src, MsgType::kSliverResponse, resp.serialize());
  }

  /// Requests refused with kNotHolding are remembered and served as soon as
  /// the data arrives: recovering nodes re-serve from recovered secondaries,
  /// and stalled readers get their slivers pushed.
  void serve_pending(const BlobId& id) {
    auto blob_it = store_.find(id);
    if (blob_it == store_.end() || !blob_it->second.metadata || challenge_blocks_reads(id)) return;
    if (auto mit = pending_metadata_requests_.find(id); mit != pending_metadata_requests_.end()) {
      auto requesters = std::move(mit->second);
      pending_metadata_requests_.erase(mit);
      for (const auto& requester : requesters)
        handle_metadata_request(requester, MetadataRequestMsg{id});
    }
    if (auto sit = pending_sliver_requests_.find(id); sit != pending_sliver_requests_.end()) {
      auto requesters = std::move(sit->second);
      pending_sliver_requests_.erase(sit);
      for (const auto& [requester, dim] : requesters)
        handle_sliver_request(requester, SliverRequestMsg{id, static_cast<Dimension>(dim)});
    }
    auto it = pending_symbol_requests_.find(id);
    if (it == pending_symbol_requests_.end()) return;
    auto blob = store_.find(id);
    EncodingConfig cfg = blob->second.metadata->config();
    auto pending = std::move(it->second);
    pending_symbol_requests_.erase(it);
    for (const auto& [requester, target, dim_raw] : pending) {
      Dimension dim = static_cast<Dimension>(dim_raw);
      RecoverySymbolResponseMsg resp;
      resp.blob_id = id;
      resp.target_shard = target;
      resp.target_dimension = dim;
      for (const auto& [shard, pair] : blob->second.pairs) {
        if (dim == Dimension::kSecondary && pair.primary)
          resp.proofs.push_back(prove_symbol(*pair.primary, target, cfg));
        if (dim == Dimension::kPrimary && pair.secondary)
          resp.proofs.push_back(prove_symbol(*pair.secondary, target, cfg));
      }
      if (resp.proofs.empty()) {
        pending_symbol_requests_[id].insert({requester, target, dim_raw});
        continue;
      }
      host_->send(requester, MsgType::kRecoverySymbolResponse, resp.serialize());
    }
  }

  // -- recovery ---------------------------------------------------------------

  struct RecoveryTask {
    std::map<std::uint32_t, SymbolProof> column;  // row -> opening of E(row, shard)
    std::map<std::uint32_t, SymbolProof> row;     // col -> opening of E(shard, col)
    bool secondary_done = false;
    bool done = false;
    bool failed = false;
  };

  std::vector<Epoch> live_epochs() const {
    std::vector<Epoch> out{host_->chain().current_epoch()};
    if (host_->chain().phase() == EpochPhase::kReconfiguring)
      out.push_back(host_->chain().current_epoch() + 1);
    return out;
  }

  /// Start or refresh recovery tasks for every certified blob the node is
  /// obligated to hold but does not.
  void ensure_obligations() {
    if (challenge_entered()) return;  // resumes when the phase ends
    const Chain& chain = host_->chain();
    auto certified = chain.certified_blobs_as_of(chain.seq());
    for (const auto& id : certified) {
      auto reg = chain.registration(id);
      if (!reg) continue;
      Epoch source = chain.read_epoch_for(reg->registered_epoch);
      std::set<std::uint32_t> obliged;
      for (auto s : my_shards(source)) obliged.insert(s);
      if (chain.phase() == EpochPhase::kReconfiguring)
        for (auto s : my_shards(chain.current_epoch() + 1)) obliged.insert(s);
      if (obliged.empty()) continue;
      auto& blob = store_[id];
      if (blob.invalid) continue;
      for (auto shard : obliged) {
        if (blob.pairs.contains(shard) && blob.pairs.at(shard).complete()) continue;
        bool old_blob = chain.phase() == EpochPhase::kReconfiguring &&
                        reg->registered_epoch != chain.current_epoch() + 1;
        bool awaiting_transfer = old_blob && transfer_pending_.contains(shard) && !fallback_fired_;
        if (awaiting_transfer) continue;  // cooperative path first
        start_recovery(id, shard, source);
      }
    }
  }

  void start_recovery(const BlobId& id, std::uint32_t shard, Epoch source) {
    if (options_.full_read_recovery) {
      start_full_read_recovery(id, source);
      return;
    }
    auto& task = recovery_[id][shard];
    if (task.done || task.failed) return;
    if (!store_[id].metadata) {
      request_metadata(id, source);
      return;
    }
    host_->note("recovering", &id);
    harvest_local_symbols(id, shard);
    if (!task.secondary_done) {
      RecoverySymbolRequestMsg req{id, shard, Dimension::kSecondary};
      for (const auto& p : peers(source))
        if (p != host_->self()) host_->send(p, MsgType::kRecoverySymbolRequest, req.serialize());
      try_finish_secondary(id, shard);
    } else {
      RecoverySymbolRequestMsg req{id, shard, Dimension::kPrimary};
      for (const auto& p : peers(source))
        if (p != host_->self()) host_->send(p, MsgType::kRecoverySymbolRequest, req.serialize());
      try_finish_primary(id, shard);
    }
  }

  void request_metadata(const BlobId& id, Epoch source) {
    if (metadata_requested_.contains(id)) return;
    metadata_requested_.insert(id);
    MetadataRequestMsg req{id};
    for (const auto& p : peers(source))
      if (p != host_->self()) host_->send(p, MsgType::kMetadataRequest, req.serialize());
  }

  /// Symbols derivable from slivers this node already holds cost no traffic.
  void harvest_local_symbols(const BlobId& id, std::uint32_t shard) {
    auto& blob = store_[id];
    if (!blob.metadata) return;
    EncodingConfig cfg = blob.metadata->config();
    auto& task = recovery_[id][shard];
    for (const auto& [s, pair] : blob.pairs) {
      if (pair.primary && !task.column.contains(s)) {
        auto proof = prove_symbol(*pair.primary, shard, cfg);
        if (verify_symbol(proof, *blob.metadata)) task.column.emplace(s, std::move(proof));
      }
      if (pair.secondary && !task.row.contains(s)) {
        auto proof = prove_symbol(*pair.secondary, shard, cfg);
        if (verify_symbol(proof, *blob.metadata)) task.row.emplace(s, std::move(proof));
      }
    }
  }

  void handle_metadata_response(const PartyId& src, const MetadataResponseMsg& resp,
                                std::size_t payload_size) {
    if (resp.refusal != Refusal::kNone && resp.refusal != Refusal::kNotHolding) return;
    if (store_[resp.blob_id].metadata) return;
    if (!is_recovering(resp.blob_id)) return;
    recovery_bytes_[resp.blob_id] += payload_size;
    auto& collected = metadata_shards_[resp.blob_id];
    for (const auto& s : resp.shards) collected.emplace(s.shard_index, s);
    const Chain& chain = host_->chain();
    EncodingConfig probe = EncodingConfig::make(
        chain.committee(chain.current_epoch()).fault_bound(), 2);
    std::vector<MetadataShard> shards;
    for (const auto& [idx, s] : collected) shards.push_back(s);
    auto metadata = decode_metadata(shards, probe, resp.blob_id);
    if (!metadata) return;
    store_[resp.blob_id].metadata = *metadata;
    metadata_shards_.erase(resp.blob_id);
    host_->note("metadata-recovered", &resp.blob_id);
    ensure_obligations();
    serve_pending(resp.blob_id);
  }

  bool is_recovering(const BlobId& id) const {
    if (full_read_active_.contains(id)) return true;
    auto it = recovery_.find(id);
    if (it != recovery_.end())
      for (const auto& [shard, task] : it->second)
        if (!task.done && !task.failed) return true;
    return metadata_requested_.contains(id) && !store_.contains(id);
  }

  void handle_recovery_symbol_response(const PartyId&, const RecoverySymbolResponseMsg& resp,
                                       std::size_t payload_size) {
    auto rec = recovery_.find(resp.blob_id);
    if (rec == recovery_.end()) return;
    auto task_it = rec->second.find(resp.target_shard);
    if (task_it == rec->second.end()) return;
    auto& task = task_it->second;
    if (task.done || task.failed) return;
    const auto* metadata = metadata_of(resp.blob_id);
    if (!metadata) return;
    recovery_bytes_[resp.blob_id] += payload_size;
    for (const auto& proof : resp.proofs) {
      if (!verify_symbol(proof, *metadata)) continue;
      if (resp.target_dimension == Dimension::kSecondary &&
          proof.symbol.origin == Dimension::kPrimary && proof.symbol.col == resp.target_shard) {
        task.column.emplace(proof.symbol.row, proof);
      }
      if (resp.target_dimension == Dimension::kPrimary &&
          proof.symbol.origin == Dimension::kSecondary && proof.symbol.row == resp.target_shard) {
        task.row.emplace(proof.symbol.col, proof);
      }
    }
    if (resp.target_dimension == Dimension::kSecondary)
      try_finish_secondary(resp.blob_id, resp.target_shard);
    else
      try_finish_primary(resp.blob_id, resp.target_shard);
  }

  void try_finish_secondary(const BlobId& id, std::uint32_t shard) {
    auto& task = recovery_[id][shard];
    if (task.secondary_done || task.done || task.failed) return;
    const auto* metadata = metadata_of(id);
    if (!metadata) return;
    EncodingConfig cfg = metadata->config();
    if (task.column.size() < cfg.secondary_sliver_len()) return;
    std::vector<IntersectionSymbol> subset;
    for (const auto& [row, proof] : task.column) {
      subset.push_back(proof.symbol);
      if (subset.size() == cfg.secondary_sliver_len()) break;
    }
    auto sliver = recover_secondary(subset, shard, cfg);
    if (commit_sliver(sliver, cfg).root != metadata->secondary_roots[shard]) {
      emit_inconsistency(id, shard, Dimension::kSecondary, task.column);
      task.failed = true;
      return;
    }
    store_[id].pairs[shard].secondary = sliver;
    task.secondary_done = true;
    host_->note("recovered-secondary", &id);
    serve_pending(id);
    // the freshly recovered sliver contributes one row symbol for free
    auto self_proof = prove_symbol(sliver, shard, cfg);
    if (verify_symbol(self_proof, *metadata)) task.row.emplace(shard, std::move(self_proof));
    RecoverySymbolRequestMsg req{id, shard, Dimension::kPrimary};
    Epoch source = host_->chain().read_epoch_for(metadata->epoch_written);
    for (const auto& p : peers(source))
      if (p != host_->self()) host_->send(p, MsgType::kRecoverySymbolRequest, req.serialize());
    try_finish_primary(id, shard);
    check_ready();
  }

  void try_finish_primary(const BlobId& id, std::uint32_t shard) {
    auto& task = recovery_[id][shard];
    if (task.done || task.failed) return;
    const auto* metadata = metadata_of(id);
    if (!metadata) return;
    EncodingConfig cfg = metadata->config();
    if (task.row.size() < cfg.primary_sliver_len()) return;
    std::vector<IntersectionSymbol> subset;
    for (const auto& [col, proof] : task.row) {
      subset.push_back(proof.symbol);
      if (subset.size() == cfg.primary_sliver_len()) break;
    }
    auto sliver = recover_primary(subset, shard, cfg);
    if (commit_sliver(sliver, cfg).root != metadata->primary_roots[shard]) {
      emit_inconsistency(id, shard, Dimension::kPrimary, task.row);
      task.failed = true;
      return;
    }
    store_[id].pairs[shard].primary = sliver;
    task.done = true;
    host_->note("recovered-pair", &id);
    serve_pending(id);
    check_ready();
  }

  void emit_inconsistency(const BlobId& id, std::uint32_t shard, Dimension dim,
                          const std::map<std::uint32_t, SymbolProof>& collected) {
    InconsistencyProof proof;
    proof.blob_id = id;
    proof.target_index = shard;
    proof.target_dimension = dim;
    for (const auto& [idx, p] : collected) proof.symbols.push_back(p);
    host_->note("inconsistency-detected", &id);
    const auto* metadata = metadata_of(id);
    if (!metadata || !verify_inconsistency(proof, *metadata)) return;
    Bytes payload = proof.serialize();
    for (Epoch e : live_epochs())
      for (const auto& p : peers(e))
        if (p != host_->self()) host_->send(p, MsgType::kInconsistencyProof, payload);
    attest(id);
  }

  void attest(const BlobId& id) {
    if (attested_.contains(id)) return;
    attested_.insert(id);
    host_->submit_tx(tx_attest(id, host_->self(), host_->sign(attestation_preimage(id))));
    host_->note("attested-inconsistency", &id);
  }

  void handle_inconsistency_proof(const PartyId&, const InconsistencyProof& proof) {
    if (host_->chain().is_invalid(proof.blob_id)) return;
    const auto* metadata = metadata_of(proof.blob_id);
    if (!metadata) return;
    if (verify_inconsistency(proof, *metadata)) attest(proof.blob_id);
  }

  // -- full-read recovery baseline ---------------------------------------------

  void start_full_read_recovery(const BlobId& id, Epoch source) {
    auto& blob = store_[id];
    std::set<std::uint32_t> needed;
    for (Epoch e : live_epochs())
      for (auto s : my_shards(e))
        if (!blob.pairs.contains(s) || !blob.pairs.at(s).complete()) needed.insert(s);
    if (needed.empty()) return;
    if (full_read_active_.insert(id).second) host_->note("recovering-full-read", &id);
    if (!blob.metadata) {
      request_metadata(id, source);
      return;
    }
    if (!full_read_requested_.insert(id).second) return;
    SliverRequestMsg req{id, Dimension::kSecondary};
    for (const auto& p : peers(source))
      if (p != host_->self()) host_->send(p, MsgType::kSliverRequest, req.serialize());
  }

  void handle_sliver_response(const PartyId&, const SliverResponseMsg& resp,
                              std::size_t payload_size) {
    if (!full_read_active_.contains(resp.blob_id)) return;
    auto& blob = store_[resp.blob_id];
    if (!blob.metadata) return;
    recovery_bytes_[resp.blob_id] += payload_size;
    if (resp.refusal != Refusal::kNone || resp.dimension != Dimension::kSecondary) return;
    EncodingConfig cfg = blob.metadata->config();
    for (const auto& [shard, symbols] : resp.slivers) {
      if (shard >= cfg.n_shards || full_read_slivers_[resp.blob_id].contains(shard)) continue;
      SecondarySliver sliver{shard, symbols};
      try {
        if (commit_sliver(sliver, cfg).root != blob.metadata->secondary_roots[shard]) continue;
      } catch (const CodecError&) {
        continue;
      }
      full_read_slivers_[resp.blob_id].emplace(shard, std::move(sliver));
    }
    auto& collected = full_read_slivers_[resp.blob_id];
    if (collected.size() < cfg.primary_sliver_len()) return;
    std::vector<SecondarySliver> subset;
    for (const auto& [shard, sliver] : collected) {
      subset.push_back(sliver);
      if (subset.size() == cfg.primary_sliver_len()) break;
    }
    auto grid = decode_from_secondary(subset, cfg);
    auto pairs = encode_matrix(grid);
    auto re_meta = make_metadata(pairs, blob.metadata->blob_len, cfg, blob.metadata->epoch_written);
    if (make_blob_id(re_meta) != resp.blob_id) {
      host_->note("inconsistency-detected", &resp.blob_id);
      full_read_active_.erase(resp.blob_id);
      full_read_requested_.erase(resp.blob_id);
      full_read_slivers_.erase(resp.blob_id);
      return;
    }
    for (Epoch e : live_epochs())
      for (auto s : my_shards(e)) {
        blob.pairs[s].primary = pairs[s].primary;
        blob.pairs[s].secondary = pairs[s].secondary;
      }
    full_read_active_.erase(resp.blob_id);
    full_read_requested_.erase(resp.blob_id);
    full_read_slivers_.erase(resp.blob_id);
    host_->note("recovered-full-read", &resp.blob_id);
    serve_pending(resp.blob_id);
    check_ready();
  }

  // -- reconfiguration ----------------------------------------------------------

  void on_reconfig_started() {
    const Chain& chain = host_->chain();
    Epoch next = chain.current_epoch() + 1;
    fallback_fired_ = false;
    ready_sent_ = false;
    transfer_pending_.clear();
    if (!member_of(next)) return;
    const auto& old_committee = chain.committee(chain.current_epoch());
    for (auto shard : my_shards(next)) {
      const PartyId& old_owner = old_committee.assignment[shard];
      if (old_owner == host_->self()) continue;
      transfer_pending_.insert(shard);
      ShardTransferRequestMsg req{shard, next};
      host_->send(old_owner, MsgType::kShardTransferRequest, req.serialize());
    }
    if (!transfer_pending_.empty())
      host_->schedule(options_.reconfig_fallback_delay, TimerKind::kReconfigFallback, 0, 0);
    check_ready();
  }

  void handle_shard_transfer_request(const PartyId& src, const ShardTransferRequestMsg& req) {
    ShardTransferDataMsg resp;
    resp.shard = req.shard;
    const Chain& chain = host_->chain();
    if (chain.phase() != EpochPhase::kReconfiguring ||
        !chain.committee(req.epoch).has_member(src)) {
      resp.refusal = Refusal::kWrongShard;
      host_->send(src, MsgType::kShardTransferData, resp.serialize());
      return;
    }
    for (const auto& id : chain.certified_blobs_as_of(chain.seq())) {
      auto it = store_.find(id);
      if (it == store_.end() || !it->second.metadata) continue;
      auto pair = it->second.pairs.find(req.shard);
      if (pair == it->second.pairs.end() || !pair->second.complete()) continue;
      resp.blobs.emplace_back(id, it->second.metadata->serialize(),
                              SliverPair{req.shard, *pair->second.primary,
                                         *pair->second.secondary});
    }
    host_->send(src, MsgType::kShardTransferData, resp.serialize());
  }

  void handle_shard_transfer_data(const PartyId& src, const ShardTransferDataMsg& resp) {
    if (!transfer_pending_.contains(resp.shard)) return;
    if (resp.refusal != Refusal::kNone) return;  // fallback recovery will cover
    const Chain& chain = host_->chain();
    // Verify every entry before attesting possession; one bad entry rejects
    // the whole transfer and the recovery pathway takes over.
    std::vector<std::tuple<BlobId, BlobMetadata, SliverPair>> verified;
    for (const auto& [id, meta_bytes, pair] : resp.blobs) {
      if (!chain.read_certificate(id)) return reject_transfer(src, resp.shard);
      try {
        BlobMetadata metadata = BlobMetadata::deserialize(meta_bytes);
        EncodingConfig cfg = metadata.config();
        if (make_blob_id(metadata) != id) return reject_transfer(src, resp.shard);
        if (pair.index != resp.shard) return reject_transfer(src, resp.shard);
        if (commit_sliver(pair.primary, cfg).root != metadata.primary_roots[resp.shard])
          return reject_transfer(src, resp.shard);
        if (commit_sliver(pair.secondary, cfg).root != metadata.secondary_roots[resp.shard])
          return reject_transfer(src, resp.shard);
        verified.emplace_back(id, std::move(metadata), pair);
      } catch (const DecodeError&) {
        return reject_transfer(src, resp.shard);
      } catch (const CodecError&) {
        return reject_transfer(src, resp.shard);
      }
    }
    for (auto& [id, metadata, pair] : verified) {
      auto& blob = store_[id];
      if (!blob.metadata) blob.metadata = std::move(metadata);
      blob.pairs[resp.shard].primary = pair.primary;
      blob.pairs[resp.shard].secondary = pair.secondary;
      serve_pending(id);
    }
    transfer_pending_.erase(resp.shard);
    transferred_shards_.insert(resp.shard);
    host_->note("shard-transferred", nullptr);
    ensure_obligations();  // anything the sender lacked still needs recovery
    check_ready();
  }

  void reject_transfer(const PartyId&, std::uint32_t shard) {
    host_->note("shard-transfer-rejected", nullptr);
    transfer_pending_.erase(shard);
    fallback_fired_ = true;  // no point waiting; recover immediately
    ensure_obligations();
  }

  /// Signal readiness exactly once: every certified unexpired valid blob held
  /// for every shard owned in the incoming committee.
  void check_ready() {
    const Chain& chain = host_->chain();
    if (chain.phase() != EpochPhase::kReconfiguring || ready_sent_) return;
    Epoch next = chain.current_epoch() + 1;
    if (!member_of(next)) return;
    auto mine = my_shards(next);
    for (const auto& id : chain.certified_blobs_as_of(chain.seq())) {
      auto it = store_.find(id);
      if (it == store_.end()) return;
      if (it->second.invalid) continue;
      for (auto shard : mine) {
        auto p = it->second.pairs.find(shard);
        if (p == it->second.pairs.end() || !p->second.complete()) return;
      }
    }
    ready_sent_ = true;
    host_->submit_tx(
        tx_ready(host_->self(), host_->sign(ready_signal_preimage(next, host_->self()))));
    host_->note("ready-signaled", nullptr);
  }

  void on_epoch_completed() {
    transfer_pending_.clear();
    fallback_fired_ = false;
    ready_sent_ = false;
    // re-issue in the new epoch: messages may have been dropped at the boundary
    for (auto& [id, tasks] : recovery_)
      for (auto& [shard, task] : tasks)
        if (!task.done && !task.failed) restart_requests(id, shard, task);
  }

  void restart_requests(const BlobId& id, std::uint32_t shard, RecoveryTask& task) {
    const auto* metadata = metadata_of(id);
    Epoch source = host_->chain().current_epoch();
    if (metadata) source = host_->chain().read_epoch_for(metadata->epoch_written);
    if (!metadata) {
      metadata_requested_.erase(id);
      request_metadata(id, source);
      return;
    }
    RecoverySymbolRequestMsg req{
        id, shard, task.secondary_done ? Dimension::kPrimary : Dimension::kSecondary};
    for (const auto& p : peers(source))
      if (p != host_->self()) host_->send(p, MsgType::kRecoverySymbolRequest, req.serialize());
  }

  // -- challenges ----------------------------------------------------------------

  struct ChallengeState {
    Epoch epoch = 0;
    std::uint64_t k = 0;
    Digest coin{};
    Digest set_digest{};
    std::vector<BlobId> universe;
    std::set<BlobId> blocked;  // union of all members' challenged sets
    bool entered = false;
    bool open = false;
    bool proved = false;
    bool certificate_submitted = false;
    bool finished = false;
    std::set<PartyId> acks;
    std::map<PartyId, Signature> confirms;
    std::deque<std::pair<PartyId, Bytes>> queued_proves;
  };

  void on_challenge_started() {
    const Chain& chain = host_->chain();
    if (!member_of(chain.current_epoch())) return;
    ChallengeState st;
    st.epoch = chain.current_epoch();
    st.k = chain.challenge_k().value_or(0);
    std::uint64_t anchor = chain.challenge_anchor_seq().value_or(chain.seq());
    st.universe = chain.certified_blobs_as_of(anchor);
    st.coin = challenge_coin(options_.coin_seed, st.epoch);
    st.set_digest = challenge_set_digest(st.coin, st.epoch, st.k, st.universe);
    if (chal_ && chal_->epoch == st.epoch && chal_->entered) return;
    std::set<PartyId> earlier_acks;
    std::deque<std::pair<PartyId, Bytes>> earlier_proves;
    if (chal_ && chal_->epoch == st.epoch) {
      // acks and prove messages can arrive before the start event is observed
      earlier_acks = chal_->acks;
      earlier_proves = std::move(chal_->queued_proves);
    }
    chal_ = std::move(st);
    chal_->acks = std::move(earlier_acks);
    chal_->queued_proves = std::move(earlier_proves);
    enter_challenge();
  }

  void enter_challenge() {
    chal_->entered = true;
    chal_->acks.insert(host_->self());
    host_->note("challenge-entered", nullptr);
    ChallengeEnteredMsg msg{chal_->epoch};
    for (const auto& p : peers(chal_->epoch))
      if (p != host_->self()) host_->send(p, MsgType::kChallengeEntered, msg.serialize());
    try_open_challenge();
  }

  void handle_challenge_entered(const PartyId& src, const ChallengeEnteredMsg& msg) {
    if (chal_ && chal_->finished) return;
    if (!chal_) {
      // start event not observed yet; remember the ack
      ChallengeState st;
      st.epoch = msg.epoch;
      chal_ = std::move(st);
    }
    if (msg.epoch != chal_->epoch) return;
    chal_->acks.insert(src);
    try_open_challenge();
  }

  void try_open_challenge() {
    if (!chal_ || chal_->open || !chal_->entered) return;
    const Chain& chain = host_->chain();
    const auto& committee = chain.committee(chal_->epoch);
    if (committee.weight_of(chal_->acks) < 2 * committee.fault_bound() + 1) return;
    chal_->open = true;
    for (const auto& member : committee.members()) {
      auto set = select_challenged_blobs(chal_->coin, member, chal_->k, chal_->universe);
      chal_->blocked.insert(set.begin(), set.end());
    }
    host_->note("challenge-open", nullptr);
    run_prover();
    auto queued = std::move(chal_->queued_proves);
    for (auto& [src, payload] : queued) handle_challenge_prove(src, payload);
  }

  /// Send every verifier the common symbols for each challenged blob: the
  /// prover's expanded primary sliver evaluated at the verifier's shards.
  void run_prover() {
    if (chal_->proved) return;
    chal_->proved = true;
    auto challenged =
        select_challenged_blobs(chal_->coin, host_->self(), chal_->k, chal_->universe);
    for (const auto& v : peers(chal_->epoch)) {
      ChallengeProveMsg msg;
      msg.epoch = chal_->epoch;
      msg.set_digest = chal_->set_digest;
      auto verifier_shards = host_->chain().committee(chal_->epoch).shards_of(v);
      for (const auto& id : challenged) {
        std::vector<SymbolProof> proofs;
        auto it = store_.find(id);
        if (it != store_.end() && it->second.metadata) {
          EncodingConfig cfg = it->second.metadata->config();
          for (const auto& [shard, pair] : it->second.pairs) {
            if (!pair.primary) continue;
            for (auto sv : verifier_shards) proofs.push_back(prove_symbol(*pair.primary, sv, cfg));
          }
        }
        msg.blobs.emplace_back(id, std::move(proofs));
      }
      if (v == host_->self()) {
        chal_->confirms[host_->self()] = host_->sign(
            challenge_confirm_preimage(chal_->epoch, host_->self(), chal_->set_digest));
        maybe_submit_challenge_certificate();
      } else {
        host_->send(v, MsgType::kChallengeProve, msg.serialize());
      }
    }
  }

  void handle_challenge_prove(const PartyId& src, const Bytes& payload) {
    auto msg = ChallengeProveMsg::deserialize(payload);
    if (!chal_) {
      // the start event has not reached this node yet
      ChallengeState st;
      st.epoch = msg.epoch;
      chal_ = std::move(st);
    }
    if (chal_->finished || msg.epoch != chal_->epoch) return;
    if (!chal_->entered || !chal_->open) {
      chal_->queued_proves.emplace_back(src, payload);
      return;
    }
    if (msg.set_digest != chal_->set_digest) return;
    const auto& committee = host_->chain().committee(chal_->epoch);
    if (!committee.has_member(src)) return;
    auto expected = select_challenged_blobs(chal_->coin, src, chal_->k, chal_->universe);
    auto prover_shards = committee.shards_of(src);
    auto my = my_shards(chal_->epoch);
    if (msg.blobs.size() != expected.size()) return;
    bool all_good = true;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto& [id, proofs] = msg.blobs[i];
      bool good = id == expected[i];
      const auto* metadata = good ? metadata_of(id) : nullptr;
      if (!metadata) good = false;
      if (good) {
        for (auto sp : prover_shards) {
          for (auto sv : my) {
            bool found = false;
            for (const auto& proof : proofs) {
              if (proof.symbol.origin == Dimension::kPrimary && proof.symbol.row == sp &&
                  proof.symbol.col == sv && verify_symbol(proof, *metadata)) {
                found = true;
                break;
              }
            }
            if (!found) {
              good = false;
              break;
            }
          }
          if (!good) break;
        }
      }
      host_->challenge_note(src, host_->self(), expected[i], good ? "verified" : "rejected");
      all_good = all_good && good;
    }
    if (!all_good) return;
    ChallengeConfirmMsg confirm;
    confirm.epoch = chal_->epoch;
    confirm.prover = src;
    confirm.set_digest = chal_->set_digest;
    confirm.signature =
        host_->sign(challenge_confirm_preimage(chal_->epoch, src, chal_->set_digest));
    host_->send(src, MsgType::kChallengeConfirm, confirm.serialize());
  }

  void handle_challenge_confirm(const PartyId& src, const ChallengeConfirmMsg& msg) {
    if (!chal_ || chal_->finished || msg.epoch != chal_->epoch) return;
    if (msg.prover != host_->self() || msg.set_digest != chal_->set_digest) return;
    if (!host_->registry().verify(
            src, challenge_confirm_preimage(chal_->epoch, host_->self(), chal_->set_digest),
            msg.signature))
      return;
    chal_->confirms[src] = msg.signature;
    maybe_submit_challenge_certificate();
  }

  void maybe_submit_challenge_certificate() {
    if (chal_->certificate_submitted) return;
    const auto& committee = host_->chain().committee(chal_->epoch);
    std::set<PartyId> confirmers;
    for (const auto& [p, sig] : chal_->confirms) confirmers.insert(p);
    if (committee.weight_of(confirmers) < 2 * committee.fault_bound() + 1) return;
    ChallengeCertificate cert;
    cert.prover = host_->self();
    cert.epoch = chal_->epoch;
    cert.set_digest = chal_->set_digest;
    for (const auto& [p, sig] : chal_->confirms) cert.confirmations.emplace_back(p, sig);
    chal_->certificate_submitted = true;
    host_->submit_tx(tx_challenge_certificate(cert));
    host_->note("challenge-certified", nullptr);
  }

  void on_challenge_ended() {
    if (!chal_) return;
    chal_->finished = true;
    chal_.reset();
    host_->note("challenge-exited", nullptr);
    // resume suspended recovery work
    for (auto& [id, tasks] : recovery_)
      for (auto& [shard, task] : tasks)
        if (!task.done && !task.failed) restart_requests(id, shard, task);
    ensure_obligations();
  }

 private:
  ProtocolHost* host_;
  NodeOptions options_;

  std::map<BlobId, BlobStore> store_;
  std::map<BlobId, std::map<std::uint32_t, RecoveryTask>> recovery_;
  std::map<BlobId, std::map<std::uint32_t, MetadataShard>> metadata_shards_;
  std::set<BlobId> metadata_requested_;
  std::map<BlobId, std::set<std::tuple<PartyId, std::uint32_t, std::uint8_t>>>
      pending_symbol_requests_;
  std::map<BlobId, std::set<PartyId>> pending_metadata_requests_;
  std::map<BlobId, std::set<std::pair<PartyId, std::uint8_t>>> pending_sliver_requests_;
  std::map<BlobId, std::uint64_t> recovery_bytes_;
  std::set<BlobId> attested_;

  std::set<BlobId> full_read_active_;
  std::set<BlobId> full_read_requested_;
  std::map<BlobId, std::map<std::uint32_t, SecondarySliver>> full_read_slivers_;

  std::set<std::uint32_t> transfer_pending_;
  std::set<std::uint32_t> transferred_shards_;
  bool fallback_fired_ = false;
  bool ready_sent_ = false;

  std::optional<ChallengeState> chal_;
};

}  // namespace gridstore
