#pragma once

#include <map>
#include <optional>

#include "gridstore/host.hpp"
#include "gridstore/node.hpp"

namespace gridstore {

/// Construct an inconsistently encoded blob: primary slivers and their
/// commitments come from the true grid, secondary slivers and commitments
/// from a grid with one tampered column. Every per-node pair verifies against
/// its own commitments (so nodes ack), but the two dimensions disagree on E,
/// which read-time re-encoding and trial recovery expose.
inline std::pair<std::vector<SliverPair>, BlobMetadata> encode_blob_inconsistent(
    const Bytes& blob, const EncodingConfig& config, std::uint32_t column,
    std::uint64_t epoch_written) {
  auto grid = make_source_matrix(blob, config);
  auto honest = encode_matrix(grid);
  auto tampered_grid = grid;
  tampered_grid.cell(0, column)[0] ^= 0xff;
  auto tampered = encode_matrix(tampered_grid);

  std::vector<SliverPair> pairs(config.n_shards);
  BlobMetadata metadata;
  metadata.blob_len = blob.size();
  metadata.symbol_size = config.symbol_size;
  metadata.epoch_written = epoch_written;
  metadata.primary_roots.resize(config.n_shards);
  metadata.secondary_roots.resize(config.n_shards);
  for (std::uint32_t i = 0; i < config.n_shards; ++i) {
    pairs[i].index = i;
    pairs[i].primary = honest[i].primary;
    pairs[i].secondary = tampered[i].secondary;
    metadata.primary_roots[i] = commit_sliver(pairs[i].primary, config).root;
    metadata.secondary_roots[i] = commit_sliver(pairs[i].secondary, config).root;
  }
  return {std::move(pairs), std::move(metadata)};
}

struct WriteReceipt {
  BlobId blob_id{};
  bool certified = false;
  std::uint32_t acked_shards = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t started_step = 0;
};

struct ReadResult {
  enum class Outcome : std::uint8_t {
    kBlob = 0,
    kInconsistent = 1,
    kInvalidOnChain = 2,
    kUnavailable = 3,  // unknown or uncertified id
  };
  BlobId blob_id{};
  Outcome outcome = Outcome::kUnavailable;
  Bytes blob;
  std::uint32_t slivers_used = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t evidence_seq = 0;
};

inline const char* read_outcome_name(ReadResult::Outcome o) {
  switch (o) {
    case ReadResult::Outcome::kBlob: return "blob";
    case ReadResult::Outcome::kInconsistent: return "inconsistent";
    case ReadResult::Outcome::kInvalidOnChain: return "invalid-on-chain";
    case ReadResult::Outcome::kUnavailable: return "unavailable";
  }
  return "unknown";
}

struct ClientOptions {
  bool primary_reads = false;     // f+1 fast path instead of the 2f+1 default
  std::uint32_t symbol_size = 0;  // 0: derive from blob length
};

/// Per-store parameters; the inconsistent-writer knobs drive adversarial
/// fixtures.
struct StoreSpec {
  Epoch expiry_epoch = 0;
  std::uint32_t symbol_size = 0;  // 0: inherit client default / derive
  bool inconsistent = false;
  std::uint32_t inconsistent_column = 0;
  std::set<PartyId> withhold_nodes;  // nodes deliberately not sent their pairs
};

/// Writer/reader protocol driver. One client can run many flows; each flow is
/// a small state machine advanced by chain events and responses.
class Client {
 public:
  Client(ProtocolHost* host, ClientOptions options) : host_(host), options_(options) {}

  // -- writes -----------------------------------------------------------------

  /// Encode, register, disperse, certify. Returns the blob id immediately;
  /// completion is observable via receipt().
  BlobId store_blob(const Bytes& blob, const StoreSpec& spec, std::uint64_t now_step) {
    const Chain& chain = host_->chain();
    Epoch target = chain.write_target_epoch();
    const auto& committee = chain.committee(target);
    std::uint32_t symbol_size = spec.symbol_size ? spec.symbol_size : options_.symbol_size;
    if (symbol_size == 0)
      symbol_size = EncodingConfig::choose_symbol_size(blob.size(), committee.fault_bound());
    EncodingConfig cfg = EncodingConfig::make(committee.fault_bound(), symbol_size);

    StoreFlow flow;
    flow.expiry = spec.expiry_epoch;
    flow.receipt.started_step = now_step;
    if (spec.inconsistent) {
      auto [pairs, metadata] = encode_blob_inconsistent(blob, cfg, spec.inconsistent_column, target);
      flow.pairs = std::move(pairs);
      flow.metadata = std::move(metadata);
    } else {
      flow.pairs = encode_blob(blob, cfg);
      flow.metadata = make_metadata(flow.pairs, blob.size(), cfg, target);
    }
    flow.id = make_blob_id(flow.metadata);
    flow.receipt.blob_id = flow.id;
    flow.target_epoch = target;
    flow.withhold = spec.withhold_nodes;

    if (chain.read_certificate(flow.id)) {
      // duplicate store of an already-available blob: only the registration
      // is (idempotently) re-submitted
      flow.stage = StoreFlow::Stage::kDone;
      flow.receipt.certified = true;
    }
    host_->submit_tx(tx_reserve(flow.id, blob.size(), spec.expiry_epoch));
    BlobId id = flow.id;
    stores_.emplace(id, std::move(flow));
    host_->note("store-submitted", &id);
    return id;
  }

  const WriteReceipt* receipt(const BlobId& id) const {
    auto it = stores_.find(id);
    return it == stores_.end() ? nullptr : &it->second.receipt;
  }
  bool store_done(const BlobId& id) const {
    auto it = stores_.find(id);
    return it != stores_.end() && it->second.stage == StoreFlow::Stage::kDone;
  }

  // -- reads ------------------------------------------------------------------

  void read_blob(const BlobId& id) {
    if (reads_.contains(id)) return;
    ReadFlow flow;
    flow.id = id;
    flow.result.blob_id = id;
    reads_.emplace(id, std::move(flow));
    advance_read(reads_.at(id));
  }

  const ReadResult* read_result(const BlobId& id) const {
    auto it = reads_.find(id);
    if (it == reads_.end() || it->second.stage != ReadFlow::Stage::kDone) return nullptr;
    return &it->second.result;
  }

  // -- event plumbing -----------------------------------------------------------

  void on_chain_events(std::span<const ChainEvent> events) {
    for (const auto& e : events) {
      switch (e.kind) {
        case ChainEventKind::kRegistered:
          on_registered();
          break;
        case ChainEventKind::kCertified: {
          ByteReader r{std::span<const std::uint8_t>(e.payload)};
          auto cert = Certificate::deserialize(r);
          auto it = stores_.find(cert.blob_id);
          if (it != stores_.end() && it->second.stage == StoreFlow::Stage::kCertifying) {
            it->second.stage = StoreFlow::Stage::kDone;
            it->second.receipt.certified = true;
            host_->note("store-certified", &cert.blob_id);
          }
          auto rit = reads_.find(cert.blob_id);
          if (rit != reads_.end() && rit->second.stage == ReadFlow::Stage::kMetadata &&
              !rit->second.requested_metadata)
            advance_read(rit->second);
          break;
        }
        case ChainEventKind::kInvalidated: {
          ByteReader r{std::span<const std::uint8_t>(e.payload)};
          BlobId id = wire::get_digest(r);
          auto it = reads_.find(id);
          if (it != reads_.end() && it->second.stage != ReadFlow::Stage::kDone)
            finish_read(it->second, ReadResult::Outcome::kInvalidOnChain);
          break;
        }
        case ChainEventKind::kEpochCompleted:
        case ChainEventKind::kChallengeEnded:
          reissue_pending();
          break;
        default:
          break;
      }
    }
    // registrations may have landed before this client saw the event
    on_registered();
  }

  void on_message(const PartyId& src, MsgType type, const Bytes& payload) {
    switch (type) {
      case MsgType::kStoreResponse:
        handle_store_response(src, StoreResponseMsg::deserialize(payload));
        break;
      case MsgType::kMetadataResponse:
        handle_metadata_response(src, MetadataResponseMsg::deserialize(payload), payload.size());
        break;
      case MsgType::kSliverResponse:
        handle_sliver_response(src, SliverResponseMsg::deserialize(payload), payload.size());
        break;
      default:
        break;
    }
  }

  bool idle() const {
    for (const auto& [id, f] : stores_)
      if (f.stage != StoreFlow::Stage::kDone) return false;
    for (const auto& [id, f] : reads_)
      if (f.stage != ReadFlow::Stage::kDone) return false;
    return true;
  }

 private:
  struct StoreFlow {
    enum class Stage : std::uint8_t { kReserving, kDispersing, kCertifying, kDone };
    Stage stage = Stage::kReserving;
    BlobId id{};
    Epoch expiry = 0;
    Epoch target_epoch = 0;
    std::vector<SliverPair> pairs;
    BlobMetadata metadata;
    std::map<PartyId, Signature> acks;
    std::set<PartyId> withhold;
    WriteReceipt receipt;
  };

  struct ReadFlow {
    enum class Stage : std::uint8_t { kMetadata, kSlivers, kDone };
    Stage stage = Stage::kMetadata;
    BlobId id{};
    bool requested_metadata = false;
    bool requested_slivers = false;
    std::map<std::uint32_t, MetadataShard> shards;
    std::optional<BlobMetadata> metadata;
    std::map<std::uint32_t, std::vector<Bytes>> verified;  // shard -> sliver symbols
    ReadResult result;
  };

  void on_registered() {
    for (auto& [id, flow] : stores_) {
      if (flow.stage != StoreFlow::Stage::kReserving) continue;
      auto reg = host_->chain().registration(id);
      if (!reg) continue;
      flow.target_epoch = reg->registered_epoch;
      flow.metadata.epoch_written = reg->registered_epoch;
      disperse(flow);
    }
    for (auto& [id, flow] : reads_)
      if (flow.stage == ReadFlow::Stage::kMetadata && !flow.requested_metadata) advance_read(flow);
  }

  /// Fig-6 step 3: send every node its sliver pairs plus the full commitment
  /// metadata. `skip_acked` re-issues only what is still outstanding after a
  /// boundary drop.
  void disperse(StoreFlow& flow, bool skip_acked = false) {
    flow.stage = StoreFlow::Stage::kDispersing;
    const auto& committee = host_->chain().committee(flow.target_epoch);
    Bytes metadata_bytes = flow.metadata.serialize();
    std::set<PartyId> sent;
    for (const auto& node : committee.assignment) {
      if (!sent.insert(node).second) continue;
      if (flow.withhold.contains(node)) continue;
      if (skip_acked && flow.acks.contains(node)) continue;
      StoreRequestMsg req;
      req.blob_id = flow.id;
      req.epoch = flow.target_epoch;
      req.metadata = metadata_bytes;
      for (auto shard : committee.shards_of(node)) req.pairs.push_back(flow.pairs[shard]);
      auto payload = req.serialize();
      flow.receipt.bytes_sent += payload.size();
      host_->send(node, MsgType::kStoreRequest, std::move(payload));
    }
    if (!skip_acked) host_->note("store-dispersed", &flow.id);
  }

  void handle_store_response(const PartyId& src, const StoreResponseMsg& resp) {
    auto it = stores_.find(resp.blob_id);
    if (it == stores_.end()) return;
    auto& flow = it->second;
    if (flow.stage != StoreFlow::Stage::kDispersing) return;
    if (resp.refusal != Refusal::kNone) return;
    if (resp.epoch != flow.target_epoch) return;
    const auto& committee = host_->chain().committee(flow.target_epoch);
    if (!committee.has_member(src)) return;
    if (!host_->registry().verify(src, store_ack_preimage(flow.id, flow.target_epoch), resp.ack))
      return;
    flow.acks[src] = resp.ack;
    std::set<PartyId> ackers;
    for (const auto& [p, sig] : flow.acks) ackers.insert(p);
    std::uint32_t weight = committee.weight_of(ackers);
    flow.receipt.acked_shards = weight;
    if (weight < 2 * committee.fault_bound() + 1) return;
    Certificate cert;
    cert.blob_id = flow.id;
    cert.epoch = flow.target_epoch;
    for (const auto& [p, sig] : flow.acks) cert.signatures.emplace_back(p, sig);
    flow.stage = StoreFlow::Stage::kCertifying;
    host_->submit_tx(tx_certificate(cert));
    host_->note("certificate-submitted", &flow.id);
  }

  void advance_read(ReadFlow& flow) {
    const Chain& chain = host_->chain();
    if (chain.is_invalid(flow.id)) {
      flow.result.evidence_seq = chain.invalidation_seq(flow.id).value_or(0);
      finish_read(flow, ReadResult::Outcome::kInvalidOnChain);
      return;
    }
    auto reg = chain.registration(flow.id);
    if (!reg) return;                              // wait for the registration
    if (!chain.read_certificate(flow.id)) return;  // wait for the availability point
    if (flow.stage == ReadFlow::Stage::kMetadata && !flow.requested_metadata) {
      flow.requested_metadata = true;
      Epoch route = chain.read_epoch_for(reg->registered_epoch);
      MetadataRequestMsg req{flow.id};
      for (const auto& p : chain.committee(route).members())
        host_->send(p, MsgType::kMetadataRequest, req.serialize());
    }
  }

  void handle_metadata_response(const PartyId&, const MetadataResponseMsg& resp,
                                std::size_t payload_size) {
    auto it = reads_.find(resp.blob_id);
    if (it == reads_.end()) return;
    auto& flow = it->second;
    if (flow.stage != ReadFlow::Stage::kMetadata) return;
    flow.result.bytes_received += payload_size;
    if (resp.refusal == Refusal::kInvalidBlob) {
      // cross-check the pointer against the chain before trusting it
      if (host_->chain().is_invalid(resp.blob_id)) {
        flow.result.evidence_seq = resp.evidence_seq;
        finish_read(flow, ReadResult::Outcome::kInvalidOnChain);
      }
      return;
    }
    for (const auto& s : resp.shards) flow.shards.emplace(s.shard_index, s);
    const Chain& chain = host_->chain();
    auto reg = chain.registration(flow.id);
    if (!reg) return;
    Epoch route = chain.read_epoch_for(reg->registered_epoch);
    EncodingConfig probe = EncodingConfig::make(chain.committee(route).fault_bound(), 2);
    std::vector<MetadataShard> shards;
    for (const auto& [idx, s] : flow.shards) shards.push_back(s);
    auto metadata = decode_metadata(shards, probe, flow.id);
    if (!metadata) return;
    flow.metadata = *metadata;
    flow.stage = ReadFlow::Stage::kSlivers;
    host_->note("metadata-retrieved", &flow.id);
    request_slivers(flow);
  }

  void request_slivers(ReadFlow& flow) {
    if (flow.requested_slivers) return;
    flow.requested_slivers = true;
    Epoch route = host_->chain().read_epoch_for(flow.metadata->epoch_written);
    SliverRequestMsg req{flow.id,
                         options_.primary_reads ? Dimension::kPrimary : Dimension::kSecondary};
    for (const auto& p : host_->chain().committee(route).members())
      host_->send(p, MsgType::kSliverRequest, req.serialize());
  }

  void handle_sliver_response(const PartyId&, const SliverResponseMsg& resp,
                              std::size_t payload_size) {
    auto it = reads_.find(resp.blob_id);
    if (it == reads_.end()) return;
    auto& flow = it->second;
    if (flow.stage != ReadFlow::Stage::kSlivers) return;
    flow.result.bytes_received += payload_size;
    if (resp.refusal == Refusal::kInvalidBlob) {
      if (host_->chain().is_invalid(resp.blob_id)) {
        flow.result.evidence_seq = resp.evidence_seq;
        finish_read(flow, ReadResult::Outcome::kInvalidOnChain);
      }
      return;
    }
    if (resp.refusal != Refusal::kNone) return;
    EncodingConfig cfg = flow.metadata->config();
    const bool primary = options_.primary_reads;
    if (resp.dimension != (primary ? Dimension::kPrimary : Dimension::kSecondary)) return;
    for (const auto& [shard, symbols] : resp.slivers) {
      if (shard >= cfg.n_shards || flow.verified.contains(shard)) continue;
      // every response is checked against the commitments before it counts
      try {
        if (primary) {
          PrimarySliver sliver{shard, symbols};
          if (commit_sliver(sliver, cfg).root != flow.metadata->primary_roots[shard]) continue;
        } else {
          SecondarySliver sliver{shard, symbols};
          if (commit_sliver(sliver, cfg).root != flow.metadata->secondary_roots[shard]) continue;
        }
      } catch (const CodecError&) {
        continue;
      }
      flow.verified.emplace(shard, symbols);
    }
    std::uint32_t threshold = primary ? cfg.secondary_sliver_len() : cfg.primary_sliver_len();
    if (flow.verified.size() < threshold) return;
    decode_and_check(flow, cfg, primary, threshold);
  }

  void decode_and_check(ReadFlow& flow, const EncodingConfig& cfg, bool primary,
                        std::uint32_t threshold) {
    SourceMatrix grid;
    std::uint32_t used = 0;
    if (primary) {
      std::vector<PrimarySliver> subset;
      for (const auto& [shard, symbols] : flow.verified) {
        subset.push_back(PrimarySliver{shard, symbols});
        if (++used == threshold) break;
      }
      grid = decode_from_primary(subset, cfg);
    } else {
      std::vector<SecondarySliver> subset;
      for (const auto& [shard, symbols] : flow.verified) {
        subset.push_back(SecondarySliver{shard, symbols});
        if (++used == threshold) break;
      }
      grid = decode_from_secondary(subset, cfg);
    }
    flow.result.slivers_used = used;
    Bytes blob = grid.extract_blob(flow.metadata->blob_len);
    // re-encode and re-derive the id; mismatch means the writer's encoding
    // was inconsistent and every honest reader rejects it the same way
    auto pairs = encode_blob(blob, cfg);
    auto re_meta = make_metadata(pairs, blob.size(), cfg, flow.metadata->epoch_written);
    if (make_blob_id(re_meta) != flow.id) {
      finish_read(flow, ReadResult::Outcome::kInconsistent);
      return;
    }
    flow.result.blob = std::move(blob);
    finish_read(flow, ReadResult::Outcome::kBlob);
  }

  void finish_read(ReadFlow& flow, ReadResult::Outcome outcome) {
    flow.stage = ReadFlow::Stage::kDone;
    flow.result.outcome = outcome;
    host_->note(std::string("read-") + read_outcome_name(outcome), &flow.id);
  }

  /// Requests refused during a challenge phase or dropped at an epoch end are
  /// re-issued when the phase ends / the new epoch begins.
  void reissue_pending() {
    for (auto& [id, flow] : reads_) {
      if (flow.stage == ReadFlow::Stage::kMetadata) {
        flow.requested_metadata = false;
        advance_read(flow);
      } else if (flow.stage == ReadFlow::Stage::kSlivers) {
        flow.requested_slivers = false;
        request_slivers(flow);
      }
    }
    for (auto& [id, flow] : stores_) {
      if (flow.stage != StoreFlow::Stage::kDispersing) continue;
      if (!host_->chain().epoch_live(flow.target_epoch)) {
        host_->note("store-stranded", &id);
        continue;
      }
      disperse(flow, /*skip_acked=*/true);  // boundary drops require re-issuing
    }
  }

  ProtocolHost* host_;
  ClientOptions options_;
  std::map<BlobId, StoreFlow> stores_;
  std::map<BlobId, ReadFlow> reads_;
};

}  // namespace gridstore
