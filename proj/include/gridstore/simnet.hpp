#pragma once

#include <json.hpp>
#include <memory>
#include <random>

#include "gridstore/client.hpp"
#include "gridstore/reconfig.hpp"
#include "gridstore/scenario.hpp"

namespace gridstore {

// Deterministic discrete-event harness: single-threaded, virtual-time steps,
// seeded delays, per-pair FIFO channels, signature-authenticated ingress, and
// a schedule-level adversary bounded by f shards per epoch. Identical
// (seed, scenario) inputs produce byte-identical transcripts.

inline Bytes channel_preimage(const PartyId& src, const PartyId& dst, const Bytes& payload) {
  ByteWriter w;
  w.u8(domain::kChannel);
  w.str(src);
  w.str(dst);
  Digest d = sha256(payload);
  w.raw(std::span<const std::uint8_t>(d.data(), d.size()));
  return w.take();
}

/// Deterministic byte stream for workload blob contents.
inline Bytes seeded_bytes(std::uint64_t seed, std::uint64_t tag, std::size_t len) {
  Bytes out;
  out.reserve(len);
  std::uint64_t counter = 0;
  while (out.size() < len) {
    ByteWriter w;
    w.u64(seed);
    w.u64(tag);
    w.u64(counter++);
    Digest d = sha256(w.data());
    for (auto b : d) {
      if (out.size() == len) break;
      out.push_back(b);
    }
  }
  return out;
}

inline nlohmann::json chain_event_json(const ChainEvent& e) {
  return nlohmann::json{{"seq", e.seq},
                        {"tx", chain_event_name(e.kind)},
                        {"payload", to_hex(e.payload)}};
}

/// Line-delimited JSON export of the control-plane log.
inline std::string chain_log_to_jsonl(const Chain& chain) {
  std::string out;
  for (const auto& e : chain.events()) {
    out += chain_event_json(e).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<ChainEvent> chain_log_from_jsonl(const std::string& text) {
  std::vector<ChainEvent> out;
  std::size_t pos = 0;
  static const std::map<std::string, ChainEventKind> kByName = {
      {"registered", ChainEventKind::kRegistered},
      {"certified", ChainEventKind::kCertified},
      {"attested", ChainEventKind::kAttested},
      {"invalidated", ChainEventKind::kInvalidated},
      {"reconfig-started", ChainEventKind::kReconfigStarted},
      {"ready-signaled", ChainEventKind::kReadySignaled},
      {"epoch-completed", ChainEventKind::kEpochCompleted},
      {"challenge-started", ChainEventKind::kChallengeStarted},
      {"challenge-certified", ChainEventKind::kChallengeCertified},
      {"challenge-ended", ChainEventKind::kChallengeEnded},
  };
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    ChainEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.kind = kByName.at(j.at("tx").get<std::string>());
    e.payload = from_hex(j.at("payload").get<std::string>());
    out.push_back(std::move(e));
  }
  return out;
}

class Simulation {
 public:
  struct Report {
    bool ok = true;
    std::vector<std::string> violations;
    std::vector<std::string> transcript;
    std::string transcript_hash;
    nlohmann::json metrics;
    std::uint64_t steps = 0;
    bool budget_exhausted = false;
  };

  explicit Simulation(Scenario scenario)
      : scenario_(std::move(scenario)), registry_(scenario_.seed), rng_(scenario_.seed) {
    scenario_.validate();
    registry_.ensure(kChainParty);
    registry_.ensure(kAdminParty);
    for (const auto& p : scenario_.node_parties()) registry_.ensure(p);
    for (const auto& p : scenario_.client_parties()) registry_.ensure(p);
    chain_ = std::make_unique<Chain>(scenario_.committees.front(), &registry_);

    NodeOptions node_options;
    node_options.allow_primary_reads = scenario_.read_primary_slivers;
    node_options.full_read_recovery = scenario_.recovery_mode == "full-read";
    node_options.reconfig_fallback_delay = scenario_.reconfig_fallback_delay;
    node_options.coin_seed = scenario_.coin_seed;
    for (const auto& p : scenario_.node_parties()) {
      auto entry = std::make_unique<NodeEntry>();
      entry->host = std::make_unique<HostImpl>(this, p);
      entry->node = std::make_unique<StorageNode>(entry->host.get(), node_options);
      nodes_.emplace(p, std::move(entry));
    }
    ClientOptions client_options;
    client_options.primary_reads = scenario_.read_primary_slivers;
    client_options.symbol_size = scenario_.symbol_size;
    for (const auto& p : scenario_.client_parties()) {
      auto entry = std::make_unique<ClientEntry>();
      entry->host = std::make_unique<HostImpl>(this, p);
      entry->client = std::make_unique<Client>(entry->host.get(), client_options);
      clients_.emplace(p, std::move(entry));
    }
  }

  const Chain& chain() const { return *chain_; }
  const StorageNode* node(const PartyId& p) const {
    auto it = nodes_.find(p);
    return it == nodes_.end() ? nullptr : it->second->node.get();
  }
  const Client* client(const PartyId& p) const {
    auto it = clients_.find(p);
    return it == clients_.end() ? nullptr : it->second->client.get();
  }
  const std::map<std::uint32_t, BlobId>& stored_ids() const { return store_ids_; }

  Report run() {
    // workload injection timers
    for (std::size_t i = 0; i < scenario_.workload.size(); ++i) {
      QueuedItem item;
      item.kind = QueuedItem::Kind::kTimer;
      item.dst = workload_party(scenario_.workload[i]);
      item.timer = TimerKind::kWorkloadOp;
      item.a = i;
      enqueue(scenario_.workload[i].at_step, std::move(item));
    }

    std::uint64_t processed = 0;
    while (!queue_.empty()) {
      auto it = queue_.begin();
      std::uint64_t at_step = it->first.first;
      QueuedItem item = std::move(it->second);
      queue_.erase(it);
      if (at_step > scenario_.step_budget) {
        report_.budget_exhausted = true;
        break;
      }
      step_ = at_step;
      deliver(item);
      transcribe_chain_events();
      maybe_notify();
      run_monitors();
      if (++processed > 20'000'000) {
        violation("event-count safety valve tripped");
        break;
      }
    }
    finalize();
    return std::move(report_);
  }

 private:
  static constexpr const char* kChainParty = "chain";
  static constexpr const char* kAdminParty = "admin";

  struct QueuedItem {
    enum class Kind : std::uint8_t { kMessage, kTimer };
    Kind kind = Kind::kMessage;
    PartyId src;
    PartyId dst;
    MsgType type = MsgType::kChainNotify;
    Bytes payload;
    Signature sig{};
    TimerKind timer = TimerKind::kWorkloadOp;
    std::uint64_t a = 0;
    std::uint64_t b = 0;
    std::uint64_t sent_step = 0;
  };

  class HostImpl : public ProtocolHost {
   public:
    HostImpl(Simulation* sim, PartyId self) : sim_(sim), self_(std::move(self)) {}
    const PartyId& self() const override { return self_; }
    const Chain& chain() const override { return *sim_->chain_; }
    const KeyRegistry& registry() const override { return sim_->registry_; }
    Signature sign(std::span<const std::uint8_t> msg) const override {
      return sim_->registry_.sign(self_, msg);
    }
    void send(const PartyId& dst, MsgType type, Bytes payload) override {
      sim_->do_send(self_, dst, type, std::move(payload));
    }
    void submit_tx(const ChainTxMsg& tx) override {
      sim_->do_send(self_, kChainParty, MsgType::kChainTx, tx.serialize());
    }
    void schedule(std::uint64_t delay, TimerKind kind, std::uint64_t a, std::uint64_t b) override {
      QueuedItem item;
      item.kind = QueuedItem::Kind::kTimer;
      item.dst = self_;
      item.timer = kind;
      item.a = a;
      item.b = b;
      sim_->enqueue(sim_->step_ + std::max<std::uint64_t>(delay, 1), std::move(item));
    }
    void note(const std::string& what, const BlobId* blob) override {
      sim_->transcript_note(self_, what, blob);
    }
    void challenge_note(const PartyId& prover, const PartyId& verifier, const BlobId& blob,
                        const std::string& outcome) override {
      sim_->line({{"kind", "challenge"},
                  {"step", sim_->step_},
                  {"prover", prover},
                  {"verifier", verifier},
                  {"blob", digest_hex(blob)},
                  {"outcome", outcome}});
    }

   private:
    Simulation* sim_;
    PartyId self_;
  };

  struct CheatState {
    // (blob, shard) -> col -> opening of E(shard, col) harvested for the
    // deleted primary sliver
    std::map<std::pair<BlobId, std::uint32_t>, std::map<std::uint32_t, SymbolProof>> rows;
    std::set<std::pair<BlobId, std::uint32_t>> reproved;
    std::uint64_t max_distinct_cols = 0;
    bool active = false;
    bool harvest_started = false;
    Epoch epoch = 0;
    Digest coin{};
    Digest set_digest{};
    std::uint64_t k = 0;
    std::vector<BlobId> universe;
    std::vector<BlobId> challenged;
  };

  struct NodeEntry {
    std::unique_ptr<HostImpl> host;
    std::unique_ptr<StorageNode> node;
    std::uint64_t last_seen_seq = 0;
    CheatState cheat;
  };

  struct ClientEntry {
    std::unique_ptr<HostImpl> host;
    std::unique_ptr<Client> client;
    std::uint64_t last_seen_seq = 0;
  };

  // -- adversary ----------------------------------------------------------------

  bool corrupted(const PartyId& p) const {
    auto it = scenario_.adversary.corrupted.find(chain_->current_epoch());
    if (it != scenario_.adversary.corrupted.end() && it->second.contains(p)) return true;
    // during handover the next committee's corruption schedule is also active
    if (chain_->phase() == EpochPhase::kReconfiguring) {
      auto jt = scenario_.adversary.corrupted.find(chain_->current_epoch() + 1);
      if (jt != scenario_.adversary.corrupted.end() && jt->second.contains(p)) return true;
    }
    return false;
  }

  BehaviorKind behavior_of(const PartyId& p) const {
    if (!corrupted(p)) return BehaviorKind::kHonest;
    auto it = scenario_.adversary.behaviors.find(p);
    return it == scenario_.adversary.behaviors.end() ? BehaviorKind::kHonest : it->second;
  }

  // -- scheduling -----------------------------------------------------------------

  void enqueue(std::uint64_t at, QueuedItem item) {
    queue_.emplace(std::make_pair(at, ++queue_seq_), std::move(item));
  }

  std::uint64_t rng_between(std::uint64_t lo, std::uint64_t hi) {
    if (hi <= lo) return lo;
    return lo + rng_() % (hi - lo + 1);
  }

  void do_send(const PartyId& src, const PartyId& dst, MsgType type, Bytes payload) {
    BehaviorKind behavior = behavior_of(src);
    if (behavior == BehaviorKind::kSilent) {
      line({{"kind", "suppress"},
            {"step", step_},
            {"src", src},
            {"dst", dst},
            {"type", msg_type_name(type)}});
      return;
    }
    if (behavior == BehaviorKind::kWithholdSlivers &&
        (type == MsgType::kSliverResponse || type == MsgType::kRecoverySymbolResponse ||
         type == MsgType::kMetadataResponse || type == MsgType::kShardTransferData)) {
      line({{"kind", "suppress"},
            {"step", step_},
            {"src", src},
            {"dst", dst},
            {"type", msg_type_name(type)}});
      return;
    }
    if (behavior == BehaviorKind::kTamperTransfer && type == MsgType::kShardTransferData) {
      auto data = ShardTransferDataMsg::deserialize(payload);
      if (!data.blobs.empty()) {
        auto& pair = std::get<2>(data.blobs.front());
        if (!pair.primary.symbols.empty() && !pair.primary.symbols.front().empty()) {
          pair.primary.symbols.front().front() ^= 0x5a;
          payload = data.serialize();
          line({{"kind", "state"}, {"step", step_}, {"party", src}, {"what", "tampered-transfer"}});
        }
      }
    }
    std::uint64_t delay = rng_between(scenario_.network.min_delay, scenario_.network.max_delay);
    for (const auto& rule : scenario_.adversary.delays)
      if (rule.matches(src, dst, step_)) delay += rule.extra;
    std::uint64_t deliver_at = step_ + delay;
    auto& last = last_scheduled_[{src, dst}];
    if (deliver_at < last) deliver_at = last;  // per-pair FIFO unless reordered by rules
    last = deliver_at;

    bytes_sent_[src] += payload.size();
    Digest digest = sha256(payload);
    line({{"kind", "send"},
          {"step", step_},
          {"src", src},
          {"dst", dst},
          {"type", msg_type_name(type)},
          {"bytes", payload.size()},
          {"digest", digest_hex(digest).substr(0, 16)}});

    QueuedItem item;
    item.kind = QueuedItem::Kind::kMessage;
    item.src = src;
    item.dst = dst;
    item.type = type;
    item.sig = registry_.sign(src, channel_preimage(src, dst, payload));
    item.payload = std::move(payload);
    item.sent_step = step_;
    enqueue(deliver_at, std::move(item));
  }

  // -- delivery ---------------------------------------------------------------------

  void deliver(QueuedItem& item) {
    if (item.kind == QueuedItem::Kind::kTimer) {
      deliver_timer(item);
      return;
    }
    // authenticated channels: ingress verification
    if (!registry_.verify(item.src, channel_preimage(item.src, item.dst, item.payload),
                          item.sig)) {
      line({{"kind", "drop"},
            {"step", step_},
            {"reason", "auth"},
            {"src", item.src},
            {"dst", item.dst},
            {"type", msg_type_name(item.type)}});
      return;
    }
    if (item.type == MsgType::kChainNotify) notify_inflight_.erase(item.dst);
    bytes_received_[item.dst] += item.payload.size();
    line({{"kind", "deliver"},
          {"step", step_},
          {"src", item.src},
          {"dst", item.dst},
          {"type", msg_type_name(item.type)},
          {"bytes", item.payload.size()}});

    if (item.dst == kChainParty) {
      handle_chain_tx(item.src, item.payload);
      return;
    }
    if (auto it = nodes_.find(item.dst); it != nodes_.end()) {
      deliver_to_node(*it->second, item);
      return;
    }
    if (auto it = clients_.find(item.dst); it != clients_.end()) {
      sync_client(*it->second);
      if (item.type != MsgType::kChainNotify)
        it->second->client->on_message(item.src, item.type, item.payload);
      return;
    }
  }

  void deliver_timer(QueuedItem& item) {
    if (item.timer == TimerKind::kWorkloadOp) {
      run_workload_op(scenario_.workload[item.a]);
      return;
    }
    if (auto it = nodes_.find(item.dst); it != nodes_.end()) {
      sync_node(*it->second);
      it->second->node->on_timer(item.timer, item.a, item.b);
    }
  }

  void deliver_to_node(NodeEntry& entry, QueuedItem& item) {
    sync_node(entry);
    const PartyId& self = entry.host->self();
    BehaviorKind behavior = behavior_of(self);
    if (item.type == MsgType::kChainNotify) return;  // sync already happened

    if (behavior == BehaviorKind::kEquivocateAcks && item.type == MsgType::kStoreRequest) {
      auto req = StoreRequestMsg::deserialize(item.payload);
      StoreResponseMsg resp{req.blob_id, req.epoch, Refusal::kNone,
                            registry_.sign(self, store_ack_preimage(req.blob_id, req.epoch))};
      do_send(self, item.src, MsgType::kStoreResponse, resp.serialize());
      line({{"kind", "state"}, {"step", step_}, {"party", self}, {"what", "equivocated-ack"}});
      return;
    }
    if (item.type == MsgType::kRecoverySymbolRequest && corrupted(self) && corrupted(item.src)) {
      // collusion: corrupted nodes serve each other ignoring the gates
      auto req = RecoverySymbolRequestMsg::deserialize(item.payload);
      entry.node->handle_recovery_symbol_request(item.src, req, /*bypass_gates=*/true);
      return;
    }
    if (behavior == BehaviorKind::kChallengeCheat &&
        item.type == MsgType::kRecoverySymbolResponse) {
      cheat_consume_response(entry, RecoverySymbolResponseMsg::deserialize(item.payload));
      // fall through: the honest machinery ignores it (no active task)
    }
    entry.node->on_message(item.src, item.type, item.payload);
    if (behavior == BehaviorKind::kChallengeCheat) maybe_cheat_harvest(entry);
  }

  void sync_node(NodeEntry& entry) {
    auto events = chain_->events_since(entry.last_seen_seq);
    entry.last_seen_seq = chain_->seq();
    if (events.empty()) return;
    if (behavior_of(entry.host->self()) == BehaviorKind::kChallengeCheat)
      for (const auto& e : events)
        if (e.kind == ChainEventKind::kChallengeStarted) cheat_on_challenge_start(entry);
    entry.node->on_chain_events(events);
    if (behavior_of(entry.host->self()) == BehaviorKind::kChallengeCheat)
      maybe_cheat_harvest(entry);
  }

  void sync_client(ClientEntry& entry) {
    auto events = chain_->events_since(entry.last_seen_seq);
    entry.last_seen_seq = chain_->seq();
    if (!events.empty()) entry.client->on_chain_events(events);
  }

  // -- chain ------------------------------------------------------------------------

  void handle_chain_tx(const PartyId& src, const Bytes& payload) {
    TxResult result = TxResult::fail("malformed transaction");
    std::string kind_name = "invalid";
    try {
      auto tx = ChainTxMsg::deserialize(payload);
      ByteReader r{std::span<const std::uint8_t>(tx.body)};
      switch (tx.kind) {
        case TxKind::kReserve: {
          kind_name = "reserve";
          BlobId id = wire::get_digest(r);
          std::uint64_t size = r.u64();
          Epoch expiry = r.u64();
          result = chain_->reserve_blob(id, size, expiry);
          break;
        }
        case TxKind::kCertificate: {
          kind_name = "certificate";
          result = chain_->store_certificate(Certificate::deserialize(r));
          break;
        }
        case TxKind::kAttest: {
          kind_name = "attest";
          BlobId id = wire::get_digest(r);
          PartyId node = r.str();
          Signature sig = wire::get_digest(r);
          result = chain_->attest_inconsistency(id, node, sig);
          break;
        }
        case TxKind::kReconfigStart: {
          kind_name = "reconfig-start";
          result = chain_->begin_reconfiguration(Committee::deserialize(r));
          break;
        }
        case TxKind::kReady: {
          kind_name = "ready";
          PartyId node = r.str();
          Signature sig = wire::get_digest(r);
          result = chain_->signal_ready(node, sig);
          break;
        }
        case TxKind::kChallengeStart: {
          kind_name = "challenge-start";
          result = chain_->begin_challenge(r.u64());
          break;
        }
        case TxKind::kChallengeCertificate: {
          kind_name = "challenge-certificate";
          auto cert = ChallengeCertificate::deserialize(r);
          challenge_submitted_.insert(cert.prover);
          result = chain_->certify_challenge(cert);
          break;
        }
      }
    } catch (const DecodeError&) {
    }
    line({{"kind", "tx"},
          {"step", step_},
          {"src", src},
          {"tx", kind_name},
          {"ok", result.ok},
          {"error", result.error}});
  }

  void transcribe_chain_events() {
    for (const auto& e : chain_->events_since(transcribed_seq_)) {
      auto j = chain_event_json(e);
      j["kind"] = "chain";
      j["step"] = step_;
      line(j);
      if (e.kind == ChainEventKind::kCertified) {
        ByteReader r{std::span<const std::uint8_t>(e.payload)};
        auto cert = Certificate::deserialize(r);
        poa_step_.emplace(cert.blob_id, step_);
      }
      if (e.kind == ChainEventKind::kEpochCompleted) {
        epochs_completed_.push_back(chain_->current_epoch());
        if (scenario_.network.drop_at_epoch_end) drop_in_flight();
      }
      if (e.kind == ChainEventKind::kChallengeStarted) {
        challenge_epochs_.push_back(chain_->current_epoch());
        for (const auto& p : scenario_.node_parties())
          if (corrupted(p)) challenge_corrupted_.insert(p);
      }
      if (e.kind == ChainEventKind::kChallengeCertified) {
        ByteReader r{std::span<const std::uint8_t>(e.payload)};
        auto cert = ChallengeCertificate::deserialize(r);
        challenge_certified_parties_.insert(cert.prover);
      }
      if (e.kind == ChainEventKind::kChallengeEnded) challenge_ended_ = true;
      transcribed_seq_ = e.seq;
    }
  }

  void drop_in_flight() {
    // messages between protocol parties may be dropped once the epoch ends;
    // the substrate (chain txs, notifications) is reliable
    for (auto it = queue_.begin(); it != queue_.end();) {
      const auto& item = it->second;
      bool party_msg = item.kind == QueuedItem::Kind::kMessage && item.src != kChainParty &&
                       item.dst != kChainParty;
      if (party_msg) {
        line({{"kind", "drop"},
              {"step", step_},
              {"reason", "epoch-end"},
              {"src", item.src},
              {"dst", item.dst},
              {"type", msg_type_name(item.type)}});
        it = queue_.erase(it);
      } else {
        ++it;
      }
    }
  }

  /// Event-driven pull: when the log grows, every party gets a (delayable,
  /// never droppable) notification and reads the log on receipt.
  void maybe_notify() {
    if (chain_->seq() == 0) return;
    auto consider = [&](const PartyId& p, std::uint64_t last_seen) {
      if (chain_->seq() <= last_seen || notify_inflight_.contains(p)) return;
      notify_inflight_.insert(p);
      QueuedItem item;
      item.kind = QueuedItem::Kind::kMessage;
      item.src = kChainParty;
      item.dst = p;
      item.type = MsgType::kChainNotify;
      item.sig = registry_.sign(kChainParty, channel_preimage(kChainParty, p, {}));
      std::uint64_t delay = rng_between(scenario_.network.min_delay, scenario_.network.max_delay);
      for (const auto& rule : scenario_.adversary.delays)
        if (rule.matches(kChainParty, p, step_)) delay += rule.extra;
      enqueue(step_ + delay, std::move(item));
    };
    for (const auto& [p, entry] : nodes_) consider(p, entry->last_seen_seq);
    for (const auto& [p, entry] : clients_) consider(p, entry->last_seen_seq);
  }

  // -- workload -----------------------------------------------------------------------

  PartyId workload_party(const WorkloadOp& op) const {
    switch (op.kind) {
      case WorkloadOp::Kind::kStore:
      case WorkloadOp::Kind::kRead:
        return op.client;
      default:
        return kAdminParty;
    }
  }

  void run_workload_op(const WorkloadOp& op) {
    switch (op.kind) {
      case WorkloadOp::Kind::kStore: {
        auto& entry = *clients_.at(op.client);
        sync_client(entry);
        Bytes blob;
        if (op.content_ref >= 0) blob = store_blobs_.at(op.content_ref);
        else if (!op.explicit_bytes.empty()) blob = op.explicit_bytes;
        else blob = seeded_bytes(scenario_.seed, store_counter_, op.size);
        StoreSpec spec;
        spec.expiry_epoch = op.expiry_epoch;
        spec.symbol_size = op.symbol_size;
        spec.inconsistent = op.inconsistent_column >= 0;
        spec.inconsistent_column = spec.inconsistent ? op.inconsistent_column : 0;
        spec.withhold_nodes.insert(op.withhold_nodes.begin(), op.withhold_nodes.end());
        BlobId id = entry.client->store_blob(blob, spec, step_);
        store_ids_[store_counter_] = id;
        store_blobs_[store_counter_] = blob;
        store_clients_[store_counter_] = op.client;
        ++store_counter_;
        break;
      }
      case WorkloadOp::Kind::kRead: {
        auto& entry = *clients_.at(op.client);
        sync_client(entry);
        entry.client->read_blob(store_ids_.at(op.blob_ref));
        break;
      }
      case WorkloadOp::Kind::kReconfigure: {
        do_send(kAdminParty, kChainParty, MsgType::kChainTx,
                tx_reconfig_start(scenario_.committees[op.epoch - 1]).serialize());
        break;
      }
      case WorkloadOp::Kind::kChallenge: {
        do_send(kAdminParty, kChainParty, MsgType::kChainTx,
                tx_challenge_start(op.k).serialize());
        break;
      }
    }
  }

  // -- cheating prover -------------------------------------------------------------------

  /// Appendix attack: on challenge start the corrupted prover deletes its
  /// primary slivers for the challenged blobs, then tries to reassemble the
  /// rows from colluders and not-yet-entered honest nodes via the read path.
  void cheat_on_challenge_start(NodeEntry& entry) {
    const PartyId& self = entry.host->self();
    auto& cheat = entry.cheat;
    cheat.active = true;
    cheat.epoch = chain_->current_epoch();
    cheat.k = chain_->challenge_k().value_or(0);
    std::uint64_t anchor = chain_->challenge_anchor_seq().value_or(chain_->seq());
    cheat.universe = chain_->certified_blobs_as_of(anchor);
    cheat.coin = challenge_coin(scenario_.coin_seed, cheat.epoch);
    cheat.set_digest = challenge_set_digest(cheat.coin, cheat.epoch, cheat.k, cheat.universe);
    cheat.challenged = select_challenged_blobs(cheat.coin, self, cheat.k, cheat.universe);
    auto shards = chain_->committee(cheat.epoch).shards_of(self);
    for (const auto& id : cheat.challenged) {
      for (auto shard : shards) {
        if (!entry.node->erase_sliver(id, shard, Dimension::kPrimary)) continue;
        line({{"kind", "state"},
              {"step", step_},
              {"party", self},
              {"what", "cheat-deleted-primary"},
              {"blob", digest_hex(id)}});
        // the prover's own secondary still yields E(shard, shard)
        const auto* metadata = entry.node->metadata_of(id);
        auto it = entry.node->store().find(id);
        if (metadata && it != entry.node->store().end()) {
          auto pit = it->second.pairs.find(shard);
          if (pit != it->second.pairs.end() && pit->second.secondary) {
            auto proof = prove_symbol(*pit->second.secondary, shard, metadata->config());
            cheat.rows[{id, shard}].emplace(shard, std::move(proof));
          }
        }
      }
    }
  }

  /// The harvest can only start once the coin has opened (the selection is
  /// unknown before 2f+1 acknowledgments), by which point f+1 honest nodes
  /// have entered and refuse to serve: colluders answer via the bypass and
  /// only not-yet-entered honest nodes answer via the ordinary read path.
  void maybe_cheat_harvest(NodeEntry& entry) {
    auto& cheat = entry.cheat;
    if (!cheat.active || cheat.harvest_started || !entry.node->challenge_open()) return;
    cheat.harvest_started = true;
    const PartyId& self = entry.host->self();
    auto shards = chain_->committee(cheat.epoch).shards_of(self);
    for (const auto& id : cheat.challenged) {
      for (auto shard : shards) {
        if (!cheat.rows.contains({id, shard})) continue;
        RecoverySymbolRequestMsg req{id, shard, Dimension::kPrimary};
        for (const auto& p : chain_->committee(cheat.epoch).members())
          if (p != self) do_send(self, p, MsgType::kRecoverySymbolRequest, req.serialize());
      }
    }
  }

  void cheat_consume_response(NodeEntry& entry, const RecoverySymbolResponseMsg& resp) {
    auto& cheat = entry.cheat;
    if (!cheat.active || resp.target_dimension != Dimension::kPrimary) return;
    const auto* metadata = entry.node->metadata_of(resp.blob_id);
    if (!metadata) return;
    auto key = std::make_pair(resp.blob_id, resp.target_shard);
    if (!cheat.rows.contains(key)) return;
    auto& row = cheat.rows[key];
    for (const auto& proof : resp.proofs) {
      if (proof.symbol.origin != Dimension::kSecondary) continue;
      if (proof.symbol.row != resp.target_shard) continue;
      if (!verify_symbol(proof, *metadata)) continue;
      row.emplace(proof.symbol.col, proof);
    }
    cheat.max_distinct_cols = std::max(cheat.max_distinct_cols, std::uint64_t(row.size()));
    EncodingConfig cfg = metadata->config();
    if (row.size() < cfg.primary_sliver_len() || cheat.reproved.contains(key)) return;
    // enough leaked symbols: rebuild the sliver and try to pass after all
    std::vector<IntersectionSymbol> subset;
    for (const auto& [col, proof] : row) {
      subset.push_back(proof.symbol);
      if (subset.size() == cfg.primary_sliver_len()) break;
    }
    auto sliver = recover_primary(subset, resp.target_shard, cfg);
    if (commit_sliver(sliver, cfg).root != metadata->primary_roots[resp.target_shard]) return;
    entry.node->inject_primary(resp.blob_id, resp.target_shard, sliver);
    cheat.reproved.insert(key);
    line({{"kind", "state"},
          {"step", step_},
          {"party", entry.host->self()},
          {"what", "cheat-reconstructed-primary"},
          {"blob", digest_hex(resp.blob_id)}});
    cheat_reprove(entry);
  }

  void cheat_reprove(NodeEntry& entry) {
    const PartyId& self = entry.host->self();
    auto& cheat = entry.cheat;
    const auto& committee = chain_->committee(cheat.epoch);
    auto my_shards = committee.shards_of(self);
    for (const auto& v : committee.members()) {
      if (v == self) continue;
      ChallengeProveMsg msg;
      msg.epoch = cheat.epoch;
      msg.set_digest = cheat.set_digest;
      auto verifier_shards = committee.shards_of(v);
      bool complete = true;
      for (const auto& id : cheat.challenged) {
        std::vector<SymbolProof> proofs;
        const auto* metadata = entry.node->metadata_of(id);
        auto it = entry.node->store().find(id);
        if (metadata && it != entry.node->store().end()) {
          EncodingConfig cfg = metadata->config();
          for (const auto& [shard, pair] : it->second.pairs) {
            if (!pair.primary) {
              complete = false;
              continue;
            }
            for (auto sv : verifier_shards) proofs.push_back(prove_symbol(*pair.primary, sv, cfg));
          }
        } else {
          complete = false;
        }
        msg.blobs.emplace_back(id, std::move(proofs));
      }
      if (!complete) continue;  // partial proofs get rejected anyway
      do_send(self, v, MsgType::kChallengeProve, msg.serialize());
    }
  }

  // -- monitors & reporting ------------------------------------------------------------

  void violation(std::string what) {
    report_.ok = false;
    report_.violations.push_back(std::move(what));
  }

  void line(nlohmann::json j) { report_.transcript.push_back(j.dump()); }

  void transcript_note(const PartyId& party, const std::string& what, const BlobId* blob) {
    nlohmann::json j{{"kind", "state"}, {"step", step_}, {"party", party}, {"what", what}};
    if (blob) j["blob"] = digest_hex(*blob);
    line(j);
  }

  void run_monitors() {
    if (!scenario_.assertions.availability_monitor) return;
    std::set<PartyId> corrupted_now;
    for (const auto& p : scenario_.node_parties())
      if (corrupted(p)) corrupted_now.insert(p);
    auto lookup = [this](const PartyId& p) { return node(p); };
    auto violations = availability_violations(*chain_, corrupted_now, lookup);
    for (auto& v : violations) {
      if (availability_violations_ < 5)
        violation("availability: step " + std::to_string(step_) + ": " + v);
      ++availability_violations_;
    }
  }

  void finalize() {
    report_.steps = step_;
    evaluate_assertions();
    build_metrics();
    std::string joined;
    for (const auto& l : report_.transcript) {
      joined += l;
      joined += '\n';
    }
    report_.transcript_hash = digest_hex(sha256(Bytes(joined.begin(), joined.end())));
  }

  void evaluate_assertions() {
    const auto& a = scenario_.assertions;
    if (report_.budget_exhausted) {
      std::string pending;
      for (const auto& [p, entry] : clients_)
        if (!entry->client->idle()) pending += " " + p;
      violation("step budget exhausted; pending flows:" + (pending.empty() ? " none" : pending));
    }
    if (a.all_stores_certify) {
      for (const auto& [ref, id] : store_ids_)
        if (!chain_->read_certificate(id))
          violation("store op " + std::to_string(ref) + " never certified");
    }
    if (a.reads_match_expectation) {
      for (const auto& op : scenario_.workload) {
        if (op.kind != WorkloadOp::Kind::kRead) continue;
        auto it = store_ids_.find(op.blob_ref);
        if (it == store_ids_.end()) continue;
        const auto* result = clients_.at(op.client)->client->read_result(it->second);
        if (!result) {
          violation("read of store op " + std::to_string(op.blob_ref) + " never completed");
          continue;
        }
        bool ok = false;
        if (op.expect == "any") ok = true;
        else if (op.expect == "blob")
          ok = result->outcome == ReadResult::Outcome::kBlob &&
               result->blob == store_blobs_.at(op.blob_ref);
        else if (op.expect == "inconsistent")
          ok = result->outcome == ReadResult::Outcome::kInconsistent;
        else if (op.expect == "invalid")
          ok = result->outcome == ReadResult::Outcome::kInvalidOnChain;
        else if (op.expect == "bottom")
          ok = result->outcome == ReadResult::Outcome::kInconsistent ||
               result->outcome == ReadResult::Outcome::kInvalidOnChain;
        if (!ok)
          violation("read of store op " + std::to_string(op.blob_ref) + " expected " + op.expect +
                    " got " + read_outcome_name(result->outcome));
      }
    }
    if (a.write_completeness) {
      const auto& committee = chain_->committee(chain_->current_epoch());
      auto certified = chain_->certified_blobs_as_of(chain_->seq());
      for (std::uint32_t shard = 0; shard < committee.n_shards(); ++shard) {
        const PartyId& owner = committee.assignment[shard];
        if (corrupted(owner)) continue;
        for (const auto& id : certified)
          if (!node(owner)->has_complete_pair(id, shard))
            violation("write completeness: " + owner + " misses shard " + std::to_string(shard));
      }
    }
    for (auto ref : a.invalidated_blobs) {
      auto it = store_ids_.find(ref);
      if (it == store_ids_.end() || !chain_->is_invalid(it->second))
        violation("store op " + std::to_string(ref) + " was not invalidated on chain");
    }
    if (a.no_adversarial_challenge_certificate) {
      for (const auto& p : challenge_certified_parties_)
        if (challenge_corrupted_.contains(p))
          violation("adversarial challenge certificate accepted for " + p);
    }
    if (a.honest_challenge_certificates) {
      // every honest prover must have assembled a certificate (2f+1 verified
      // confirmations); late submissions after the phase auto-ends are fine
      for (Epoch e : challenge_epochs_) {
        for (const auto& p : chain_->committee(e).members())
          if (!challenge_corrupted_.contains(p) && !challenge_submitted_.contains(p))
            violation("honest prover " + p + " failed to certify the challenge");
      }
    }
    if (a.challenge_ends && !challenge_ended_) violation("challenge phase never ended");
    for (Epoch e : a.epochs_completed)
      if (std::find(epochs_completed_.begin(), epochs_completed_.end(), e) ==
          epochs_completed_.end())
        violation("epoch " + std::to_string(e) + " never completed");
    if (a.max_leaked_row_symbols >= 0) {
      std::uint64_t max_leak = 0;
      for (const auto& [p, entry] : nodes_)
        max_leak = std::max(max_leak, entry->cheat.max_distinct_cols);
      if (max_leak > std::uint64_t(a.max_leaked_row_symbols))
        violation("adversary harvested " + std::to_string(max_leak) + " row symbols; bound " +
                  std::to_string(a.max_leaked_row_symbols));
    }
    if (availability_violations_ > 0)
      violation("availability monitor flagged " + std::to_string(availability_violations_) +
                " states");
  }

  void build_metrics() {
    nlohmann::json metrics;
    nlohmann::json bytes = nlohmann::json::object();
    for (const auto& [p, sent] : bytes_sent_)
      bytes[p] = {{"sent", sent}, {"received", bytes_received_[p]}};
    for (const auto& [p, received] : bytes_received_)
      if (!bytes.contains(p)) bytes[p] = {{"sent", 0}, {"received", received}};
    metrics["bytes"] = bytes;

    nlohmann::json blobs = nlohmann::json::array();
    for (const auto& [ref, id] : store_ids_) {
      nlohmann::json b;
      b["ref"] = ref;
      b["id"] = digest_hex(id);
      b["size"] = store_blobs_.at(ref).size();
      b["client"] = store_clients_.at(ref);
      b["certified"] = chain_->read_certificate(id).has_value();
      b["invalid"] = chain_->is_invalid(id);
      auto poa = poa_step_.find(id);
      if (poa != poa_step_.end()) {
        b["poa_step"] = poa->second;
        const auto* receipt_owner = clients_.at(store_clients_.at(ref))->client.get();
        const auto* receipt = receipt_owner->receipt(id);
        if (receipt) {
          b["bytes_sent"] = receipt->bytes_sent;
          b["steps_to_poa"] = poa->second - receipt->started_step;
        }
      }
      std::uint64_t stored = 0;
      for (const auto& [p, entry] : nodes_) {
        auto it = entry->node->store().find(id);
        if (it == entry->node->store().end()) continue;
        for (const auto& [shard, pair] : it->second.pairs) {
          if (pair.primary)
            for (const auto& s : pair.primary->symbols) stored += s.size();
          if (pair.secondary)
            for (const auto& s : pair.secondary->symbols) stored += s.size();
        }
      }
      b["stored_sliver_bytes"] = stored;
      b["replication_factor"] =
          store_blobs_.at(ref).empty() ? 0.0 : double(stored) / double(store_blobs_.at(ref).size());
      blobs.push_back(b);
    }
    metrics["blobs"] = blobs;

    nlohmann::json reads = nlohmann::json::array();
    for (const auto& op : scenario_.workload) {
      if (op.kind != WorkloadOp::Kind::kRead) continue;
      auto it = store_ids_.find(op.blob_ref);
      if (it == store_ids_.end()) continue;
      const auto* result = clients_.at(op.client)->client->read_result(it->second);
      if (!result) continue;
      reads.push_back({{"client", op.client},
                       {"blob_ref", op.blob_ref},
                       {"outcome", read_outcome_name(result->outcome)},
                       {"bytes_received", result->bytes_received},
                       {"slivers_used", result->slivers_used}});
    }
    metrics["reads"] = reads;

    nlohmann::json recovery = nlohmann::json::object();
    for (const auto& [p, entry] : nodes_) {
      nlohmann::json per = nlohmann::json::object();
      for (const auto& [ref, id] : store_ids_) {
        std::uint64_t bytes_down = entry->node->recovery_downloaded(id);
        if (bytes_down > 0) per[std::to_string(ref)] = bytes_down;
      }
      if (!per.empty()) recovery[p] = per;
    }
    metrics["recovery_bytes"] = recovery;

    nlohmann::json challenge;
    challenge["epochs"] = challenge_epochs_;
    challenge["certified"] = nlohmann::json::array();
    for (const auto& p : challenge_certified_parties_) challenge["certified"].push_back(p);
    nlohmann::json adversarial = nlohmann::json::array();
    for (const auto& p : challenge_certified_parties_)
      if (challenge_corrupted_.contains(p)) adversarial.push_back(p);
    challenge["adversarial_certificates"] = adversarial;
    std::uint64_t max_leak = 0;
    for (const auto& [p, entry] : nodes_)
      max_leak = std::max(max_leak, entry->cheat.max_distinct_cols);
    challenge["leaked_row_symbols"] = max_leak;
    challenge["ended"] = challenge_ended_;
    metrics["challenge"] = challenge;

    metrics["epochs_completed"] = epochs_completed_;
    metrics["availability_violations"] = availability_violations_;
    metrics["final_epoch"] = chain_->current_epoch();
    metrics["steps"] = report_.steps;
    nlohmann::json assertion_results = nlohmann::json::array();
    for (const auto& v : report_.violations) assertion_results.push_back(v);
    metrics["violations"] = assertion_results;
    report_.metrics = std::move(metrics);
  }

  Scenario scenario_;
  KeyRegistry registry_;
  std::mt19937_64 rng_;
  std::unique_ptr<Chain> chain_;
  std::map<PartyId, std::unique_ptr<NodeEntry>> nodes_;
  std::map<PartyId, std::unique_ptr<ClientEntry>> clients_;

  std::map<std::pair<std::uint64_t, std::uint64_t>, QueuedItem> queue_;
  std::uint64_t queue_seq_ = 0;
  std::uint64_t step_ = 0;
  std::map<std::pair<PartyId, PartyId>, std::uint64_t> last_scheduled_;
  std::set<PartyId> notify_inflight_;
  std::uint64_t transcribed_seq_ = 0;

  std::map<PartyId, std::uint64_t> bytes_sent_;
  std::map<PartyId, std::uint64_t> bytes_received_;
  std::map<BlobId, std::uint64_t> poa_step_;
  std::map<std::uint32_t, BlobId> store_ids_;
  std::map<std::uint32_t, Bytes> store_blobs_;
  std::map<std::uint32_t, PartyId> store_clients_;
  std::uint32_t store_counter_ = 0;
  std::vector<Epoch> epochs_completed_;
  std::vector<Epoch> challenge_epochs_;
  std::set<PartyId> challenge_corrupted_;
  std::set<PartyId> challenge_certified_parties_;
  std::set<PartyId> challenge_submitted_;
  bool challenge_ended_ = false;
  std::uint64_t availability_violations_ = 0;

  Report report_;
};

/// Convenience wrapper used by the CLI and the acceptance suite.
inline Simulation::Report run_scenario(const Scenario& scenario) {
  Simulation sim(scenario);
  return sim.run();
}

}  // namespace gridstore
