#include <catch2/catch_amalgamated.hpp>

#include "gridstore/simnet.hpp"
#include "oracle.hpp"

using namespace gridstore;

namespace {

/// Recording host for driving a StorageNode directly, without the scheduler.
struct StubHost : ProtocolHost {
  PartyId id;
  Chain* chain_ptr;
  KeyRegistry* reg;
  std::vector<std::tuple<PartyId, MsgType, Bytes>> sent;
  std::vector<ChainTxMsg> txs;

  StubHost(PartyId p, Chain* c, KeyRegistry* r) : id(std::move(p)), chain_ptr(c), reg(r) {}
  const PartyId& self() const override { return id; }
  const Chain& chain() const override { return *chain_ptr; }
  const KeyRegistry& registry() const override { return *reg; }
  Signature sign(std::span<const std::uint8_t> msg) const override { return reg->sign(id, msg); }
  void send(const PartyId& dst, MsgType type, Bytes payload) override {
    sent.emplace_back(dst, type, std::move(payload));
  }
  void submit_tx(const ChainTxMsg& tx) override { txs.push_back(tx); }
  void schedule(std::uint64_t, TimerKind, std::uint64_t, std::uint64_t) override {}
  void note(const std::string&, const BlobId*) override {}
  void challenge_note(const PartyId&, const PartyId&, const BlobId&, const std::string&) override {}

  template <typename Msg>
  std::vector<Msg> responses(MsgType type) {
    std::vector<Msg> out;
    for (const auto& [dst, t, payload] : sent)
      if (t == type) out.push_back(Msg::deserialize(payload));
    return out;
  }
};

struct NodeFixture {
  KeyRegistry registry{3};
  Committee committee{1, {"node-0", "node-1", "node-2", "node-3"}};
  Chain chain;
  EncodingConfig cfg = EncodingConfig::make(1, 2);
  Bytes blob;
  std::vector<SliverPair> pairs;
  BlobMetadata metadata;
  BlobId id;

  NodeFixture() : chain(committee, &registry) {
    for (const auto& p : committee.assignment) registry.ensure(p);
    registry.ensure("client-0");
    std::mt19937_64 rng(77);
    blob = oracle::random_bytes(rng, 12);
    pairs = encode_blob(blob, cfg);
    metadata = make_metadata(pairs, blob.size(), cfg, 1);
    id = make_blob_id(metadata);
  }

  StoreRequestMsg store_request_for(std::uint32_t shard) const {
    StoreRequestMsg req;
    req.blob_id = id;
    req.epoch = 1;
    req.metadata = metadata.serialize();
    req.pairs = {pairs[shard]};
    return req;
  }

  void register_blob() { REQUIRE(chain.reserve_blob(id, blob.size(), 9).ok); }

  void certify(Chain& c) const {
    Certificate cert{id, 1, {}};
    auto preimage = store_ack_preimage(id, 1);
    for (const auto& p : {"node-0", "node-1", "node-2"})
      cert.signatures.emplace_back(p, registry.sign(p, preimage));
    REQUIRE(c.store_certificate(cert).ok);
  }
};

}  // namespace

TEST_CASE("store request runs the three checks in order with reason codes") {
  NodeFixture fx;
  StubHost host("node-2", &fx.chain, &fx.registry);
  StorageNode node(&host, NodeOptions{});

  auto last_response = [&] {
    auto rs = host.responses<StoreResponseMsg>(MsgType::kStoreResponse);
    REQUIRE_FALSE(rs.empty());
    return rs.back();
  };

  SECTION("shard ownership is checked first") {
    fx.register_blob();
    node.on_message("client-0", MsgType::kStoreRequest, fx.store_request_for(1).serialize());
    CHECK(last_response().refusal == Refusal::kWrongShard);
  }
  SECTION("unregistered blob is refused") {
    node.on_message("client-0", MsgType::kStoreRequest, fx.store_request_for(2).serialize());
    CHECK(last_response().refusal == Refusal::kUnregistered);
  }
  SECTION("tampered sliver is refused as commitment mismatch") {
    fx.register_blob();
    auto req = fx.store_request_for(2);
    req.pairs[0].secondary.symbols[0][0] ^= 1;
    node.on_message("client-0", MsgType::kStoreRequest, req.serialize());
    CHECK(last_response().refusal == Refusal::kCommitmentMismatch);
  }
  SECTION("metadata that does not re-derive the id is refused") {
    fx.register_blob();
    auto req = fx.store_request_for(2);
    auto bad = fx.metadata;
    bad.blob_len += 1;
    req.metadata = bad.serialize();
    node.on_message("client-0", MsgType::kStoreRequest, req.serialize());
    CHECK(last_response().refusal == Refusal::kIdMismatch);
  }
  SECTION("honest request is acked with a chain-verifiable signature") {
    fx.register_blob();
    node.on_message("client-0", MsgType::kStoreRequest, fx.store_request_for(2).serialize());
    auto resp = last_response();
    CHECK(resp.refusal == Refusal::kNone);
    CHECK(fx.registry.verify("node-2", store_ack_preimage(fx.id, 1), resp.ack));
    CHECK(node.has_complete_pair(fx.id, 2));
    CHECK(node.metadata_of(fx.id) != nullptr);
  }
}

TEST_CASE("serving is gated on certificates, challenge phases and invalidation") {
  NodeFixture fx;
  StubHost host("node-1", &fx.chain, &fx.registry);
  StorageNode node(&host, NodeOptions{});
  fx.register_blob();
  node.on_message("client-0", MsgType::kStoreRequest, fx.store_request_for(1).serialize());
  host.sent.clear();

  SECTION("metadata for an unknown id refuses with unknown-blob") {
    MetadataRequestMsg req{sha256(Bytes{9})};
    node.on_message("client-0", MsgType::kMetadataRequest, req.serialize());
    auto rs = host.responses<MetadataResponseMsg>(MsgType::kMetadataResponse);
    CHECK(rs.back().refusal == Refusal::kUnknownBlob);
  }
  SECTION("metadata for a stored blob returns this node's shard") {
    node.on_message("client-0", MsgType::kMetadataRequest, MetadataRequestMsg{fx.id}.serialize());
    auto rs = host.responses<MetadataResponseMsg>(MsgType::kMetadataResponse);
    REQUIRE(rs.back().refusal == Refusal::kNone);
    REQUIRE(rs.back().shards.size() == 1);
    CHECK(rs.back().shards[0].shard_index == 1);
    auto expected = encode_metadata(fx.metadata, fx.cfg)[1];
    CHECK(rs.back().shards[0] == expected);
  }
  SECTION("slivers are refused before the availability certificate") {
    node.on_message("client-0", MsgType::kSliverRequest,
                    SliverRequestMsg{fx.id, Dimension::kSecondary}.serialize());
    auto rs = host.responses<SliverResponseMsg>(MsgType::kSliverResponse);
    CHECK(rs.back().refusal == Refusal::kNoCertificate);
  }
  SECTION("slivers are served after the certificate") {
    fx.certify(fx.chain);
    node.on_message("client-0", MsgType::kSliverRequest,
                    SliverRequestMsg{fx.id, Dimension::kSecondary}.serialize());
    auto rs = host.responses<SliverResponseMsg>(MsgType::kSliverResponse);
    REQUIRE(rs.back().refusal == Refusal::kNone);
    REQUIRE(rs.back().slivers.size() == 1);
    CHECK(rs.back().slivers[0].second == fx.pairs[1].secondary.symbols);
  }
  SECTION("primary reads are disabled by default") {
    fx.certify(fx.chain);
    node.on_message("client-0", MsgType::kSliverRequest,
                    SliverRequestMsg{fx.id, Dimension::kPrimary}.serialize());
    auto rs = host.responses<SliverResponseMsg>(MsgType::kSliverResponse);
    CHECK(rs.back().refusal == Refusal::kPrimaryDisabled);
  }
  SECTION("a challenge phase blocks reads and recovery of challenged blobs") {
    fx.certify(fx.chain);
    REQUIRE(fx.chain.begin_challenge(0).ok);
    node.on_chain_events(fx.chain.events_since(0));
    CHECK(node.challenge_entered());
    node.on_message("client-0", MsgType::kSliverRequest,
                    SliverRequestMsg{fx.id, Dimension::kSecondary}.serialize());
    auto rs = host.responses<SliverResponseMsg>(MsgType::kSliverResponse);
    CHECK(rs.back().refusal == Refusal::kChallengeRunning);
    node.on_message("node-3", MsgType::kRecoverySymbolRequest,
                    RecoverySymbolRequestMsg{fx.id, 3, Dimension::kSecondary}.serialize());
    auto rr = host.responses<RecoverySymbolResponseMsg>(MsgType::kRecoverySymbolResponse);
    CHECK(rr.back().refusal == Refusal::kChallengeRunning);
  }
  SECTION("recovery symbols come with verifying openings") {
    fx.certify(fx.chain);
    node.on_message("node-3", MsgType::kRecoverySymbolRequest,
                    RecoverySymbolRequestMsg{fx.id, 3, Dimension::kSecondary}.serialize());
    auto rs = host.responses<RecoverySymbolResponseMsg>(MsgType::kRecoverySymbolResponse);
    REQUIRE(rs.back().refusal == Refusal::kNone);
    REQUIRE(rs.back().proofs.size() == 1);
    const auto& proof = rs.back().proofs[0];
    CHECK(proof.symbol.row == 1);
    CHECK(proof.symbol.col == 3);
    CHECK(verify_symbol(proof, fx.metadata));
    CHECK(proof.symbol.data == expand_primary(fx.pairs[1].primary, 3, fx.cfg).data);
  }
}

TEST_CASE("inconsistency proofs verify by trial recovery") {
  NodeFixture fx;
  // a writer that commits primaries from the honest grid and secondaries from
  // a tampered one
  auto [bad_pairs, bad_meta] = encode_blob_inconsistent(fx.blob, fx.cfg, 0, 1);
  BlobId bad_id = make_blob_id(bad_meta);

  // recovery of primary sliver 3 collects row symbols from the secondaries
  std::vector<SymbolProof> row;
  for (std::uint32_t j = 0; j < 3; ++j) row.push_back(prove_symbol(bad_pairs[j].secondary, 3, fx.cfg));

  InconsistencyProof proof{bad_id, 3, Dimension::kPrimary, row};

  SECTION("honest nodes accept the proof") { CHECK(verify_inconsistency(proof, bad_meta)); }
  SECTION("a single invalid opening rejects the proof") {
    auto tampered = proof;
    tampered.symbols[1].symbol.data[0] ^= 1;
    CHECK_FALSE(verify_inconsistency(tampered, bad_meta));
  }
  SECTION("a proof against a consistent blob is rejected") {
    std::vector<SymbolProof> honest_row;
    for (std::uint32_t j = 0; j < 3; ++j)
      honest_row.push_back(prove_symbol(fx.pairs[j].secondary, 3, fx.cfg));
    InconsistencyProof hp{fx.id, 3, Dimension::kPrimary, honest_row};
    CHECK_FALSE(verify_inconsistency(hp, fx.metadata));
  }
  SECTION("below-threshold proofs are rejected") {
    auto thin = proof;
    thin.symbols.resize(2);
    CHECK_FALSE(verify_inconsistency(thin, bad_meta));
  }
  SECTION("the wrong metadata rejects immediately") {
    CHECK_FALSE(verify_inconsistency(proof, fx.metadata));
  }
}

TEST_CASE("a node left out of the write recovers its pair byte-identically") {
  Scenario s;
  s.name = "recovery";
  s.f = 1;
  s.seed = 5;
  s.committees = {{1, {"node-0", "node-1", "node-2", "node-3"}}};
  WorkloadOp store;
  store.kind = WorkloadOp::Kind::kStore;
  store.client = "client-0";
  store.size = 48;
  store.expiry_epoch = 10;
  store.at_step = 1;
  store.withhold_nodes = {"node-3"};
  s.workload = {store};
  s.assertions.write_completeness = true;
  s.assertions.availability_monitor = true;

  Simulation sim(s);
  auto report = sim.run();
  INFO(nlohmann::json(report.violations).dump());
  REQUIRE(report.ok);

  // compare against an offline encode of the same deterministic blob
  Bytes blob = seeded_bytes(s.seed, 0, 48);
  auto cfg = EncodingConfig::make(1, EncodingConfig::choose_symbol_size(48, 1));
  auto pairs = encode_blob(blob, cfg);
  BlobId id = sim.stored_ids().at(0);
  const auto* node3 = sim.node("node-3");
  REQUIRE(node3 != nullptr);
  REQUIRE(node3->has_complete_pair(id, 3));
  const auto& stored = node3->store().at(id).pairs.at(3);
  CHECK(stored.primary->symbols == pairs[3].primary.symbols);
  CHECK(stored.secondary->symbols == pairs[3].secondary.symbols);

  // sliver recovery moves n symbols plus openings and a metadata fetch, far
  // below re-downloading the blob times n
  std::uint64_t downloaded = node3->recovery_downloaded(id);
  CHECK(downloaded > 0);
  CHECK(downloaded < 8192);
}

TEST_CASE("full-read recovery baseline downloads at least the blob size") {
  Scenario s;
  s.name = "recovery-full-read";
  s.f = 1;
  s.seed = 6;
  s.recovery_mode = "full-read";
  s.committees = {{1, {"node-0", "node-1", "node-2", "node-3"}}};
  WorkloadOp store;
  store.kind = WorkloadOp::Kind::kStore;
  store.client = "client-0";
  store.size = 4096;
  store.expiry_epoch = 10;
  store.at_step = 1;
  store.withhold_nodes = {"node-3"};
  s.workload = {store};
  s.assertions.write_completeness = true;

  Simulation sim(s);
  auto report = sim.run();
  INFO(nlohmann::json(report.violations).dump());
  REQUIRE(report.ok);
  BlobId id = sim.stored_ids().at(0);
  CHECK(sim.node("node-3")->recovery_downloaded(id) >= 4096);
  CHECK(sim.node("node-3")->has_complete_pair(id, 3));
}

TEST_CASE("byzantine writer: all readers reject and the blob is invalidated") {
  auto s = Scenario::load(std::string(GRIDSTORE_SCENARIO_DIR) + "/byzantine_writer.json");
  Simulation sim(s);
  auto report = sim.run();
  INFO(nlohmann::json(report.violations).dump());
  CHECK(report.ok);
  BlobId id = sim.stored_ids().at(0);
  CHECK(sim.chain().is_invalid(id));
  CHECK(sim.chain().attestation_weight(id) >= 2);  // f+1 at f=1
}

TEST_CASE("duplicate store of the same blob is idempotent") {
  Scenario s;
  s.name = "dup";
  s.f = 1;
  s.seed = 12;
  s.committees = {{1, {"node-0", "node-1", "node-2", "node-3"}}};
  for (int i = 0; i < 2; ++i) {
    WorkloadOp store;
    store.kind = WorkloadOp::Kind::kStore;
    store.client = "client-0";
    store.size = 12;
    store.expiry_epoch = 10;
    store.at_step = i == 0 ? 1 : 300;
    if (i == 1) store.content_ref = 0;
    s.workload.push_back(store);
  }
  Simulation sim(s);
  auto report = sim.run();
  INFO(nlohmann::json(report.violations).dump());
  CHECK(report.ok);
  CHECK(sim.stored_ids().at(0) == sim.stored_ids().at(1));
  // exactly one certificate event on chain
  int certs = 0;
  for (const auto& e : sim.chain().events())
    if (e.kind == ChainEventKind::kCertified) ++certs;
  CHECK(certs == 1);
}

TEST_CASE("reader bandwidth for a successful read stays near the blob size") {
  Scenario s;
  s.name = "read-bandwidth";
  s.f = 1;
  s.seed = 13;
  s.committees = {{1, {"node-0", "node-1", "node-2", "node-3"}}};
  WorkloadOp store;
  store.kind = WorkloadOp::Kind::kStore;
  store.client = "client-0";
  store.size = 6000;
  store.expiry_epoch = 10;
  store.at_step = 1;
  WorkloadOp read;
  read.kind = WorkloadOp::Kind::kRead;
  read.client = "client-1";
  read.blob_ref = 0;
  read.at_step = 100;
  read.expect = "blob";
  s.workload = {store, read};
  Simulation sim(s);
  auto report = sim.run();
  REQUIRE(report.ok);
  auto reads = report.metrics.at("reads");
  REQUIRE(reads.size() == 1);
  // (2f+1)(f+1)*symbol_size of sliver payload plus metadata and envelopes
  std::uint64_t received = reads[0].at("bytes_received").get<std::uint64_t>();
  CHECK(received >= 6000);
  CHECK(received < 3 * 6000);
  CHECK(reads[0].at("slivers_used").get<std::uint32_t>() == 3);

  // writer upload is bounded by n pairs plus metadata
  auto blobs = report.metrics.at("blobs");
  std::uint64_t sent = blobs[0].at("bytes_sent").get<std::uint64_t>();
  double blowup = storage_blowup(EncodingConfig::make(1, 2));
  CHECK(sent >= std::uint64_t(6000 * blowup));
  CHECK(sent < std::uint64_t(6000 * blowup) + 4 * 3000);  // metadata + envelopes
  // replication factor matches the codec formula (padding slack aside)
  double rf = blobs[0].at("replication_factor").get<double>();
  CHECK(std::abs(rf - blowup) < 0.05);
}
