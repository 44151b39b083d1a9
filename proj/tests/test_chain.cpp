#include <catch2/catch_amalgamated.hpp>

#include "gridstore/chain.hpp"

using namespace gridstore;

namespace {

struct ChainFixture {
  KeyRegistry registry{7};
  Committee genesis;
  BlobId id{};

  ChainFixture() {
    genesis.epoch = 1;
    genesis.assignment = {"node-0", "node-1", "node-2", "node-3"};
    for (const auto& p : genesis.assignment) registry.ensure(p);
    registry.ensure("node-4");
    id[0] = 0xaa;
  }

  Chain chain() { return Chain(genesis, &registry); }

  Certificate cert_for(const BlobId& blob, Epoch epoch,
                       const std::vector<PartyId>& signers) const {
    Certificate c{blob, epoch, {}};
    auto preimage = store_ack_preimage(blob, epoch);
    for (const auto& p : signers) c.signatures.emplace_back(p, registry.sign(p, preimage));
    return c;
  }
};

}  // namespace

TEST_CASE("registration is validated and idempotent") {
  ChainFixture fx;
  auto chain = fx.chain();

  CHECK(chain.reserve_blob(fx.id, 12, 5).ok);
  CHECK(chain.is_registered(fx.id));
  CHECK(chain.registration(fx.id)->registered_epoch == 1);

  SECTION("same payload is a no-op") {
    auto before = chain.seq();
    CHECK(chain.reserve_blob(fx.id, 12, 5).ok);
    CHECK(chain.seq() == before);
  }
  SECTION("conflicting payload is rejected") {
    CHECK_FALSE(chain.reserve_blob(fx.id, 13, 5).ok);
  }
  SECTION("expired epoch is rejected") {
    BlobId other{};
    other[0] = 0xbb;
    CHECK_FALSE(chain.reserve_blob(other, 4, 0).ok);
  }
  SECTION("zero size is rejected") {
    BlobId other{};
    other[0] = 0xcc;
    CHECK_FALSE(chain.reserve_blob(other, 0, 9).ok);
  }
}

TEST_CASE("certificates enforce the 2f+1 shard quorum") {
  ChainFixture fx;
  auto chain = fx.chain();
  REQUIRE(chain.reserve_blob(fx.id, 12, 5).ok);

  SECTION("2f+1 valid signatures reach the availability point") {
    auto cert = fx.cert_for(fx.id, 1, {"node-0", "node-1", "node-2"});
    CHECK(chain.store_certificate(cert).ok);
    CHECK(chain.read_certificate(fx.id).has_value());
    CHECK(chain.events().back().kind == ChainEventKind::kCertified);

    // once stored, the certificate never disappears
    CHECK_FALSE(chain.store_certificate(cert).ok);
    CHECK(chain.read_certificate(fx.id).has_value());
  }
  SECTION("2f signatures are rejected") {
    CHECK_FALSE(chain.store_certificate(fx.cert_for(fx.id, 1, {"node-0", "node-1"})).ok);
  }
  SECTION("duplicate signer counts once") {
    auto cert = fx.cert_for(fx.id, 1, {"node-0", "node-1", "node-0"});
    CHECK_FALSE(chain.store_certificate(cert).ok);
  }
  SECTION("signer outside the committee is rejected") {
    CHECK_FALSE(chain.store_certificate(fx.cert_for(fx.id, 1, {"node-0", "node-1", "node-4"})).ok);
  }
  SECTION("bad signature is rejected") {
    auto cert = fx.cert_for(fx.id, 1, {"node-0", "node-1", "node-2"});
    cert.signatures[2].second[0] ^= 1;
    CHECK_FALSE(chain.store_certificate(cert).ok);
  }
  SECTION("unregistered blob is rejected") {
    BlobId other{};
    other[0] = 0xdd;
    CHECK_FALSE(chain.store_certificate(fx.cert_for(other, 1, {"node-0", "node-1", "node-2"})).ok);
  }
  SECTION("multi-shard signer meets the quorum alone with enough shards") {
    Committee packed{1, {"node-0", "node-0", "node-0", "node-1"}};
    Chain c2(packed, &fx.registry);
    REQUIRE(c2.reserve_blob(fx.id, 12, 5).ok);
    CHECK(c2.store_certificate(fx.cert_for(fx.id, 1, {"node-0"})).ok);
  }
}

TEST_CASE("inconsistency attestations invalidate at f+1 shards") {
  ChainFixture fx;
  auto chain = fx.chain();
  REQUIRE(chain.reserve_blob(fx.id, 12, 5).ok);
  REQUIRE(chain.store_certificate(fx.cert_for(fx.id, 1, {"node-0", "node-1", "node-2"})).ok);

  auto attest = [&](const PartyId& p) {
    return chain.attest_inconsistency(fx.id, p, fx.registry.sign(p, attestation_preimage(fx.id)));
  };

  SECTION("f attestations keep the blob valid, f+1 invalidate") {
    CHECK(attest("node-1").ok);
    CHECK_FALSE(chain.is_invalid(fx.id));
    CHECK(attest("node-2").ok);
    CHECK(chain.is_invalid(fx.id));
    CHECK(chain.invalidation_seq(fx.id).has_value());
  }
  SECTION("duplicate attestations count once") {
    CHECK(attest("node-1").ok);
    CHECK(attest("node-1").ok);
    CHECK_FALSE(chain.is_invalid(fx.id));
    CHECK(chain.attestation_weight(fx.id) == 1);
  }
  SECTION("non-member attester is rejected") {
    auto r = chain.attest_inconsistency(
        fx.id, "node-4", fx.registry.sign("node-4", attestation_preimage(fx.id)));
    CHECK_FALSE(r.ok);
  }
  SECTION("attestation for uncertified blob is rejected") {
    BlobId other{};
    other[0] = 0xee;
    REQUIRE(chain.reserve_blob(other, 3, 5).ok);
    auto r = chain.attest_inconsistency(other, "node-1",
                                        fx.registry.sign("node-1", attestation_preimage(other)));
    CHECK_FALSE(r.ok);
  }
}

TEST_CASE("reconfiguration completes exactly at 2f+1 ready shards") {
  ChainFixture fx;
  auto chain = fx.chain();
  Committee next{2, {"node-4", "node-1", "node-2", "node-3"}};
  fx.registry.ensure("node-4");

  CHECK(chain.begin_reconfiguration(next).ok);
  CHECK(chain.phase() == EpochPhase::kReconfiguring);
  CHECK(chain.write_target_epoch() == 2);
  CHECK_FALSE(chain.begin_reconfiguration(next).ok);  // duplicate start

  auto ready = [&](const PartyId& p) {
    return chain.signal_ready(p, fx.registry.sign(p, ready_signal_preimage(2, p)));
  };

  CHECK(ready("node-4").ok);
  CHECK(ready("node-1").ok);
  CHECK(chain.phase() == EpochPhase::kReconfiguring);
  CHECK(chain.current_epoch() == 1);

  // signals from non-members are ignored
  CHECK(ready("node-0").ok);
  CHECK(chain.current_epoch() == 1);

  CHECK(ready("node-2").ok);
  CHECK(chain.current_epoch() == 2);
  CHECK(chain.phase() == EpochPhase::kSteady);
  CHECK(chain.events().back().kind == ChainEventKind::kEpochCompleted);
}

TEST_CASE("challenge lifecycle on chain") {
  ChainFixture fx;
  auto chain = fx.chain();
  REQUIRE(chain.begin_challenge(0).ok);
  CHECK(chain.phase() == EpochPhase::kChallenge);
  CHECK(chain.challenge_anchor_seq().has_value());
  CHECK_FALSE(chain.begin_challenge(0).ok);
  CHECK_FALSE(chain.end_challenge().ok);  // below quorum

  Digest set_digest{};
  auto cert_for = [&](const PartyId& prover, const std::vector<PartyId>& confirmers) {
    ChallengeCertificate cert{prover, 1, set_digest, {}};
    auto preimage = challenge_confirm_preimage(1, prover, set_digest);
    for (const auto& p : confirmers)
      cert.confirmations.emplace_back(p, fx.registry.sign(p, preimage));
    return cert;
  };

  CHECK(chain.certify_challenge(cert_for("node-0", {"node-0", "node-1", "node-2"})).ok);
  CHECK_FALSE(chain.certify_challenge(cert_for("node-0", {"node-0", "node-1", "node-2"})).ok);
  CHECK_FALSE(chain.certify_challenge(cert_for("node-1", {"node-1", "node-2"})).ok);
  CHECK(chain.certify_challenge(cert_for("node-1", {"node-1", "node-2", "node-3"})).ok);
  CHECK(chain.phase() == EpochPhase::kChallenge);
  CHECK(chain.certify_challenge(cert_for("node-2", {"node-0", "node-2", "node-3"})).ok);
  // third certificate crosses 2f+1 shards and auto-ends the phase
  CHECK(chain.phase() == EpochPhase::kSteady);
  CHECK(chain.events().back().kind == ChainEventKind::kChallengeEnded);
}

TEST_CASE("replaying the event log reproduces identical state") {
  ChainFixture fx;
  auto chain = fx.chain();
  REQUIRE(chain.reserve_blob(fx.id, 12, 5).ok);
  REQUIRE(chain.store_certificate(fx.cert_for(fx.id, 1, {"node-0", "node-1", "node-2"})).ok);
  REQUIRE(chain
              .attest_inconsistency(fx.id, "node-1",
                                    fx.registry.sign("node-1", attestation_preimage(fx.id)))
              .ok);
  Committee next{2, {"node-4", "node-1", "node-2", "node-3"}};
  REQUIRE(chain.begin_reconfiguration(next).ok);
  for (const auto& p : {"node-4", "node-1", "node-2"})
    REQUIRE(chain.signal_ready(p, fx.registry.sign(p, ready_signal_preimage(2, p))).ok);

  auto replayed = Chain::replay(chain.events(), fx.genesis, &fx.registry);
  CHECK(replayed.state_equals(chain));
  CHECK(replayed.current_epoch() == 2);
  CHECK(replayed.read_certificate(fx.id).has_value());
}
