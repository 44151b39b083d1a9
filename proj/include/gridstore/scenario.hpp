#pragma once

#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gridstore/chain.hpp"

namespace gridstore {

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NetworkConfig {
  std::uint32_t min_delay = 1;
  std::uint32_t max_delay = 8;
  bool drop_at_epoch_end = true;
};

struct DelayRule {
  std::string src = "*";
  std::string dst = "*";
  std::uint64_t from_step = 0;
  std::uint64_t to_step = UINT64_MAX;
  std::uint64_t extra = 0;

  bool matches(const PartyId& s, const PartyId& d, std::uint64_t step) const {
    if (step < from_step || step > to_step) return false;
    if (src != "*" && src != s) return false;
    if (dst != "*" && dst != d) return false;
    return true;
  }
};

enum class BehaviorKind : std::uint8_t {
  kHonest = 0,
  kSilent = 1,           // sends nothing at all
  kWithholdSlivers = 2,  // acks writes but never serves
  kEquivocateAcks = 3,   // acknowledges without storing
  kChallengeCheat = 4,   // deletes challenged primaries and tries to pass anyway
  kTamperTransfer = 5,   // corrupts outgoing shard-transfer payloads
};

inline BehaviorKind behavior_from_name(const std::string& name) {
  if (name == "honest") return BehaviorKind::kHonest;
  if (name == "silent") return BehaviorKind::kSilent;
  if (name == "withhold-slivers") return BehaviorKind::kWithholdSlivers;
  if (name == "equivocate-acks") return BehaviorKind::kEquivocateAcks;
  if (name == "challenge-cheat") return BehaviorKind::kChallengeCheat;
  if (name == "tamper-transfer") return BehaviorKind::kTamperTransfer;
  throw ScenarioError("unknown behavior: " + name);
}

struct AdversaryConfig {
  std::map<Epoch, std::set<PartyId>> corrupted;  // per-epoch corruption schedule
  std::map<PartyId, BehaviorKind> behaviors;
  std::vector<DelayRule> delays;
};

struct WorkloadOp {
  enum class Kind : std::uint8_t { kStore, kRead, kReconfigure, kChallenge };
  Kind kind{};
  std::uint64_t at_step = 0;
  PartyId client;
  // store
  std::uint64_t size = 0;
  Bytes explicit_bytes;
  Epoch expiry_epoch = 100;
  std::int64_t inconsistent_column = -1;
  std::uint32_t symbol_size = 0;
  std::vector<PartyId> withhold_nodes;
  std::int64_t content_ref = -1;  // >= 0: reuse the bytes of that store op
  // read
  std::uint32_t blob_ref = 0;
  std::string expect = "blob";  // blob | inconsistent | invalid | any
  // reconfigure
  Epoch epoch = 0;
  // challenge
  std::uint64_t k = 0;  // 0: full protocol
};

struct ScenarioAssertions {
  bool all_stores_certify = true;
  bool reads_match_expectation = true;
  bool write_completeness = false;
  bool availability_monitor = false;
  bool no_adversarial_challenge_certificate = false;
  bool honest_challenge_certificates = false;
  bool challenge_ends = false;
  std::vector<std::uint32_t> invalidated_blobs;  // store-op indices
  std::vector<Epoch> epochs_completed;
  std::int64_t max_leaked_row_symbols = -1;  // -1: unchecked
};

struct Scenario {
  std::string name = "scenario";
  std::uint32_t f = 1;
  std::uint64_t seed = 1;
  std::uint64_t step_budget = 500000;
  std::uint32_t symbol_size = 0;  // 0: writers derive per blob
  bool read_primary_slivers = false;
  std::string recovery_mode = "symbols";  // symbols | full-read
  std::uint64_t reconfig_fallback_delay = 300;
  std::uint64_t coin_seed = 7;
  NetworkConfig network;
  std::vector<Committee> committees;
  AdversaryConfig adversary;
  std::vector<WorkloadOp> workload;
  ScenarioAssertions assertions;

  std::uint32_t n_shards() const { return 3 * f + 1; }

  std::set<PartyId> node_parties() const {
    std::set<PartyId> out;
    for (const auto& c : committees) out.insert(c.assignment.begin(), c.assignment.end());
    return out;
  }

  std::set<PartyId> client_parties() const {
    std::set<PartyId> out;
    for (const auto& op : workload)
      if (op.kind == WorkloadOp::Kind::kStore || op.kind == WorkloadOp::Kind::kRead)
        out.insert(op.client);
    return out;
  }

  void validate() const {
    if (f < 1) throw ScenarioError("protocol scenarios need f >= 1");
    if (committees.empty()) throw ScenarioError("at least one committee required");
    for (std::size_t i = 0; i < committees.size(); ++i) {
      const auto& c = committees[i];
      if (c.epoch != i + 1) throw ScenarioError("committee epochs must be 1,2,...");
      if (c.n_shards() != n_shards())
        throw ScenarioError("committee size must equal 3f+1 shards");
    }
    for (const auto& [epoch, parties] : adversary.corrupted) {
      if (epoch == 0 || epoch > committees.size())
        throw ScenarioError("corruption schedule references unknown epoch");
      std::uint32_t weight = committees[epoch - 1].weight_of(parties);
      if (weight > f) throw ScenarioError("adversary exceeds f shards in epoch");
    }
    std::uint32_t stores = 0;
    for (const auto& op : workload) {
      switch (op.kind) {
        case WorkloadOp::Kind::kStore:
          if (op.size == 0 && op.explicit_bytes.empty())
            throw ScenarioError("store op needs a size or explicit bytes");
          ++stores;
          break;
        case WorkloadOp::Kind::kRead:
          if (op.blob_ref >= stores) throw ScenarioError("read references unknown store op");
          break;
        case WorkloadOp::Kind::kReconfigure:
          if (op.epoch < 2 || op.epoch > committees.size())
            throw ScenarioError("reconfigure references unknown committee epoch");
          break;
        case WorkloadOp::Kind::kChallenge:
          break;
      }
    }
    for (auto ref : assertions.invalidated_blobs)
      if (ref >= stores) throw ScenarioError("assertion references unknown store op");
    if (recovery_mode != "symbols" && recovery_mode != "full-read")
      throw ScenarioError("recovery_mode must be 'symbols' or 'full-read'");
    if (network.min_delay < 1 || network.max_delay < network.min_delay)
      throw ScenarioError("network delays must satisfy 1 <= min <= max");
  }

  static Scenario from_json(const nlohmann::json& j) {
    Scenario s;
    s.name = j.value("name", s.name);
    s.f = j.at("f").get<std::uint32_t>();
    s.seed = j.value("seed", s.seed);
    s.step_budget = j.value("step_budget", s.step_budget);
    s.symbol_size = j.value("symbol_size", s.symbol_size);
    s.read_primary_slivers = j.value("read_primary_slivers", s.read_primary_slivers);
    s.recovery_mode = j.value("recovery_mode", s.recovery_mode);
    s.reconfig_fallback_delay = j.value("reconfig_fallback_delay", s.reconfig_fallback_delay);
    s.coin_seed = j.value("coin_seed", s.coin_seed);
    if (j.contains("network")) {
      const auto& n = j.at("network");
      s.network.min_delay = n.value("min_delay", s.network.min_delay);
      s.network.max_delay = n.value("max_delay", s.network.max_delay);
      s.network.drop_at_epoch_end = n.value("drop_at_epoch_end", s.network.drop_at_epoch_end);
    }
    for (const auto& c : j.at("committees")) {
      Committee committee;
      committee.epoch = c.at("epoch").get<Epoch>();
      for (const auto& p : c.at("assignment")) committee.assignment.push_back(p.get<PartyId>());
      s.committees.push_back(std::move(committee));
    }
    if (j.contains("adversary")) {
      const auto& a = j.at("adversary");
      if (a.contains("corrupted"))
        for (const auto& [epoch_str, parties] : a.at("corrupted").items()) {
          Epoch e = std::stoull(epoch_str);
          for (const auto& p : parties) s.adversary.corrupted[e].insert(p.get<PartyId>());
        }
      if (a.contains("behaviors"))
        for (const auto& [party, name] : a.at("behaviors").items())
          s.adversary.behaviors[party] = behavior_from_name(name.get<std::string>());
      if (a.contains("delays"))
        for (const auto& d : a.at("delays")) {
          DelayRule rule;
          rule.src = d.value("src", rule.src);
          rule.dst = d.value("dst", rule.dst);
          rule.from_step = d.value("from_step", rule.from_step);
          rule.to_step = d.value("to_step", rule.to_step);
          rule.extra = d.at("extra").get<std::uint64_t>();
          s.adversary.delays.push_back(rule);
        }
    }
    for (const auto& op_json : j.value("workload", nlohmann::json::array())) {
      WorkloadOp op;
      std::string kind = op_json.at("op").get<std::string>();
      op.at_step = op_json.at("at_step").get<std::uint64_t>();
      if (kind == "store") {
        op.kind = WorkloadOp::Kind::kStore;
        op.client = op_json.at("client").get<PartyId>();
        op.size = op_json.value("size", std::uint64_t{0});
        if (op_json.contains("hex")) op.explicit_bytes = from_hex(op_json.at("hex").get<std::string>());
        op.expiry_epoch = op_json.value("expiry_epoch", op.expiry_epoch);
        op.inconsistent_column = op_json.value("inconsistent_column", op.inconsistent_column);
        op.symbol_size = op_json.value("symbol_size", op.symbol_size);
        if (op_json.contains("withhold_nodes"))
          for (const auto& p : op_json.at("withhold_nodes"))
            op.withhold_nodes.push_back(p.get<PartyId>());
        op.content_ref = op_json.value("content_ref", op.content_ref);
      } else if (kind == "read") {
        op.kind = WorkloadOp::Kind::kRead;
        op.client = op_json.at("client").get<PartyId>();
        op.blob_ref = op_json.at("blob").get<std::uint32_t>();
        op.expect = op_json.value("expect", op.expect);
      } else if (kind == "reconfigure") {
        op.kind = WorkloadOp::Kind::kReconfigure;
        op.epoch = op_json.at("epoch").get<Epoch>();
      } else if (kind == "challenge") {
        op.kind = WorkloadOp::Kind::kChallenge;
        op.k = op_json.value("k", op.k);
      } else {
        throw ScenarioError("unknown workload op: " + kind);
      }
      s.workload.push_back(std::move(op));
    }
    if (j.contains("assertions")) {
      const auto& a = j.at("assertions");
      auto& out = s.assertions;
      out.all_stores_certify = a.value("all_stores_certify", out.all_stores_certify);
      out.reads_match_expectation =
          a.value("reads_match_expectation", out.reads_match_expectation);
      out.write_completeness = a.value("write_completeness", out.write_completeness);
      out.availability_monitor = a.value("availability_monitor", out.availability_monitor);
      out.no_adversarial_challenge_certificate = a.value(
          "no_adversarial_challenge_certificate", out.no_adversarial_challenge_certificate);
      out.honest_challenge_certificates =
          a.value("honest_challenge_certificates", out.honest_challenge_certificates);
      out.challenge_ends = a.value("challenge_ends", out.challenge_ends);
      if (a.contains("invalidated_blobs"))
        for (const auto& r : a.at("invalidated_blobs"))
          out.invalidated_blobs.push_back(r.get<std::uint32_t>());
      if (a.contains("epochs_completed"))
        for (const auto& e : a.at("epochs_completed")) out.epochs_completed.push_back(e.get<Epoch>());
      out.max_leaked_row_symbols = a.value("max_leaked_row_symbols", out.max_leaked_row_symbols);
    }
    s.validate();
    return s;
  }

  static Scenario load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ScenarioError(std::string("scenario parse error: ") + e.what());
    }
    try {
      return from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ScenarioError(std::string("scenario field error: ") + e.what());
    }
  }
};

}  // namespace gridstore
