#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gridstore/node.hpp"

namespace gridstore {

// Epoch-change observation helpers. The protocol itself is distributed across
// the chain (start / ready / completion) and the nodes (transfer, recovery);
// these functions compute the coordinator's view of handover progress and the
// availability invariant that must hold at every simulation step.

enum class HandoverStatus : std::uint8_t { kPending = 0, kTransferred = 1, kRecovered = 2 };

inline const char* handover_status_name(HandoverStatus s) {
  switch (s) {
    case HandoverStatus::kPending: return "pending";
    case HandoverStatus::kTransferred: return "transferred";
    case HandoverStatus::kRecovered: return "recovered";
  }
  return "unknown";
}

using NodeLookup = std::function<const StorageNode*(const PartyId&)>;

struct ReconfigState {
  Epoch old_epoch = 0;
  Epoch new_epoch = 0;
  std::map<std::uint32_t, HandoverStatus> shards;
  std::set<PartyId> ready;
  bool complete = false;
};

/// Shard-by-shard handover progress for the running reconfiguration: a shard
/// is done when its incoming owner holds complete pairs for every certified
/// unexpired valid blob; transferred vs recovered reflects how it got them.
inline ReconfigState reconfig_progress(const Chain& chain, const NodeLookup& node_of) {
  ReconfigState st;
  st.old_epoch = chain.current_epoch();
  st.new_epoch = chain.current_epoch() + 1;
  if (chain.phase() != EpochPhase::kReconfiguring) {
    st.complete = true;
    st.new_epoch = chain.current_epoch();
    st.old_epoch = st.new_epoch > 0 ? st.new_epoch - 1 : 0;
    return st;
  }
  st.ready = chain.ready_signals();
  const auto& committee = chain.committee(st.new_epoch);
  auto certified = chain.certified_blobs_as_of(chain.seq());
  for (std::uint32_t shard = 0; shard < committee.n_shards(); ++shard) {
    const auto* node = node_of(committee.assignment[shard]);
    if (!node) {
      st.shards[shard] = HandoverStatus::kPending;
      continue;
    }
    bool holds_all = true;
    for (const auto& id : certified)
      if (!node->has_complete_pair(id, shard)) {
        holds_all = false;
        break;
      }
    if (!holds_all) st.shards[shard] = HandoverStatus::kPending;
    else if (node->transferred_shards().contains(shard)) st.shards[shard] = HandoverStatus::kTransferred;
    else st.shards[shard] = HandoverStatus::kRecovered;
  }
  return st;
}

/// The availability invariant: for every blob past its availability
/// certificate and unexpired, the committee reads route to holds >= f+1
/// honest shards with complete pairs. Returns one diagnostic per violation.
inline std::vector<std::string> availability_violations(const Chain& chain,
                                                        const std::set<PartyId>& corrupted,
                                                        const NodeLookup& node_of) {
  std::vector<std::string> out;
  auto certified = chain.certified_blobs_as_of(chain.seq());
  for (const auto& id : certified) {
    auto reg = chain.registration(id);
    if (!reg) continue;
    Epoch route = chain.read_epoch_for(reg->registered_epoch);
    const auto& committee = chain.committee(route);
    std::uint32_t honest_holding = 0;
    for (std::uint32_t shard = 0; shard < committee.n_shards(); ++shard) {
      const PartyId& owner = committee.assignment[shard];
      if (corrupted.contains(owner)) continue;
      const auto* node = node_of(owner);
      if (node && node->has_complete_pair(id, shard)) ++honest_holding;
    }
    std::uint32_t f = committee.fault_bound();
    if (honest_holding < f + 1) {
      out.push_back("blob " + digest_hex(id).substr(0, 16) + " has only " +
                    std::to_string(honest_holding) + " honest shards in epoch " +
                    std::to_string(route));
    }
  }
  return out;
}

}  // namespace gridstore
