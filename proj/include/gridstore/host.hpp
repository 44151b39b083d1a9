#pragma once

#include <string>

#include "gridstore/chain.hpp"
#include "gridstore/messages.hpp"

namespace gridstore {

enum class TimerKind : std::uint8_t {
  kWorkloadOp = 0,
  kReconfigFallback = 1,
};

/// Everything a protocol party can do to the outside world. The simulator
/// implements this per party; unit tests implement it with a recording stub.
/// Parties can only sign as themselves, which is what keeps corrupted actors
/// from forging honest identities.
class ProtocolHost {
 public:
  virtual ~ProtocolHost() = default;

  virtual const PartyId& self() const = 0;
  virtual const Chain& chain() const = 0;
  virtual const KeyRegistry& registry() const = 0;
  virtual Signature sign(std::span<const std::uint8_t> msg) const = 0;

  virtual void send(const PartyId& dst, MsgType type, Bytes payload) = 0;
  virtual void submit_tx(const ChainTxMsg& tx) = 0;
  virtual void schedule(std::uint64_t delay_steps, TimerKind kind, std::uint64_t a,
                        std::uint64_t b) = 0;

  /// Transcript hooks.
  virtual void note(const std::string& what, const BlobId* blob) = 0;
  virtual void challenge_note(const PartyId& prover, const PartyId& verifier, const BlobId& blob,
                              const std::string& outcome) = 0;
};

}  // namespace gridstore
