#pragma once

#include <array>
#include <cassert>
#include <cstdint>

namespace gridstore::gf16 {

// GF(2^16) with reduction polynomial x^16 + x^12 + x^3 + x + 1 (0x1100B,
// primitive) and generator alpha = 2. All codec arithmetic lives here.

inline constexpr std::uint32_t kFieldSize = 1u << 16;
inline constexpr std::uint32_t kReductionPoly = 0x1100B;
inline constexpr std::uint32_t kGroupOrder = kFieldSize - 1;

/// Longest codeword supported by evaluation-point encoding: one point per
/// field element.
inline constexpr std::uint32_t kMaxCodeLength = kFieldSize;

namespace detail {

struct Tables {
  // exp is doubled so mul can skip the mod-65535 reduction of summed logs.
  std::array<std::uint16_t, 2 * kGroupOrder> exp;
  std::array<std::uint16_t, kFieldSize> log;

  Tables() {
    std::uint32_t x = 1;
    for (std::uint32_t e = 0; e < kGroupOrder; ++e) {
      exp[e] = static_cast<std::uint16_t>(x);
      exp[e + kGroupOrder] = static_cast<std::uint16_t>(x);
      log[x] = static_cast<std::uint16_t>(e);
      x <<= 1;
      if (x & kFieldSize) x ^= kReductionPoly;
    }
    assert(x == 1);  // generator has full order
    log[0] = 0;      // never read; mul/div special-case zero
  }
};

inline const Tables& tables() {
  static const Tables t;
  return t;
}

}  // namespace detail

inline std::uint16_t add(std::uint16_t a, std::uint16_t b) { return a ^ b; }
inline std::uint16_t sub(std::uint16_t a, std::uint16_t b) { return a ^ b; }

inline std::uint16_t mul(std::uint16_t a, std::uint16_t b) {
  if (a == 0 || b == 0) return 0;
  const auto& t = detail::tables();
  return t.exp[t.log[a] + t.log[b]];
}

inline std::uint16_t inv(std::uint16_t a) {
  assert(a != 0);
  const auto& t = detail::tables();
  return t.exp[kGroupOrder - t.log[a]];
}

inline std::uint16_t div(std::uint16_t a, std::uint16_t b) {
  assert(b != 0);
  if (a == 0) return 0;
  const auto& t = detail::tables();
  return t.exp[t.log[a] + kGroupOrder - t.log[b]];
}

}  // namespace gridstore::gf16
