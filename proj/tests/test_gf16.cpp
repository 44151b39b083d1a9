#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gridstore/gf16.hpp"

namespace gf = gridstore::gf16;

TEST_CASE("gf16 table construction round-trips log/exp") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20000; ++i) {
    std::uint16_t a = static_cast<std::uint16_t>(rng());
    if (a == 0) continue;
    CHECK(gf::mul(a, gf::inv(a)) == 1);
  }
}

TEST_CASE("gf16 field axioms on random samples") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20000; ++i) {
    std::uint16_t a = static_cast<std::uint16_t>(rng());
    std::uint16_t b = static_cast<std::uint16_t>(rng());
    std::uint16_t c = static_cast<std::uint16_t>(rng());
    CHECK(gf::mul(a, b) == gf::mul(b, a));
    CHECK(gf::mul(a, gf::mul(b, c)) == gf::mul(gf::mul(a, b), c));
    CHECK(gf::mul(a, gf::add(b, c)) == gf::add(gf::mul(a, b), gf::mul(a, c)));
    CHECK(gf::mul(a, 1) == a);
    CHECK(gf::mul(a, 0) == 0);
    if (b != 0) CHECK(gf::mul(gf::div(a, b), b) == a);
  }
}

TEST_CASE("gf16 multiplication matches carryless reference") {
  auto slow_mul = [](std::uint16_t a, std::uint16_t b) {
    std::uint32_t acc = 0;
    std::uint32_t aa = a;
    for (int i = 0; i < 16; ++i) {
      if (b & (1u << i)) acc ^= aa << i;
    }
    for (int i = 31; i >= 16; --i) {
      if (acc & (1u << i)) acc ^= gf::kReductionPoly << (i - 16);
    }
    return static_cast<std::uint16_t>(acc);
  };
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50000; ++i) {
    std::uint16_t a = static_cast<std::uint16_t>(rng());
    std::uint16_t b = static_cast<std::uint16_t>(rng());
    CHECK(gf::mul(a, b) == slow_mul(a, b));
  }
  // spot values
  CHECK(gf::mul(2, 2) == 4);
  CHECK(slow_mul(0x8000, 2) == (0x1100B & 0xffff));
}
