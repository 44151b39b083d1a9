#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gridstore/codec.hpp"
#include "oracle.hpp"

using namespace gridstore;

namespace {

Bytes iota_blob(std::size_t len) {
  Bytes b(len);
  for (std::size_t i = 0; i < len; ++i) b[i] = static_cast<std::uint8_t>(i & 0xff);
  return b;
}

std::uint64_t pair_bytes(const SliverPair& p) {
  std::uint64_t total = 0;
  for (const auto& s : p.primary.symbols) total += s.size();
  for (const auto& s : p.secondary.symbols) total += s.size();
  return total;
}

}  // namespace

TEST_CASE("source grid fills row-major with recorded padding") {
  auto cfg = EncodingConfig::make(1, 2);

  SECTION("exact fit") {
    auto m = make_source_matrix(iota_blob(12), cfg);
    CHECK(m.pad_len == 0);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m.cell(0, 0) == Bytes{0x00, 0x01});
    CHECK(m.cell(1, 2) == Bytes{0x0A, 0x0B});
    CHECK(m.extract_blob(12) == iota_blob(12));
  }
  SECTION("padding fills the tail with zeros") {
    auto m = make_source_matrix(iota_blob(11), cfg);
    CHECK(m.pad_len == 1);
    CHECK(m.cell(1, 2) == Bytes{0x0A, 0x00});
    CHECK(m.extract_blob(11) == iota_blob(11));
  }
  SECTION("over capacity is rejected") {
    CHECK_THROWS_AS(make_source_matrix(iota_blob(13), cfg), CodecError);
  }
  SECTION("empty blob is rejected") { CHECK_THROWS_AS(make_source_matrix({}, cfg), CodecError); }
}

TEST_CASE("encode produces n pairs with systematic ranges matching the grid") {
  auto cfg = EncodingConfig::make(1, 2);
  auto blob = iota_blob(12);
  auto m = make_source_matrix(blob, cfg);
  auto pairs = encode_blob(blob, cfg);
  REQUIRE(pairs.size() == 4);
  for (const auto& p : pairs) {
    CHECK(p.primary.symbols.size() == 3);
    CHECK(p.secondary.symbols.size() == 2);
    CHECK(p.primary.index == p.index);
    CHECK(p.secondary.index == p.index);
  }
  // systematic ranges and the cross-dimension equality on the source grid
  for (std::uint32_t i = 0; i <= cfg.f; ++i)
    for (std::uint32_t j = 0; j <= 2 * cfg.f; ++j) {
      CHECK(pairs[i].primary.symbols[j] == m.cell(i, j));
      CHECK(pairs[j].secondary.symbols[i] == m.cell(i, j));
    }
}

TEST_CASE("stored bytes across pairs follow the blow-up formula") {
  auto cfg = EncodingConfig::make(1, 2);
  auto pairs = encode_blob(iota_blob(12), cfg);
  std::uint64_t total = 0;
  for (const auto& p : pairs) total += pair_bytes(p);
  CHECK(total == 40);  // 12 * (4/2 + 4/3)
  CHECK(storage_blowup(cfg) == Catch::Approx(40.0 / 12.0));
}

TEST_CASE("degenerate single-shard config stores the blob as both slivers") {
  auto cfg = EncodingConfig::make(0, 2);
  Bytes blob = {0xCA, 0xFE};
  auto pairs = encode_blob(blob, cfg);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].primary.symbols == std::vector<Bytes>{blob});
  CHECK(pairs[0].secondary.symbols == std::vector<Bytes>{blob});
}

TEST_CASE("expansions return stored symbols in systematic range and match full re-encode") {
  std::mt19937_64 rng(31);
  auto cfg = EncodingConfig::make(1, 4);
  auto blob = oracle::random_bytes(rng, cfg.capacity_bytes());
  auto pairs = encode_blob(blob, cfg);

  for (const auto& p : pairs) {
    auto row = expand_primary_full(p.primary, cfg);
    for (std::uint32_t j = 0; j < cfg.n_shards; ++j) {
      auto sym = expand_primary(p.primary, j, cfg);
      CHECK(sym.row == p.index);
      CHECK(sym.col == j);
      CHECK(sym.data == row[j]);
      if (j <= 2 * cfg.f) CHECK(sym.data == p.primary.symbols[j]);
    }
    auto col = expand_secondary_full(p.secondary, cfg);
    for (std::uint32_t i = 0; i < cfg.n_shards; ++i) {
      auto sym = expand_secondary(p.secondary, i, cfg);
      CHECK(sym.row == i);
      CHECK(sym.col == p.index);
      CHECK(sym.data == col[i]);
      if (i <= cfg.f) CHECK(sym.data == p.secondary.symbols[i]);
    }
  }
  CHECK_THROWS_AS(expand_primary(pairs[0].primary, cfg.n_shards, cfg), CodecError);
}

TEST_CASE("expansions agree across dimensions on the doubly-extended grid") {
  std::mt19937_64 rng(32);
  for (std::uint32_t f : {1u, 2u}) {
    auto cfg = EncodingConfig::make(f, 2);
    auto blob = oracle::random_bytes(rng, cfg.capacity_bytes());
    auto pairs = encode_blob(blob, cfg);
    for (std::uint32_t i = 0; i < cfg.n_shards; ++i)
      for (std::uint32_t j = 0; j < cfg.n_shards; ++j)
        CHECK(expand_primary(pairs[i].primary, j, cfg).data ==
              expand_secondary(pairs[j].secondary, i, cfg).data);
  }
}

TEST_CASE("secondary sliver recovery from any f+1 column symbols") {
  std::mt19937_64 rng(33);
  auto cfg = EncodingConfig::make(1, 2);
  auto blob = oracle::random_bytes(rng, 12);
  auto pairs = encode_blob(blob, cfg);
  const std::uint32_t target = 2;

  std::vector<IntersectionSymbol> column;
  for (std::uint32_t i = 0; i < cfg.n_shards; ++i)
    column.push_back(expand_primary(pairs[i].primary, target, cfg));

  SECTION("systematic symbols return the sliver verbatim") {
    std::vector<IntersectionSymbol> sys(column.begin(), column.begin() + 2);
    CHECK(recover_secondary(sys, target, cfg) == pairs[target].secondary);
  }
  SECTION("every 2-subset agrees") {
    oracle::for_each_subset(4, 2, [&](const std::vector<std::uint32_t>& idx) {
      std::vector<IntersectionSymbol> subset;
      for (auto i : idx) subset.push_back(column[i]);
      CHECK(recover_secondary(subset, target, cfg) == pairs[target].secondary);
    });
  }
  SECTION("repair-only rows also recover") {
    std::vector<IntersectionSymbol> repair = {column[2], column[3]};
    CHECK(recover_secondary(repair, target, cfg) == pairs[target].secondary);
  }
  SECTION("below threshold fails") {
    std::vector<IntersectionSymbol> one = {column[0]};
    CHECK_THROWS_AS(recover_secondary(one, target, cfg), CodecError);
  }
  SECTION("wrong-column symbol rejected") {
    auto stray = expand_primary(pairs[0].primary, 1, cfg);
    std::vector<IntersectionSymbol> bad = {column[0], stray};
    CHECK_THROWS_AS(recover_secondary(bad, target, cfg), CodecError);
  }
}

TEST_CASE("primary sliver recovery needs 2f+1 row symbols") {
  std::mt19937_64 rng(34);
  auto cfg = EncodingConfig::make(1, 2);
  auto blob = oracle::random_bytes(rng, 12);
  auto pairs = encode_blob(blob, cfg);
  const std::uint32_t target = 3;

  std::vector<IntersectionSymbol> row;
  for (std::uint32_t j = 0; j < cfg.n_shards; ++j)
    row.push_back(expand_secondary(pairs[j].secondary, target, cfg));

  oracle::for_each_subset(4, 3, [&](const std::vector<std::uint32_t>& idx) {
    std::vector<IntersectionSymbol> subset;
    for (auto i : idx) subset.push_back(row[i]);
    CHECK(recover_primary(subset, target, cfg) == pairs[target].primary);
  });

  std::vector<IntersectionSymbol> short_set = {row[0], row[1]};
  CHECK_THROWS_AS(recover_primary(short_set, target, cfg), CodecError);
}

TEST_CASE("grid decoding from primary and secondary sliver subsets") {
  std::mt19937_64 rng(35);
  auto cfg = EncodingConfig::make(1, 2);
  auto blob = oracle::random_bytes(rng, 12);
  auto pairs = encode_blob(blob, cfg);

  SECTION("systematic primary rows read off directly") {
    std::vector<PrimarySliver> sys = {pairs[0].primary, pairs[1].primary};
    CHECK(decode_from_primary(sys, cfg).extract_blob(12) == blob);
  }
  SECTION("any f+1 primary slivers decode") {
    oracle::for_each_subset(4, 2, [&](const std::vector<std::uint32_t>& idx) {
      std::vector<PrimarySliver> subset;
      for (auto i : idx) subset.push_back(pairs[i].primary);
      CHECK(decode_from_primary(subset, cfg).extract_blob(12) == blob);
    });
  }
  SECTION("any 2f+1 secondary slivers decode") {
    oracle::for_each_subset(4, 3, [&](const std::vector<std::uint32_t>& idx) {
      std::vector<SecondarySliver> subset;
      for (auto i : idx) subset.push_back(pairs[i].secondary);
      CHECK(decode_from_secondary(subset, cfg).extract_blob(12) == blob);
    });
  }
  SECTION("below-threshold subsets fail") {
    CHECK_THROWS_AS(decode_from_primary({pairs[2].primary}, cfg), CodecError);
    std::vector<SecondarySliver> two = {pairs[0].secondary, pairs[3].secondary};
    CHECK_THROWS_AS(decode_from_secondary(two, cfg), CodecError);
  }
  SECTION("decode then re-encode reproduces every sliver byte-exactly") {
    std::vector<SecondarySliver> subset = {pairs[1].secondary, pairs[2].secondary,
                                           pairs[3].secondary};
    auto m = decode_from_secondary(subset, cfg);
    auto re = encode_matrix(m);
    CHECK(re == pairs);
  }
}

TEST_CASE("full round trip across fault bounds and blob lengths") {
  std::mt19937_64 rng(36);
  for (std::uint32_t f : {0u, 1u, 2u, 3u}) {
    auto cfg = EncodingConfig::make(f, 4);
    std::uint64_t cap = cfg.capacity_bytes();
    for (std::uint64_t len :
         {std::uint64_t{1}, std::uint64_t{cfg.symbol_size - 1}, cap / 2, cap}) {
      if (len == 0 || len > cap) continue;
      auto blob = oracle::random_bytes(rng, len);
      auto pairs = encode_blob(blob, cfg);
      const std::uint32_t n = cfg.n_shards;
      const std::uint32_t tp = cfg.secondary_sliver_len();   // primaries needed
      const std::uint32_t ts = cfg.primary_sliver_len();     // secondaries needed

      auto check_primary = [&](const std::vector<std::uint32_t>& idx) {
        std::vector<PrimarySliver> subset;
        for (auto i : idx) subset.push_back(pairs[i].primary);
        CHECK(decode_from_primary(subset, cfg).extract_blob(len) == blob);
      };
      auto check_secondary = [&](const std::vector<std::uint32_t>& idx) {
        std::vector<SecondarySliver> subset;
        for (auto i : idx) subset.push_back(pairs[i].secondary);
        CHECK(decode_from_secondary(subset, cfg).extract_blob(len) == blob);
      };

      if (f <= 2) {
        oracle::for_each_subset(n, tp, check_primary);
        oracle::for_each_subset(n, ts, check_secondary);
      } else {
        for (int iter = 0; iter < 25; ++iter) {
          std::vector<std::uint32_t> pool(n);
          for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
          for (std::uint32_t i = 0; i < ts; ++i) std::swap(pool[i], pool[i + rng() % (n - i)]);
          check_primary(std::vector<std::uint32_t>(pool.begin(), pool.begin() + tp));
          check_secondary(std::vector<std::uint32_t>(pool.begin(), pool.begin() + ts));
        }
      }
    }
  }
}

TEST_CASE("blow-up stays below 4.5 and hits the quoted value at f=33") {
  for (std::uint32_t f = 1; f <= 40; ++f) {
    auto cfg = EncodingConfig::make(f, 2);
    double expect = double(cfg.n_shards) / (f + 1) + double(cfg.n_shards) / (2 * f + 1);
    CHECK(storage_blowup(cfg) == Catch::Approx(expect));
    CHECK(storage_blowup(cfg) < 4.5);
  }
  auto cfg33 = EncodingConfig::make(33, 2);
  CHECK(cfg33.n_shards == 100);
  CHECK(std::abs(storage_blowup(cfg33) - 4.434) < 0.001);
}

TEST_CASE("recovering one pair consumes n intersection symbols") {
  // f+1 column symbols for the secondary, then 2f more row symbols plus the
  // expansion of the freshly recovered secondary at the node's own index.
  std::mt19937_64 rng(37);
  for (std::uint32_t f : {1u, 2u}) {
    auto cfg = EncodingConfig::make(f, 6);
    auto blob = oracle::random_bytes(rng, cfg.capacity_bytes());
    auto pairs = encode_blob(blob, cfg);
    const std::uint32_t r = cfg.n_shards - 1;

    std::uint64_t downloaded = 0;
    std::vector<IntersectionSymbol> col;
    for (std::uint32_t i = 0; i < cfg.secondary_sliver_len(); ++i) {
      col.push_back(expand_primary(pairs[i].primary, r, cfg));
      downloaded += col.back().data.size();
    }
    auto secondary = recover_secondary(col, r, cfg);
    CHECK(secondary == pairs[r].secondary);

    std::vector<IntersectionSymbol> row;
    row.push_back(expand_secondary(secondary, r, cfg));  // self-derived, no download
    for (std::uint32_t j = 0; j < 2 * cfg.f; ++j) {
      row.push_back(expand_secondary(pairs[j].secondary, r, cfg));
      downloaded += row.back().data.size();
    }
    CHECK(recover_primary(row, r, cfg) == pairs[r].primary);

    CHECK(downloaded == std::uint64_t(cfg.n_shards) * cfg.symbol_size);
  }
}

TEST_CASE("parallel-friendly determinism: same blob twice gives identical pairs") {
  std::mt19937_64 rng(38);
  auto cfg = EncodingConfig::make(2, 8);
  auto blob = oracle::random_bytes(rng, cfg.capacity_bytes() / 2);
  CHECK(encode_blob(blob, cfg) == encode_blob(blob, cfg));
}
