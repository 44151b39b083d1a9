#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gridstore/erasure.hpp"

namespace gridstore {

// Two-dimensional encoding. A blob fills an (f+1) x (2f+1) source grid; each
// column is extended to n symbols (threshold f+1), each row to n symbols
// (threshold 2f+1). Shard i keeps row i of the column extension (its primary
// sliver, 2f+1 symbols) and column i of the row extension (its secondary
// sliver, f+1 symbols). By linearity both extensions agree on a single n x n
// matrix E, whose cells are the unit of recovery and challenge traffic.

enum class Dimension : std::uint8_t { kPrimary = 0, kSecondary = 1 };

inline const char* dimension_name(Dimension d) {
  return d == Dimension::kPrimary ? "primary" : "secondary";
}

struct SourceMatrix {
  EncodingConfig config;
  std::vector<Bytes> cells;  // row-major, (f+1)*(2f+1) entries
  std::uint64_t blob_len = 0;
  std::uint64_t pad_len = 0;

  std::uint32_t rows() const { return config.secondary_sliver_len(); }
  std::uint32_t cols() const { return config.primary_sliver_len(); }
  const Bytes& cell(std::uint32_t r, std::uint32_t c) const { return cells[r * cols() + c]; }
  Bytes& cell(std::uint32_t r, std::uint32_t c) { return cells[r * cols() + c]; }

  /// Row-major concatenation truncated to `len` bytes (de-padding).
  Bytes extract_blob(std::uint64_t len) const {
    Bytes out;
    out.reserve(len);
    for (const auto& c : cells) {
      for (auto b : c) {
        if (out.size() == len) return out;
        out.push_back(b);
      }
    }
    if (out.size() != len) throw CodecError("blob length exceeds matrix capacity");
    return out;
  }
};

struct PrimarySliver {
  std::uint32_t index = 0;
  std::vector<Bytes> symbols;  // length 2f+1, entry j is E(index, j)

  bool operator==(const PrimarySliver&) const = default;
};

struct SecondarySliver {
  std::uint32_t index = 0;
  std::vector<Bytes> symbols;  // length f+1, entry i is E(i, index)

  bool operator==(const SecondarySliver&) const = default;
};

struct SliverPair {
  std::uint32_t index = 0;
  PrimarySliver primary;
  SecondarySliver secondary;

  bool operator==(const SliverPair&) const = default;
};

/// Cell E(row, col) of the doubly-extended matrix, tagged with the dimension
/// of the sliver it was expanded from.
struct IntersectionSymbol {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  Bytes data;
  Dimension origin = Dimension::kPrimary;

  bool operator==(const IntersectionSymbol&) const = default;
};

inline SourceMatrix make_source_matrix(const Bytes& blob, const EncodingConfig& config) {
  config.validate();
  if (blob.empty()) throw CodecError("blob must not be empty");
  if (blob.size() > config.capacity_bytes())
    throw CodecError("blob exceeds grid capacity; raise symbol_size");
  SourceMatrix m;
  m.config = config;
  m.blob_len = blob.size();
  m.pad_len = config.capacity_bytes() - blob.size();
  m.cells.assign(config.source_symbol_count(), Bytes(config.symbol_size, 0));
  for (std::size_t i = 0; i < blob.size(); ++i)
    m.cells[i / config.symbol_size][i % config.symbol_size] = blob[i];
  return m;
}

/// Encode a pre-built grid. Split out so tests and adversarial writers can
/// encode tampered matrices.
inline std::vector<SliverPair> encode_matrix(const SourceMatrix& m) {
  const auto& cfg = m.config;
  const std::uint32_t n = cfg.n_shards;
  const std::uint32_t rows = m.rows(), cols = m.cols();

  // Column extension: ext_cols[j][i] = E(i, j) for all i.
  std::vector<std::vector<Bytes>> ext_cols(cols);
  for (std::uint32_t j = 0; j < cols; ++j) {
    std::vector<Bytes> col(rows);
    for (std::uint32_t r = 0; r < rows; ++r) col[r] = m.cell(r, j);
    ext_cols[j] = rs_encode(col, rows, n);
  }
  // Row extension: ext_rows[r][j] = E(r, j) for all j.
  std::vector<std::vector<Bytes>> ext_rows(rows);
  for (std::uint32_t r = 0; r < rows; ++r) {
    std::vector<Bytes> row(cols);
    for (std::uint32_t j = 0; j < cols; ++j) row[j] = m.cell(r, j);
    ext_rows[r] = rs_encode(row, cols, n);
  }

  std::vector<SliverPair> pairs(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    pairs[i].index = i;
    pairs[i].primary.index = i;
    pairs[i].primary.symbols.resize(cols);
    for (std::uint32_t j = 0; j < cols; ++j) pairs[i].primary.symbols[j] = ext_cols[j][i];
    pairs[i].secondary.index = i;
    pairs[i].secondary.symbols.resize(rows);
    for (std::uint32_t r = 0; r < rows; ++r) pairs[i].secondary.symbols[r] = ext_rows[r][i];
  }
  return pairs;
}

inline std::vector<SliverPair> encode_blob(const Bytes& blob, const EncodingConfig& config) {
  return encode_matrix(make_source_matrix(blob, config));
}

/// E(i, j) from primary sliver i via the row code.
inline IntersectionSymbol expand_primary(const PrimarySliver& sliver, std::uint32_t j,
                                         const EncodingConfig& config) {
  if (sliver.symbols.size() != config.primary_sliver_len())
    throw CodecError("primary sliver has wrong length");
  if (j >= config.n_shards) throw CodecError("expansion index out of range");
  Bytes data = rs_expand_symbol(sliver.symbols, config.primary_sliver_len(), config.n_shards, j);
  return IntersectionSymbol{sliver.index, j, std::move(data), Dimension::kPrimary};
}

/// E(i, j) from secondary sliver j via the column code.
inline IntersectionSymbol expand_secondary(const SecondarySliver& sliver, std::uint32_t i,
                                           const EncodingConfig& config) {
  if (sliver.symbols.size() != config.secondary_sliver_len())
    throw CodecError("secondary sliver has wrong length");
  if (i >= config.n_shards) throw CodecError("expansion index out of range");
  Bytes data = rs_expand_symbol(sliver.symbols, config.secondary_sliver_len(), config.n_shards, i);
  return IntersectionSymbol{i, sliver.index, std::move(data), Dimension::kSecondary};
}

/// All n symbols of the expanded sliver (the full row of E). Commitments are
/// taken over this expansion.
inline std::vector<Bytes> expand_primary_full(const PrimarySliver& sliver,
                                              const EncodingConfig& config) {
  if (sliver.symbols.size() != config.primary_sliver_len())
    throw CodecError("primary sliver has wrong length");
  return rs_encode(sliver.symbols, config.primary_sliver_len(), config.n_shards);
}

inline std::vector<Bytes> expand_secondary_full(const SecondarySliver& sliver,
                                                const EncodingConfig& config) {
  if (sliver.symbols.size() != config.secondary_sliver_len())
    throw CodecError("secondary sliver has wrong length");
  return rs_encode(sliver.symbols, config.secondary_sliver_len(), config.n_shards);
}

/// Rebuild secondary sliver j from >= f+1 column symbols with distinct rows.
inline SecondarySliver recover_secondary(const std::vector<IntersectionSymbol>& symbols,
                                         std::uint32_t j, const EncodingConfig& config) {
  std::vector<Symbol> subset;
  subset.reserve(symbols.size());
  for (const auto& s : symbols) {
    if (s.col != j) throw CodecError("symbol belongs to a different column");
    subset.push_back(Symbol{s.row, s.data});
  }
  auto source = rs_decode(std::move(subset), config.secondary_sliver_len(), config.n_shards);
  return SecondarySliver{j, std::move(source)};
}

/// Rebuild primary sliver i from >= 2f+1 row symbols with distinct columns.
inline PrimarySliver recover_primary(const std::vector<IntersectionSymbol>& symbols,
                                     std::uint32_t i, const EncodingConfig& config) {
  std::vector<Symbol> subset;
  subset.reserve(symbols.size());
  for (const auto& s : symbols) {
    if (s.row != i) throw CodecError("symbol belongs to a different row");
    subset.push_back(Symbol{s.col, s.data});
  }
  auto source = rs_decode(std::move(subset), config.primary_sliver_len(), config.n_shards);
  return PrimarySliver{i, std::move(source)};
}

/// Decode the source grid from >= f+1 primary slivers (column-wise).
inline SourceMatrix decode_from_primary(const std::vector<PrimarySliver>& slivers,
                                        const EncodingConfig& config) {
  if (slivers.size() < config.secondary_sliver_len())
    throw CodecError("insufficient primary slivers: need f+1");
  SourceMatrix m;
  m.config = config;
  m.blob_len = config.capacity_bytes();
  m.pad_len = 0;
  m.cells.assign(config.source_symbol_count(), {});
  for (std::uint32_t j = 0; j < m.cols(); ++j) {
    std::vector<Symbol> col;
    col.reserve(slivers.size());
    for (const auto& s : slivers) {
      if (s.symbols.size() != config.primary_sliver_len())
        throw CodecError("primary sliver has wrong length");
      col.push_back(Symbol{s.index, s.symbols[j]});
    }
    auto source = rs_decode(std::move(col), config.secondary_sliver_len(), config.n_shards);
    for (std::uint32_t r = 0; r < m.rows(); ++r) m.cell(r, j) = std::move(source[r]);
  }
  return m;
}

/// Decode the source grid from >= 2f+1 secondary slivers (row-wise).
inline SourceMatrix decode_from_secondary(const std::vector<SecondarySliver>& slivers,
                                          const EncodingConfig& config) {
  if (slivers.size() < config.primary_sliver_len())
    throw CodecError("insufficient secondary slivers: need 2f+1");
  SourceMatrix m;
  m.config = config;
  m.blob_len = config.capacity_bytes();
  m.pad_len = 0;
  m.cells.assign(config.source_symbol_count(), {});
  for (std::uint32_t r = 0; r < m.rows(); ++r) {
    std::vector<Symbol> row;
    row.reserve(slivers.size());
    for (const auto& s : slivers) {
      if (s.symbols.size() != config.secondary_sliver_len())
        throw CodecError("secondary sliver has wrong length");
      row.push_back(Symbol{s.index, s.symbols[r]});
    }
    auto source = rs_decode(std::move(row), config.primary_sliver_len(), config.n_shards);
    for (std::uint32_t j = 0; j < m.cols(); ++j) m.cell(r, j) = std::move(source[j]);
  }
  return m;
}

/// Stored-bytes blow-up for sliver data: n/(f+1) + n/(2f+1). Approaches 4.5
/// from below as f grows.
inline double storage_blowup(const EncodingConfig& config) {
  double n = config.n_shards;
  return n / config.secondary_sliver_len() + n / config.primary_sliver_len();
}

}  // namespace gridstore
