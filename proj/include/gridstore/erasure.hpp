#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "gridstore/gf16.hpp"
#include "gridstore/serialize.hpp"

namespace gridstore {

struct CodecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shard-count / symbol-size configuration. n_shards is always 3f+1; symbol
/// sizes are even so symbols split into 16-bit field elements.
struct EncodingConfig {
  std::uint32_t f = 0;
  std::uint32_t n_shards = 1;
  std::uint32_t symbol_size = 2;

  static EncodingConfig make(std::uint32_t f, std::uint32_t symbol_size) {
    EncodingConfig c{f, 3 * f + 1, symbol_size};
    c.validate();
    return c;
  }

  void validate() const {
    if (n_shards != 3 * f + 1) throw CodecError("n_shards must equal 3f+1");
    if (symbol_size < 1) throw CodecError("symbol_size must be at least 1");
    if (symbol_size % 2 != 0) throw CodecError("symbol_size must be even (16-bit field elements)");
    if (n_shards > gf16::kMaxCodeLength) throw CodecError("shard count exceeds field code length");
  }

  // Row code: sliver length 2f+1 symbols, reconstruction threshold 2f+1.
  std::uint32_t primary_sliver_len() const { return 2 * f + 1; }
  // Column code: sliver length f+1 symbols, reconstruction threshold f+1.
  std::uint32_t secondary_sliver_len() const { return f + 1; }
  std::uint32_t source_symbol_count() const { return (f + 1) * (2 * f + 1); }
  std::uint64_t capacity_bytes() const {
    return std::uint64_t(source_symbol_count()) * symbol_size;
  }

  /// Smallest valid symbol size that fits `blob_len` bytes in the source grid.
  static std::uint32_t choose_symbol_size(std::uint64_t blob_len, std::uint32_t f) {
    std::uint64_t cells = std::uint64_t(f + 1) * (2 * f + 1);
    std::uint64_t s = (blob_len + cells - 1) / cells;
    if (s < 2) s = 2;
    if (s % 2 != 0) ++s;
    return static_cast<std::uint32_t>(s);
  }

  bool operator==(const EncodingConfig&) const = default;
};

/// One codeword position: `index` is the evaluation point, `data` the symbol
/// bytes (uniform size within a codeword).
struct Symbol {
  std::uint32_t index = 0;
  Bytes data;

  bool operator==(const Symbol&) const = default;
};

namespace detail {

inline std::uint16_t elem(const Bytes& b, std::size_t i) {
  return static_cast<std::uint16_t>(b[2 * i] | (b[2 * i + 1] << 8));
}

inline void put_elem(Bytes& b, std::size_t i, std::uint16_t v) {
  b[2 * i] = static_cast<std::uint8_t>(v & 0xff);
  b[2 * i + 1] = static_cast<std::uint8_t>(v >> 8);
}

// Lagrange coefficients c_j such that the codeword value at point `target`
// equals sum_j c_j * y_j, for interpolation points xs (distinct).
inline std::vector<std::uint16_t> lagrange_row(std::span<const std::uint16_t> xs,
                                               std::uint16_t target) {
  std::vector<std::uint16_t> coef(xs.size());
  // num = prod_k (target - x_k); zero iff target is one of the points.
  std::uint16_t num = 1;
  for (auto x : xs) num = gf16::mul(num, gf16::sub(target, x));
  for (std::size_t j = 0; j < xs.size(); ++j) {
    if (xs[j] == target) {
      coef[j] = 1;
      continue;
    }
    if (num == 0) {
      coef[j] = 0;  // target coincides with a different point
      continue;
    }
    std::uint16_t denom = gf16::sub(target, xs[j]);
    for (std::size_t k = 0; k < xs.size(); ++k)
      if (k != j) denom = gf16::mul(denom, gf16::sub(xs[j], xs[k]));
    coef[j] = gf16::div(num, denom);
  }
  return coef;
}

inline void check_symbol_sizes(const std::vector<Bytes>& symbols) {
  for (const auto& s : symbols)
    if (s.size() != symbols.front().size())
      throw CodecError("source symbols must have uniform size");
}

inline void check_code_params(std::size_t source_count, std::uint32_t t, std::uint32_t n,
                              std::size_t symbol_size) {
  if (t == 0) throw CodecError("threshold t must be positive");
  if (source_count != t) throw CodecError("source must contain exactly t symbols");
  if (t > n) throw CodecError("threshold t exceeds codeword length n");
  if (n > gf16::kMaxCodeLength) throw CodecError("codeword length exceeds field limit");
  if (n > t && symbol_size % 2 != 0)
    throw CodecError("symbol size must be even for field arithmetic");
}

}  // namespace detail

/// Systematic encode: output positions 0..t-1 are the source verbatim,
/// positions t..n-1 are evaluations of the interpolating polynomial.
inline std::vector<Bytes> rs_encode(const std::vector<Bytes>& source, std::uint32_t t,
                                    std::uint32_t n) {
  detail::check_code_params(source.size(), t, n, source.empty() ? 0 : source.front().size());
  detail::check_symbol_sizes(source);
  std::vector<Bytes> out(source.begin(), source.end());
  out.reserve(n);
  if (n == t) return out;

  std::vector<std::uint16_t> xs(t);
  for (std::uint32_t i = 0; i < t; ++i) xs[i] = static_cast<std::uint16_t>(i);
  const std::size_t elems = source.front().size() / 2;
  for (std::uint32_t j = t; j < n; ++j) {
    auto coef = detail::lagrange_row(xs, static_cast<std::uint16_t>(j));
    Bytes sym(source.front().size(), 0);
    for (std::size_t e = 0; e < elems; ++e) {
      std::uint16_t acc = 0;
      for (std::uint32_t i = 0; i < t; ++i)
        acc = gf16::add(acc, gf16::mul(coef[i], detail::elem(source[i], e)));
      detail::put_elem(sym, e, acc);
    }
    out.push_back(std::move(sym));
  }
  return out;
}

/// Single-position expansion; equals rs_encode(source, t, n)[j].
inline Bytes rs_expand_symbol(const std::vector<Bytes>& source, std::uint32_t t, std::uint32_t n,
                              std::uint32_t j) {
  detail::check_code_params(source.size(), t, n, source.empty() ? 0 : source.front().size());
  detail::check_symbol_sizes(source);
  if (j >= n) throw CodecError("expansion index out of range");
  if (j < t) return source[j];

  std::vector<std::uint16_t> xs(t);
  for (std::uint32_t i = 0; i < t; ++i) xs[i] = static_cast<std::uint16_t>(i);
  auto coef = detail::lagrange_row(xs, static_cast<std::uint16_t>(j));
  const std::size_t elems = source.front().size() / 2;
  Bytes sym(source.front().size(), 0);
  for (std::size_t e = 0; e < elems; ++e) {
    std::uint16_t acc = 0;
    for (std::uint32_t i = 0; i < t; ++i)
      acc = gf16::add(acc, gf16::mul(coef[i], detail::elem(source[i], e)));
    detail::put_elem(sym, e, acc);
  }
  return sym;
}

/// Decode the t source symbols from any >= t codeword positions. Symbols are
/// selected deterministically (lowest indices win) so every holder of the
/// same set computes identical results.
inline std::vector<Bytes> rs_decode(std::vector<Symbol> subset, std::uint32_t t, std::uint32_t n) {
  if (t == 0) throw CodecError("threshold t must be positive");
  if (t > n) throw CodecError("threshold t exceeds codeword length n");
  if (n > gf16::kMaxCodeLength) throw CodecError("codeword length exceeds field limit");
  if (subset.size() < t) throw CodecError("insufficient symbols: need t");
  std::sort(subset.begin(), subset.end(),
            [](const Symbol& a, const Symbol& b) { return a.index < b.index; });
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (subset[i].index >= n) throw CodecError("symbol index out of range");
    if (i > 0 && subset[i].index == subset[i - 1].index)
      throw CodecError("duplicate symbol indices");
    if (subset[i].data.size() != subset.front().data.size())
      throw CodecError("subset symbols must have uniform size");
  }
  subset.resize(t);
  const std::size_t size = subset.front().data.size();
  if (n > t && size % 2 != 0) throw CodecError("symbol size must be even for field arithmetic");

  std::vector<std::uint16_t> xs(t);
  bool systematic_prefix = true;
  for (std::uint32_t i = 0; i < t; ++i) {
    xs[i] = static_cast<std::uint16_t>(subset[i].index);
    systematic_prefix = systematic_prefix && subset[i].index == i;
  }
  std::vector<Bytes> out;
  out.reserve(t);
  if (systematic_prefix) {
    for (auto& s : subset) out.push_back(std::move(s.data));
    return out;
  }
  const std::size_t elems = size / 2;
  for (std::uint32_t p = 0; p < t; ++p) {
    auto it = std::find(xs.begin(), xs.end(), static_cast<std::uint16_t>(p));
    if (it != xs.end()) {
      out.push_back(subset[static_cast<std::size_t>(it - xs.begin())].data);
      continue;
    }
    auto coef = detail::lagrange_row(xs, static_cast<std::uint16_t>(p));
    Bytes sym(size, 0);
    for (std::size_t e = 0; e < elems; ++e) {
      std::uint16_t acc = 0;
      for (std::uint32_t j = 0; j < t; ++j)
        acc = gf16::add(acc, gf16::mul(coef[j], detail::elem(subset[j].data, e)));
      detail::put_elem(sym, e, acc);
    }
    out.push_back(std::move(sym));
  }
  return out;
}

}  // namespace gridstore
