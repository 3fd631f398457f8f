#include "bitgnn/bitdense.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace bitgnn {

namespace {

// Mask selecting the valid (leading) bits of the last 32-bit word of an
// n-bit row.
inline uint32_t tail_mask32(int64_t n) {
  const int rem = static_cast<int>(n & 31);
  return rem == 0 ? 0xFFFFFFFFu : (0xFFFFFFFFu << (32 - rem));
}

// Sum of popcount(f(a, b)) over the first n bits, result masked to the valid
// range. Full interior words are consumed as 64-bit pairs.
template <class F>
inline int64_t popcount_combined(const uint32_t* a, const uint32_t* b, int64_t n, F f) {
  const int64_t nw = (n + 31) / 32;
  int64_t acc = 0;
  int64_t k = 0;
  for (; k + 3 <= nw; k += 2) {
    uint64_t wa, wb;
    std::memcpy(&wa, a + k, 8);
    std::memcpy(&wb, b + k, 8);
    acc += std::popcount(f(wa, wb));
  }
  for (; k < nw; ++k) {
    uint64_t v = f(static_cast<uint64_t>(a[k]), static_cast<uint64_t>(b[k])) & 0xFFFFFFFFull;
    if (k == nw - 1) v &= tail_mask32(n);
    acc += std::popcount(v);
  }
  return acc;
}

}  // namespace

ScaleVector::ScaleVector(Axis axis, std::vector<Real> v) : axis_(axis), v_(std::move(v)) {
  for (Real x : v_) {
    if (!(x > 0) || !std::isfinite(x))
      throw std::invalid_argument("ScaleVector entries must be finite and strictly positive");
  }
}

BitDenseMatrix::BitDenseMatrix(int64_t rows, int64_t cols, BitSemantics sem, int word_bits)
    : rows_(rows), cols_(cols), word_bits_(word_bits), sem_(sem) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("BitDenseMatrix: negative dimension");
  if (word_bits != 32 && word_bits != 64)
    throw std::invalid_argument("BitDenseMatrix: word_bits must be 32 or 64");
  data_.assign(static_cast<size_t>(rows * storage_words_per_row()), 0u);
}

bool BitDenseMatrix::padding_is_zero() const {
  const int64_t spw = storage_words_per_row();
  const int64_t first = cols_ / 32;
  for (int64_t i = 0; i < rows_; ++i) {
    const uint32_t* r = data_.data() + i * spw;
    for (int64_t w = first; w < spw; ++w) {
      uint32_t pad = (w == first && (cols_ & 31)) ? static_cast<uint32_t>(~tail_mask32(cols_))
                                                  : (32 * w >= cols_ ? 0xFFFFFFFFu : 0u);
      if (r[w] & pad) return false;
    }
  }
  return true;
}

BitDenseMatrix binarize(const DenseMatrix& m, int word_bits) {
  BitDenseMatrix out(m.rows(), m.cols(), BitSemantics::PlusMinus, word_bits);
  const int64_t spw = out.storage_words_per_row();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m.rows(); ++i) {
    const Real* src = m.row(i);
    auto dst = out.row_span(i);
    for (int64_t w = 0; w < spw; ++w) {
      uint32_t v = 0;
      const int64_t j0 = 32 * w;
      const int bmax = static_cast<int>(std::min<int64_t>(32, m.cols() - j0));
      for (int b = 0; b < bmax; ++b)
        if (src[j0 + b] >= 0) v |= 1u << (31 - b);
      dst[w] = v;
    }
  }
  return out;
}

std::pair<BitDenseMatrix, ScaleVector> binarize_with_scale(const DenseMatrix& m, Axis axis,
                                                           int word_bits) {
  BitDenseMatrix bits = binarize(m, word_bits);
  const int64_t len = axis == Axis::Row ? m.rows() : m.cols();
  const int64_t span = axis == Axis::Row ? m.cols() : m.rows();
  std::vector<Real> s(static_cast<size_t>(len));
  for (int64_t k = 0; k < len; ++k) {
    double acc = 0;
    for (int64_t t = 0; t < span; ++t)
      acc += std::abs(axis == Axis::Row ? m.at(k, t) : m.at(t, k));
    double mean = span > 0 ? acc / span : 0.0;
    s[static_cast<size_t>(k)] = static_cast<Real>(std::max(mean, 1e-12));
  }
  return {std::move(bits), ScaleVector(axis, std::move(s))};
}

DenseMatrix unpack(const BitDenseMatrix& m) {
  DenseMatrix out(m.rows(), m.cols());
  const Real lo = m.semantics() == BitSemantics::PlusMinus ? -1.0f : 0.0f;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m.rows(); ++i)
    for (int64_t j = 0; j < m.cols(); ++j)
      out.at(i, j) = m.bit(i, j) ? 1.0f : lo;
  return out;
}

int32_t bit_dot_01(std::span<const uint32_t> a, std::span<const uint32_t> b, int64_t n) {
  return static_cast<int32_t>(
      popcount_combined(a.data(), b.data(), n, [](uint64_t x, uint64_t y) { return x & y; }));
}

int32_t bit_dot_pm1(std::span<const uint32_t> a, std::span<const uint32_t> b, int64_t n) {
  const int64_t diff =
      popcount_combined(a.data(), b.data(), n, [](uint64_t x, uint64_t y) { return x ^ y; });
  return static_cast<int32_t>(n - 2 * diff);
}

int32_t bit_dot_pm1_xnor(std::span<const uint32_t> a, std::span<const uint32_t> b, int64_t n) {
  const int64_t same =
      popcount_combined(a.data(), b.data(), n, [](uint64_t x, uint64_t y) { return ~(x ^ y); });
  return static_cast<int32_t>(2 * same - n);
}

int32_t bit_dot_trinary(std::span<const uint32_t> a, std::span<const uint32_t> b, int64_t n,
                        TrinaryStrategy strategy) {
  switch (strategy) {
    case TrinaryStrategy::IfElse: {
      const int64_t nw = (n + 31) / 32;
      int32_t acc = 0;
      for (int64_t k = 0; k < nw; ++k) {
        uint32_t wa = a[static_cast<size_t>(k)];
        if (k == nw - 1) wa &= tail_mask32(n);
        const uint32_t wb = b[static_cast<size_t>(k)];
        while (wa) {
          const int p = std::countr_zero(wa);
          wa &= wa - 1;
          acc += ((wb >> p) & 1u) ? 1 : -1;
        }
      }
      return acc;
    }
    case TrinaryStrategy::AndAndNot: {
      const int64_t pos =
          popcount_combined(a.data(), b.data(), n, [](uint64_t x, uint64_t y) { return x & y; });
      const int64_t neg =
          popcount_combined(a.data(), b.data(), n, [](uint64_t x, uint64_t y) { return x & ~y; });
      return static_cast<int32_t>(pos - neg);
    }
    case TrinaryStrategy::TwoAndMinusPopc: {
      const int64_t pos =
          popcount_combined(a.data(), b.data(), n, [](uint64_t x, uint64_t y) { return x & y; });
      const int64_t tot =
          popcount_combined(a.data(), a.data(), n, [](uint64_t x, uint64_t) { return x; });
      return static_cast<int32_t>(2 * pos - tot);
    }
  }
  throw std::invalid_argument("bit_dot_trinary: unknown strategy");
}

const char* trinary_strategy_name(TrinaryStrategy s) {
  switch (s) {
    case TrinaryStrategy::IfElse: return "if_else";
    case TrinaryStrategy::AndAndNot: return "and_andnot";
    case TrinaryStrategy::TwoAndMinusPopc: return "two_and_minus_popc";
  }
  return "?";
}

void bit_transpose_block(std::span<uint32_t, 32> a) {
  uint32_t m = 0x0000FFFFu;
  for (int j = 16; j != 0; j >>= 1, m ^= m << j) {
    for (int k = 0; k < 32; k = (k + j + 1) & ~j) {
      const uint32_t t = (a[k] ^ (a[k + j] >> j)) & m;
      a[k] ^= t;
      a[k + j] ^= t << j;
    }
  }
}

BitDenseMatrix transpose(const BitDenseMatrix& m) {
  BitDenseMatrix out(m.cols(), m.rows(), m.semantics(), m.word_bits());
  const int64_t row_blocks = (m.rows() + 31) / 32;
  const int64_t spw_in = m.storage_words_per_row();
  // A 64-bit-word matrix is handled by the same 32x32 block walk because its
  // storage is laid out as big-endian 32-bit halves.
#pragma omp parallel for schedule(static)
  for (int64_t bi = 0; bi < row_blocks; ++bi) {
    std::array<uint32_t, 32> buf;
    for (int64_t bj = 0; bj < spw_in; ++bj) {
      for (int t = 0; t < 32; ++t) {
        const int64_t r = 32 * bi + t;
        buf[static_cast<size_t>(t)] = r < m.rows() ? m.row_span(r)[static_cast<size_t>(bj)] : 0u;
      }
      bit_transpose_block(buf);
      const int64_t rmax = std::min<int64_t>(32, m.cols() - 32 * bj);
      for (int64_t t = 0; t < rmax; ++t)
        out.row_span(32 * bj + t)[static_cast<size_t>(bi)] = buf[static_cast<size_t>(t)];
    }
  }
  return out;
}

}  // namespace bitgnn
