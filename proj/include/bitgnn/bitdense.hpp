// Bit-packed dense matrices and the word-level primitives the kernels build on.
#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace bitgnn {

using Real = float;

enum class BitSemantics { ZeroOne, PlusMinus };
enum class Axis { Row, Col };

class DenseMatrix {
public:
  DenseMatrix() = default;
  DenseMatrix(int64_t rows, int64_t cols, Real fill = 0)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows * cols), fill) {}

  int64_t rows() const { return rows_; }
  int64_t cols() const { return cols_; }
  Real& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * cols_ + j)]; }
  Real at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * cols_ + j)]; }
  Real* row(int64_t i) { return data_.data() + i * cols_; }
  const Real* row(int64_t i) const { return data_.data() + i * cols_; }
  size_t payload_bytes() const { return data_.size() * sizeof(Real); }

private:
  int64_t rows_ = 0, cols_ = 0;
  std::vector<Real> data_;
};

// Per-row or per-column scaling factors; entries must stay strictly positive
// so that rescaling never flips the sign of a value it multiplies.
class ScaleVector {
public:
  ScaleVector() = default;
  ScaleVector(Axis axis, std::vector<Real> v);

  Axis axis() const { return axis_; }
  int64_t size() const { return static_cast<int64_t>(v_.size()); }
  Real operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }
  const std::vector<Real>& values() const { return v_; }
  size_t payload_bytes() const { return v_.size() * sizeof(Real); }

private:
  Axis axis_ = Axis::Row;
  std::vector<Real> v_;
};

// Row-major bit matrix. Logical column j lives in word j / word_bits at bit
// (word_bits - 1 - j % word_bits), i.e. the first column occupies the most
// significant bit. Storage is uint32 units; a 64-bit logical word is the
// big-endian pair of two consecutive units, which keeps the (storage word,
// bit) address of a column identical for both widths. Padding bits past
// cols are always zero.
class BitDenseMatrix {
public:
  BitDenseMatrix() = default;
  BitDenseMatrix(int64_t rows, int64_t cols, BitSemantics sem, int word_bits = 32);

  int64_t rows() const { return rows_; }
  int64_t cols() const { return cols_; }
  int word_bits() const { return word_bits_; }
  BitSemantics semantics() const { return sem_; }
  void set_semantics(BitSemantics s) { sem_ = s; }

  int64_t words_per_row() const { return (cols_ + word_bits_ - 1) / word_bits_; }
  int64_t storage_words_per_row() const { return words_per_row() * (word_bits_ / 32); }

  bool bit(int64_t i, int64_t j) const {
    const uint32_t w = data_[static_cast<size_t>(i * storage_words_per_row() + j / 32)];
    return (w >> (31 - (j & 31))) & 1u;
  }
  void set_bit(int64_t i, int64_t j, bool v) {
    uint32_t& w = data_[static_cast<size_t>(i * storage_words_per_row() + j / 32)];
    const uint32_t m = 1u << (31 - (j & 31));
    w = v ? (w | m) : (w & ~m);
  }

  std::span<const uint32_t> row_span(int64_t i) const {
    return {data_.data() + i * storage_words_per_row(),
            static_cast<size_t>(storage_words_per_row())};
  }
  std::span<uint32_t> row_span(int64_t i) {
    return {data_.data() + i * storage_words_per_row(),
            static_cast<size_t>(storage_words_per_row())};
  }

  size_t payload_bytes() const { return data_.size() * sizeof(uint32_t); }
  bool padding_is_zero() const;

  bool operator==(const BitDenseMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && word_bits_ == o.word_bits_ &&
           sem_ == o.sem_ && data_ == o.data_;
  }

private:
  int64_t rows_ = 0, cols_ = 0;
  int word_bits_ = 32;
  BitSemantics sem_ = BitSemantics::ZeroOne;
  std::vector<uint32_t> data_;
};

// sign(x) with sign(0) = +1, packed as PlusMinus bits.
BitDenseMatrix binarize(const DenseMatrix& m, int word_bits = 32);

// Binarize and keep the mean L1 magnitude of each row (Axis::Row) or column
// (Axis::Col) as the reconstruction scale; an all-zero slice yields 1e-12.
std::pair<BitDenseMatrix, ScaleVector> binarize_with_scale(const DenseMatrix& m, Axis axis,
                                                           int word_bits = 32);

// Decode bits back to reals: ZeroOne -> {0,1}, PlusMinus -> {-1,+1}.
DenseMatrix unpack(const BitDenseMatrix& m);

// Dot products over the first n bits of two packed rows (equal word layout,
// padding zero). 01: both operands 0/1. pm1: both operands {-1,+1}; computed
// as n - 2*popc(a XOR b). The _xnor form is the masked complement identity
// 2*popc(a XNOR b) - n and must agree with it exactly.
int32_t bit_dot_01(std::span<const uint32_t> a, std::span<const uint32_t> b, int64_t n);
int32_t bit_dot_pm1(std::span<const uint32_t> a, std::span<const uint32_t> b, int64_t n);
int32_t bit_dot_pm1_xnor(std::span<const uint32_t> a, std::span<const uint32_t> b, int64_t n);

// Mixed 0/1 times {-1,+1} dot product: sum of b's decoded values where a is
// set. The three strategies are algebraically identical rewritings.
enum class TrinaryStrategy { IfElse, AndAndNot, TwoAndMinusPopc };

int32_t bit_dot_trinary(std::span<const uint32_t> a, std::span<const uint32_t> b, int64_t n,
                        TrinaryStrategy strategy);

const char* trinary_strategy_name(TrinaryStrategy s);

// In-place transpose of a 32x32 bit block; word i holds row i, column j at
// bit 31-j.
void bit_transpose_block(std::span<uint32_t, 32> block);

BitDenseMatrix transpose(const BitDenseMatrix& m);

}  // namespace bitgnn
