#include "bitgnn/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <stdexcept>

#if defined(__AVX2__)
#include <immintrin.h>
#endif

namespace bitgnn {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

const char* op_name(KernelOp op) {
  switch (op) {
    case KernelOp::BMM: return "BMM";
    case KernelOp::BSpMM: return "BSpMM";
    case KernelOp::ADD: return "ADD";
    case KernelOp::CONCAT: return "CONCAT";
  }
  return "?";
}

// {-1,+1} dot product over whole packed rows; padding bits cancel in the XOR.
inline int32_t pm1_dot_words(const uint32_t* a, const uint32_t* b, int64_t spw, int64_t n) {
  int64_t diff = 0;
  int64_t k = 0;
  for (; k + 2 <= spw; k += 2) {
    uint64_t x, y;
    std::memcpy(&x, a + k, 8);
    std::memcpy(&y, b + k, 8);
    diff += std::popcount(x ^ y);
  }
  if (k < spw) diff += std::popcount(a[k] ^ b[k]);
  return static_cast<int32_t>(n - 2 * diff);
}

struct BitSide {
  const BitDenseMatrix* bits = nullptr;
  const ScaleVector* scale = nullptr;  // may be null
  BitDenseMatrix owned_bits;
  ScaleVector owned_scale;
};

// Materialize one bmm operand as bits (+ scale), binarizing full-precision
// inputs on the fly. Fills the caller-owned side in place.
void resolve_bmm_side(Precision tag, const MatOperand& m, Axis axis, const char* which,
                      BitSide& side, int word_bits) {
  if (tag == Precision::F) {
    const auto* d = std::get_if<DenseMatrix>(&m);
    if (!d) fail(std::string("bmm: ") + which + " is tagged F but operand is binary");
    auto [bits, scale] = binarize_with_scale(*d, axis, word_bits);
    side.owned_bits = std::move(bits);
    side.owned_scale = std::move(scale);
    side.bits = &side.owned_bits;
    side.scale = &side.owned_scale;
  } else {
    const auto* b = std::get_if<BitOperand>(&m);
    if (!b) fail(std::string("bmm: ") + which + " is tagged B but operand is full-precision");
    if (b->bits.semantics() != BitSemantics::PlusMinus)
      fail(std::string("bmm: ") + which + " must carry PlusMinus bits");
    side.bits = &b->bits;
    if (b->scale) {
      if (b->scale->axis() != axis)
        fail(std::string("bmm: ") + which + " scale has the wrong axis");
      side.scale = &*b->scale;
    }
  }
  const int64_t want = axis == Axis::Row ? side.bits->rows() : side.bits->cols();
  if (side.scale && side.scale->size() != want)
    fail(std::string("bmm: ") + which + " scale length mismatch");
}

}  // namespace

bool KernelVariant::valid() const {
  const bool all_f = in1 == Precision::F && in2 == Precision::F && out == Precision::F;
  switch (op) {
    case KernelOp::BMM: return !all_f;
    case KernelOp::BSpMM: return true;
    case KernelOp::ADD:
    case KernelOp::CONCAT:
      return all_f || (in1 == Precision::B && in2 == Precision::B);
  }
  return false;
}

std::string KernelVariant::name() const {
  auto c = [](Precision p) { return p == Precision::F ? 'F' : 'B'; };
  return std::string(op_name(op)) + "." + c(in1) + c(in2) + c(out);
}

KernelVariant KernelVariant::parse(std::string_view text) {
  const size_t dot = text.find('.');
  if (dot == std::string_view::npos || text.size() - dot - 1 != 3)
    fail("KernelVariant: cannot parse '" + std::string(text) + "'");
  std::string op(text.substr(0, dot));
  for (char& ch : op) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  KernelVariant v;
  if (op == "BMM" || op == "MM") v.op = KernelOp::BMM;
  else if (op == "BSPMM") v.op = KernelOp::BSpMM;
  else if (op == "ADD") v.op = KernelOp::ADD;
  else if (op == "CONCAT") v.op = KernelOp::CONCAT;
  else fail("KernelVariant: unknown op '" + std::string(text) + "'");
  Precision* slots[3] = {&v.in1, &v.in2, &v.out};
  for (int i = 0; i < 3; ++i) {
    const char ch = text[dot + 1 + static_cast<size_t>(i)];
    if (ch == 'F' || ch == 'f') *slots[i] = Precision::F;
    else if (ch == 'B' || ch == 'b') *slots[i] = Precision::B;
    else fail("KernelVariant: bad precision letter in '" + std::string(text) + "'");
  }
  return v;
}

Precision operand_precision(const MatOperand& m) {
  return std::holds_alternative<DenseMatrix>(m) ? Precision::F : Precision::B;
}

int64_t operand_rows(const MatOperand& m) {
  return std::holds_alternative<DenseMatrix>(m) ? std::get<DenseMatrix>(m).rows()
                                                : std::get<BitOperand>(m).bits.rows();
}

int64_t operand_cols(const MatOperand& m) {
  return std::holds_alternative<DenseMatrix>(m) ? std::get<DenseMatrix>(m).cols()
                                                : std::get<BitOperand>(m).bits.cols();
}

size_t operand_payload_bytes(const MatOperand& m) {
  if (const auto* d = std::get_if<DenseMatrix>(&m)) return d->payload_bytes();
  const auto& b = std::get<BitOperand>(m);
  return b.bits.payload_bytes() + (b.scale ? b.scale->payload_bytes() : 0);
}

MatOperand bmm(const KernelVariant& v, const MatOperand& a, const MatOperand& w, int word_bits) {
  if (v.op != KernelOp::BMM) fail("bmm: variant " + v.name() + " is not a BMM variant");
  if (!v.valid()) fail("bmm: " + v.name() + " is not a supported variant");
  // A binary operand pins the packing width the other side must match.
  if (v.in1 == Precision::B)
    if (const auto* b = std::get_if<BitOperand>(&a)) word_bits = b->bits.word_bits();
  if (v.in2 == Precision::B)
    if (const auto* b = std::get_if<BitOperand>(&w)) word_bits = b->bits.word_bits();
  BitSide sa, sw;
  resolve_bmm_side(v.in1, a, Axis::Row, "in1", sa, word_bits);
  resolve_bmm_side(v.in2, w, Axis::Col, "in2", sw, word_bits);
  const BitDenseMatrix& ab = *sa.bits;
  const BitDenseMatrix& wb = *sw.bits;
  if (ab.cols() != wb.rows()) fail("bmm: inner dimensions disagree");
  if (ab.word_bits() != wb.word_bits()) fail("bmm: operand word widths disagree");
  const int64_t rows = ab.rows(), cols = wb.cols(), k = ab.cols();
  const BitDenseMatrix wt = transpose(wb);
  const int64_t spw = ab.storage_words_per_row();

  if (v.out == Precision::B) {
    // SCL elimination: a following binarization ignores positive scales, so
    // none are applied here.
    BitDenseMatrix out(rows, cols, BitSemantics::PlusMinus, ab.word_bits());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < rows; ++i) {
      const uint32_t* ar = ab.row_span(i).data();
      auto orow = out.row_span(i);
      uint32_t word = 0;
      for (int64_t j = 0; j < cols; ++j) {
        if (pm1_dot_words(ar, wt.row_span(j).data(), spw, k) >= 0) word |= 1u << (31 - (j & 31));
        if ((j & 31) == 31 || j == cols - 1) {
          orow[static_cast<size_t>(j / 32)] = word;
          word = 0;
        }
      }
    }
    return BitOperand{std::move(out), std::nullopt};
  }

  DenseMatrix out(rows, cols);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i) {
    const uint32_t* ar = ab.row_span(i).data();
    const double alpha = sa.scale ? (*sa.scale)[i] : 1.0;
    Real* orow = out.row(i);
    for (int64_t j = 0; j < cols; ++j) {
      const double beta = sw.scale ? (*sw.scale)[j] : 1.0;
      orow[j] = static_cast<Real>(alpha * pm1_dot_words(ar, wt.row_span(j).data(), spw, k) * beta);
    }
  }
  return out;
}

DenseMatrix dense_mm(const DenseMatrix& a, const DenseMatrix& w) {
  if (a.cols() != w.rows()) fail("dense_mm: inner dimensions disagree");
  DenseMatrix out(a.rows(), w.cols());
#pragma omp parallel
  {
    std::vector<double> acc(static_cast<size_t>(w.cols()));
#pragma omp for schedule(static)
    for (int64_t i = 0; i < a.rows(); ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int64_t k = 0; k < a.cols(); ++k) {
        const double av = a.at(i, k);
        const Real* wr = w.row(k);
        for (int64_t j = 0; j < w.cols(); ++j) acc[static_cast<size_t>(j)] += av * wr[j];
      }
      Real* orow = out.row(i);
      for (int64_t j = 0; j < w.cols(); ++j) orow[j] = static_cast<Real>(acc[static_cast<size_t>(j)]);
    }
  }
  return out;
}

namespace {

// Per-neighbor walk in ascending column order. Calls visit(n, j) for each
// set bit, j being the activation row the bit references.
template <class Visit>
void walk_tile_row(const FrdcMatrix& A, int64_t r, int W, Visit visit) {
  const int64_t nsets = tileset_count(A, r, W);
  for (int64_t s = 0; s < nsets; ++s) {
    const TileSet set = gather_tileset(A, r, s, W);
    for (int n = 0; n < 4; ++n) {
      uint64_t a = set.rows[static_cast<size_t>(n)];
      while (a) {
        const int p = 63 - std::countl_zero(a);
        a &= ~(1ull << p);
        const int g = W - 1 - p;
        const int64_t j = 4 * static_cast<int64_t>(set.cols[static_cast<size_t>(g / 4)]) + (g & 3);
        visit(n, j);
      }
    }
  }
}

// Fans the eight bits of an activation byte out to the byte lanes of a
// uint64, leftmost feature in the low lane, so a single add bumps eight
// per-feature counters at once.
constexpr std::array<uint64_t, 256> kSpread8 = [] {
  std::array<uint64_t, 256> t{};
  for (int b = 0; b < 256; ++b) {
    for (int l = 0; l < 8; ++l)
      if (b & (1 << (7 - l))) t[static_cast<size_t>(b)] |= uint64_t{1} << (8 * l);
  }
  return t;
}();

// Integer path: 0/1 structure times sign bits, per tile row. The default
// strategy counts one-bits edge by edge in packed 8-bit lanes, spilling into
// 32-bit counters before a lane can wrap. The other strategies gather the
// referenced activation rows per tile set, bit-transpose each 32-column
// feature chunk and take popcount dot products, so the rewritings stay
// independently exercisable.
template <class Emit>
void bspmm_binary_binary(const FrdcMatrix& A, const BitDenseMatrix& x, TrinaryStrategy strategy,
                         Emit emit) {
  const int W = x.word_bits();
  const int64_t f = x.cols();
  const int64_t sw = x.storage_words_per_row();

  if (strategy == TrinaryStrategy::TwoAndMinusPopc) {
    const int64_t nb = 4 * sw;  // u64 lane groups per activation row
#if defined(__AVX2__)
    // lane k of a 32-byte group takes byte 3 - k/8 of the feature word ...
    const __m256i ksel = _mm256_setr_epi8(3, 3, 3, 3, 3, 3, 3, 3, 2, 2, 2, 2, 2, 2, 2, 2, 1, 1,
                                          1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0);
    // ... and tests its bit 7 - k%8, leftmost feature first.
    const __m256i kbit = _mm256_setr_epi8(
        -128, 64, 32, 16, 8, 4, 2, 1, -128, 64, 32, 16, 8, 4, 2, 1, -128, 64, 32, 16, 8, 4, 2, 1,
        -128, 64, 32, 16, 8, 4, 2, 1);
#endif
#pragma omp parallel
    {
      std::vector<int32_t> acc(static_cast<size_t>(4 * f));
      std::vector<uint64_t> lanes(static_cast<size_t>(4 * nb));
#pragma omp for schedule(dynamic, 8)
      for (int64_t r = 0; r < A.tile_rows(); ++r) {
        std::fill(acc.begin(), acc.end(), 0);
        int32_t deg[4] = {0, 0, 0, 0};
        int pending[4] = {0, 0, 0, 0};
        // Lane byte k counts feature k, so draining into acc is a plain
        // widening add. flush leaves the lanes zero for the next row.
        auto flush = [&](int n) {
          uint64_t* ln = &lanes[static_cast<size_t>(n) * nb];
          int32_t* accn = &acc[static_cast<size_t>(n) * f];
          const uint8_t* lb = reinterpret_cast<const uint8_t*>(ln);
          for (int64_t j = 0; j < f; ++j) accn[j] += lb[j];
          std::memset(ln, 0, static_cast<size_t>(nb) * 8);
          pending[n] = 0;
        };
        // Integer sums commute, so the raw tile stream substitutes for the
        // padded set walk here; bit b of a tile is (row, col) 15 - b.
        const uint64_t t0 = A.row_ptr()[static_cast<size_t>(r)];
        const uint64_t t1 = A.row_ptr()[static_cast<size_t>(r) + 1];
        for (uint64_t t = t0; t < t1; ++t) {
          const int64_t jbase = 4 * static_cast<int64_t>(A.col_ind()[static_cast<size_t>(t)]);
          uint32_t tb = A.tiles()[static_cast<size_t>(t)];
          while (tb) {
            const int rc = 15 - std::countr_zero(tb);
            tb &= tb - 1;
            const int n = rc >> 2;
            const uint32_t* xr = x.row_span(jbase + (rc & 3)).data();
            uint64_t* ln = &lanes[static_cast<size_t>(n) * nb];
#if defined(__AVX2__)
            uint8_t* lb = reinterpret_cast<uint8_t*>(ln);
            for (int64_t cw = 0; cw < sw; ++cw) {
              const __m256i sel =
                  _mm256_shuffle_epi8(_mm256_set1_epi32(static_cast<int>(xr[cw])), ksel);
              const __m256i hit = _mm256_cmpeq_epi8(_mm256_and_si256(sel, kbit), kbit);
              __m256i* grp = reinterpret_cast<__m256i*>(lb + 32 * cw);
              _mm256_storeu_si256(grp, _mm256_sub_epi8(_mm256_loadu_si256(grp), hit));
            }
#else
            for (int64_t cw = 0; cw < sw; ++cw) {
              const uint32_t wv = xr[cw];
              ln[4 * cw + 0] += kSpread8[wv >> 24];
              ln[4 * cw + 1] += kSpread8[(wv >> 16) & 0xFF];
              ln[4 * cw + 2] += kSpread8[(wv >> 8) & 0xFF];
              ln[4 * cw + 3] += kSpread8[wv & 0xFF];
            }
#endif
            ++deg[n];
            if (++pending[n] == 255) flush(n);
          }
        }
        for (int n = 0; n < 4 && 4 * r + n < A.node_rows(); ++n) {
          flush(n);
          emit(4 * r + n, &acc[static_cast<size_t>(n) * f], 2, deg[n]);
        }
      }
    }
    return;
  }

#pragma omp parallel
  {
    std::vector<int32_t> acc(static_cast<size_t>(4 * f));
    std::vector<uint32_t> gbuf(static_cast<size_t>(W) * static_cast<size_t>(sw));
#pragma omp for schedule(dynamic, 8)
    for (int64_t r = 0; r < A.tile_rows(); ++r) {
      std::fill(acc.begin(), acc.end(), 0);
      const int64_t nsets = tileset_count(A, r, W);
      for (int64_t s = 0; s < nsets; ++s) {
        const TileSet set = gather_tileset(A, r, s, W);
        for (int slot = 0; slot < set.ts; ++slot) {
          const uint32_t tc = set.cols[static_cast<size_t>(slot)];
          for (int t = 0; t < 4; ++t) {
            uint32_t* dst = &gbuf[static_cast<size_t>((4 * slot + t) * sw)];
            const int64_t xr = 4 * static_cast<int64_t>(tc) + t;
            if (tc == TileSet::kPadCol || xr >= x.rows())
              std::memset(dst, 0, static_cast<size_t>(sw) * 4);
            else
              std::memcpy(dst, x.row_span(xr).data(), static_cast<size_t>(sw) * 4);
          }
        }
        if (strategy == TrinaryStrategy::IfElse) {
          for (int n = 0; n < 4; ++n) {
            uint64_t a = set.rows[static_cast<size_t>(n)];
            int32_t* accn = &acc[static_cast<size_t>(n) * f];
            while (a) {
              const int p = 63 - std::countl_zero(a);
              a &= ~(1ull << p);
              const uint32_t* xr = &gbuf[static_cast<size_t>((W - 1 - p) * sw)];
              for (int64_t j = 0; j < f; ++j)
                accn[j] += ((xr[j / 32] >> (31 - (j & 31))) & 1u) ? 1 : -1;
            }
          }
          continue;
        }
        std::array<uint32_t, 32> th, tl;
        for (int64_t cw = 0; cw < sw; ++cw) {
          for (int t = 0; t < 32; ++t) th[static_cast<size_t>(t)] = gbuf[static_cast<size_t>(t * sw + cw)];
          bit_transpose_block(th);
          if (W == 64) {
            for (int t = 0; t < 32; ++t)
              tl[static_cast<size_t>(t)] = gbuf[static_cast<size_t>((32 + t) * sw + cw)];
            bit_transpose_block(tl);
          }
          const int kmax = static_cast<int>(std::min<int64_t>(32, f - 32 * cw));
          for (int n = 0; n < 4; ++n) {
            const uint64_t a = set.rows[static_cast<size_t>(n)];
            if (!a) continue;
            int32_t* accn = &acc[static_cast<size_t>(n) * f + static_cast<size_t>(32 * cw)];
            if (W == 32) {
              const uint32_t a32 = static_cast<uint32_t>(a);
              for (int kk = 0; kk < kmax; ++kk) {
                const uint32_t b = th[static_cast<size_t>(kk)];
                accn[kk] += static_cast<int32_t>(std::popcount(a32 & b)) -
                            static_cast<int32_t>(std::popcount(a32 & ~b));
              }
            } else {
              for (int kk = 0; kk < kmax; ++kk) {
                const uint64_t b =
                    (static_cast<uint64_t>(th[static_cast<size_t>(kk)]) << 32) | tl[static_cast<size_t>(kk)];
                accn[kk] += static_cast<int32_t>(std::popcount(a & b)) -
                            static_cast<int32_t>(std::popcount(a & ~b));
              }
            }
          }
        }
      }
      for (int n = 0; n < 4 && 4 * r + n < A.node_rows(); ++n)
        emit(4 * r + n, &acc[static_cast<size_t>(n) * f], 1, 0);
    }
  }
}

// 64-bit gathered chunks interleave feature words; with uint32 storage the
// chunk order is already the feature order, handled above.

}  // namespace

MatOperand bspmm(const KernelVariant& v, const AdjacencyOperand& adj, const MatOperand& x,
                 std::optional<TrinaryStrategy> strategy, int word_bits) {
  if (v.op != KernelOp::BSpMM) fail("bspmm: variant " + v.name() + " is not a BSpMM variant");
  if (!adj.structure) fail("bspmm: missing adjacency structure");
  const FrdcMatrix& A = *adj.structure;
  if (v.in2 == Precision::F) {
    if (!adj.row_scale || !adj.col_scale)
      fail("bspmm: " + v.name() + " needs a factorized adjacency (row and col scales)");
    if (adj.row_scale->axis() != Axis::Row || adj.row_scale->size() != A.node_rows() ||
        adj.col_scale->axis() != Axis::Col || adj.col_scale->size() != A.node_cols())
      fail("bspmm: factorization scale axes or lengths are wrong");
  } else if (adj.row_scale || adj.col_scale) {
    fail("bspmm: " + v.name() + " takes the raw structure, not a factorized adjacency");
  }

  if (v.in1 == Precision::B) {
    const auto* xb = std::get_if<BitOperand>(&x);
    if (!xb) fail("bspmm: in1 tag B requires a binary operand");
    if (xb->bits.semantics() != BitSemantics::PlusMinus)
      fail("bspmm: binary activations must be PlusMinus");
    if (xb->scale) fail("bspmm: unexpected scale on the activation operand");
    const BitDenseMatrix& X = xb->bits;
    if (X.rows() != A.node_cols()) fail("bspmm: activation row count != adjacency node_cols");
    const int64_t f = X.cols();

    if (v.in2 == Precision::B) {
      const TrinaryStrategy st = strategy.value_or(TrinaryStrategy::TwoAndMinusPopc);
      if (v.out == Precision::B) {
        BitDenseMatrix out(A.node_rows(), f, BitSemantics::PlusMinus, X.word_bits());
        bspmm_binary_binary(A, X, st,
                            [&](int64_t i, const int32_t* acc, int two, int32_t deg) {
                              auto orow = out.row_span(i);
                              uint32_t word = 0;
                              for (int64_t j = 0; j < f; ++j) {
                                word |= static_cast<uint32_t>(two * acc[j] - deg >= 0)
                                        << (31 - (j & 31));
                                if ((j & 31) == 31 || j == f - 1) {
                                  orow[static_cast<size_t>(j / 32)] = word;
                                  word = 0;
                                }
                              }
                            });
        return BitOperand{std::move(out), std::nullopt};
      }
      DenseMatrix out(A.node_rows(), f);
      bspmm_binary_binary(A, X, st,
                          [&](int64_t i, const int32_t* acc, int two, int32_t deg) {
                            Real* orow = out.row(i);
                            for (int64_t j = 0; j < f; ++j)
                              orow[j] = static_cast<Real>(two * acc[j] - deg);
                          });
      return out;
    }

    // Factorized adjacency, binary activations: weighted per-neighbor walk.
    const ScaleVector& srow = *adj.row_scale;
    const ScaleVector& scol = *adj.col_scale;
    const int W = X.word_bits();
    DenseMatrix outf(v.out == Precision::F ? A.node_rows() : 0, v.out == Precision::F ? f : 0);
    BitDenseMatrix outb(v.out == Precision::B ? A.node_rows() : 0, v.out == Precision::B ? f : 0,
                        BitSemantics::PlusMinus, W);
#pragma omp parallel
    {
      std::vector<double> dacc(static_cast<size_t>(4 * f));
#pragma omp for schedule(dynamic, 8)
      for (int64_t r = 0; r < A.tile_rows(); ++r) {
        std::fill(dacc.begin(), dacc.end(), 0.0);
        walk_tile_row(A, r, W, [&](int n, int64_t j) {
          const double wj = scol[j];
          const uint32_t* xr = X.row_span(j).data();
          double* d = &dacc[static_cast<size_t>(n) * f];
          for (int64_t k = 0; k < f; ++k)
            d[k] += ((xr[k / 32] >> (31 - (k & 31))) & 1u) ? wj : -wj;
        });
        for (int n = 0; n < 4 && 4 * r + n < A.node_rows(); ++n) {
          const int64_t i = 4 * r + n;
          const double si = srow[i];
          const double* d = &dacc[static_cast<size_t>(n) * f];
          if (v.out == Precision::B) {
            auto orow = outb.row_span(i);
            uint32_t word = 0;
            for (int64_t k = 0; k < f; ++k) {
              if (si * d[k] >= 0) word |= 1u << (31 - (k & 31));
              if ((k & 31) == 31 || k == f - 1) {
                orow[static_cast<size_t>(k / 32)] = word;
                word = 0;
              }
            }
          } else {
            Real* orow = outf.row(i);
            for (int64_t k = 0; k < f; ++k) orow[k] = static_cast<Real>(si * d[k]);
          }
        }
      }
    }
    if (v.out == Precision::B) return BitOperand{std::move(outb), std::nullopt};
    return outf;
  }

  // Full-precision activations: aggregate real rows, weighted when in2 = F.
  const auto* xd = std::get_if<DenseMatrix>(&x);
  if (!xd) fail("bspmm: in1 tag F requires a full-precision operand");
  if (xd->rows() != A.node_cols()) fail("bspmm: activation row count != adjacency node_cols");
  const int64_t f = xd->cols();
  const bool fact = v.in2 == Precision::F;
  DenseMatrix outf(v.out == Precision::F ? A.node_rows() : 0, v.out == Precision::F ? f : 0);
  BitDenseMatrix outb(v.out == Precision::B ? A.node_rows() : 0, v.out == Precision::B ? f : 0,
                      BitSemantics::PlusMinus, word_bits);
#pragma omp parallel
  {
    std::vector<double> dacc(static_cast<size_t>(4 * f));
#pragma omp for schedule(dynamic, 8)
    for (int64_t r = 0; r < A.tile_rows(); ++r) {
      std::fill(dacc.begin(), dacc.end(), 0.0);
      walk_tile_row(A, r, 32, [&](int n, int64_t j) {
        const double wj = fact ? (*adj.col_scale)[j] : 1.0;
        const Real* xr = xd->row(j);
        double* d = &dacc[static_cast<size_t>(n) * f];
        for (int64_t k = 0; k < f; ++k) d[k] += wj * xr[k];
      });
      for (int n = 0; n < 4 && 4 * r + n < A.node_rows(); ++n) {
        const int64_t i = 4 * r + n;
        const double si = fact ? (*adj.row_scale)[i] : 1.0;
        const double* d = &dacc[static_cast<size_t>(n) * f];
        if (v.out == Precision::B) {
          auto orow = outb.row_span(i);
          uint32_t word = 0;
          for (int64_t k = 0; k < f; ++k) {
            if (si * d[k] >= 0) word |= 1u << (31 - (k & 31));
            if ((k & 31) == 31 || k == f - 1) {
              orow[static_cast<size_t>(k / 32)] = word;
              word = 0;
            }
          }
        } else {
          Real* orow = outf.row(i);
          for (int64_t k = 0; k < f; ++k) orow[k] = static_cast<Real>(si * d[k]);
        }
      }
    }
  }
  if (v.out == Precision::B) return BitOperand{std::move(outb), std::nullopt};
  return outf;
}

BitDenseMatrix bin(const DenseMatrix& x, int word_bits) { return binarize(x, word_bits); }

DenseMatrix scl(const DenseMatrix& x, const ScaleVector& row, const ScaleVector& col) {
  if (row.axis() != Axis::Row || col.axis() != Axis::Col) fail("scl: scale axes are wrong");
  if (row.size() != x.rows() || col.size() != x.cols()) fail("scl: scale length mismatch");
  DenseMatrix out(x.rows(), x.cols());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < x.rows(); ++i) {
    const double ri = row[i];
    for (int64_t j = 0; j < x.cols(); ++j)
      out.at(i, j) = static_cast<Real>(ri * x.at(i, j) * col[j]);
  }
  return out;
}

namespace {

std::pair<const BitDenseMatrix*, const BitDenseMatrix*> binary_pair(const KernelVariant& v,
                                                                    const MatOperand& a,
                                                                    const MatOperand& b,
                                                                    const char* what) {
  const auto* ba = std::get_if<BitOperand>(&a);
  const auto* bb = std::get_if<BitOperand>(&b);
  if (!ba || !bb) fail(std::string(what) + ": " + v.name() + " requires binary operands");
  if (ba->scale || bb->scale) fail(std::string(what) + ": unexpected scale on binary operand");
  if (ba->bits.semantics() != BitSemantics::PlusMinus ||
      bb->bits.semantics() != BitSemantics::PlusMinus)
    fail(std::string(what) + ": binary operands must be PlusMinus");
  if (ba->bits.word_bits() != bb->bits.word_bits())
    fail(std::string(what) + ": operand word widths disagree");
  return {&ba->bits, &bb->bits};
}

}  // namespace

MatOperand add(const KernelVariant& v, const MatOperand& a, const MatOperand& b) {
  if (v.op != KernelOp::ADD) fail("add: variant " + v.name() + " is not an ADD variant");
  if (!v.valid()) fail("add: " + v.name() + " is not a supported variant");
  if (operand_rows(a) != operand_rows(b) || operand_cols(a) != operand_cols(b))
    fail("add: operand shapes disagree");
  if (v.in1 == Precision::F) {
    const auto *da = std::get_if<DenseMatrix>(&a), *db = std::get_if<DenseMatrix>(&b);
    if (!da || !db) fail("add: FFF requires full-precision operands");
    DenseMatrix out(da->rows(), da->cols());
    for (int64_t i = 0; i < da->rows(); ++i)
      for (int64_t j = 0; j < da->cols(); ++j)
        out.at(i, j) = static_cast<Real>(static_cast<double>(da->at(i, j)) + db->at(i, j));
    return out;
  }
  auto [ba, bb] = binary_pair(v, a, b, "add");
  if (v.out == Precision::B) {
    // (-1,-1) is the only negative sum, so the thresholded sum is bit OR.
    BitDenseMatrix out(ba->rows(), ba->cols(), BitSemantics::PlusMinus, ba->word_bits());
    for (int64_t i = 0; i < ba->rows(); ++i) {
      auto ra = ba->row_span(i);
      auto rb = bb->row_span(i);
      auto ro = out.row_span(i);
      for (size_t w = 0; w < ra.size(); ++w) ro[w] = ra[w] | rb[w];
    }
    return BitOperand{std::move(out), std::nullopt};
  }
  DenseMatrix out(ba->rows(), ba->cols());
  for (int64_t i = 0; i < ba->rows(); ++i)
    for (int64_t j = 0; j < ba->cols(); ++j)
      out.at(i, j) = static_cast<Real>(2 * (static_cast<int>(ba->bit(i, j)) +
                                            static_cast<int>(bb->bit(i, j))) - 2);
  return out;
}

MatOperand concat(const KernelVariant& v, const MatOperand& a, const MatOperand& b) {
  if (v.op != KernelOp::CONCAT) fail("concat: variant " + v.name() + " is not a CONCAT variant");
  if (!v.valid()) fail("concat: " + v.name() + " is not a supported variant");
  if (operand_rows(a) != operand_rows(b)) fail("concat: operand row counts disagree");
  const int64_t rows = operand_rows(a);
  const int64_t ca = operand_cols(a), cb = operand_cols(b);
  if (v.in1 == Precision::F || v.out == Precision::F) {
    if (v.in1 == Precision::F &&
        (!std::holds_alternative<DenseMatrix>(a) || !std::holds_alternative<DenseMatrix>(b)))
      fail("concat: FFF requires full-precision operands");
    if (v.in1 == Precision::B) binary_pair(v, a, b, "concat");
    const DenseMatrix da = std::holds_alternative<DenseMatrix>(a)
                               ? std::get<DenseMatrix>(a)
                               : unpack(std::get<BitOperand>(a).bits);
    const DenseMatrix db = std::holds_alternative<DenseMatrix>(b)
                               ? std::get<DenseMatrix>(b)
                               : unpack(std::get<BitOperand>(b).bits);
    DenseMatrix out(rows, ca + cb);
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < ca; ++j) out.at(i, j) = da.at(i, j);
      for (int64_t j = 0; j < cb; ++j) out.at(i, ca + j) = db.at(i, j);
    }
    return out;
  }
  auto [ba, bb] = binary_pair(v, a, b, "concat");
  BitDenseMatrix out(rows, ca + cb, BitSemantics::PlusMinus, ba->word_bits());
  const int64_t base = ca / 32;
  const int shift = static_cast<int>(ca & 31);
  const int64_t ospw = out.storage_words_per_row();
  for (int64_t i = 0; i < rows; ++i) {
    auto ra = ba->row_span(i);
    auto rb = bb->row_span(i);
    auto ro = out.row_span(i);
    std::copy(ra.begin(), ra.end(), ro.begin());
    for (size_t w = 0; w < rb.size(); ++w) {
      const int64_t pos = base + static_cast<int64_t>(w);
      ro[static_cast<size_t>(pos)] |= rb[w] >> shift;
      if (shift && pos + 1 < ospw) ro[static_cast<size_t>(pos + 1)] |= rb[w] << (32 - shift);
    }
  }
  return BitOperand{std::move(out), std::nullopt};
}

MatOperand fused_mm_spmm(const FusedPlan& plan, const MatOperand& x, const MatOperand& w,
                         const AdjacencyOperand& adj, std::optional<TrinaryStrategy> strategy) {
  if (plan.mm.out != plan.spmm.in1)
    fail("fused_mm_spmm: precision chain mismatch (" + plan.mm.name() + " -> " +
         plan.spmm.name() + ")");
  const MatOperand h = bmm(plan.mm, x, w);
  return bspmm(plan.spmm, adj, h, strategy);
}

}  // namespace bitgnn
