// Deterministic random inputs. The mt19937_64 stream is pinned by the
// standard, and the mappings below avoid distribution classes whose output
// is implementation-defined, so a seed reproduces bit-identical data
// everywhere.
#pragma once

#include <cstdint>
#include <random>
#include <utility>

#include "bitgnn/bitdense.hpp"
#include "bitgnn/bitsparse.hpp"

namespace bitgnn {

class Rng {
public:
  explicit Rng(uint64_t seed) : g_(seed) {}

  uint64_t next() { return g_(); }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }

  // [-1, 1)
  double uniform_pm1() { return uniform() * 2.0 - 1.0; }

  // [0, n)
  int64_t index(int64_t n) {
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t v;
    do {
      v = g_();
    } while (v >= limit);
    return static_cast<int64_t>(v % un);
  }

  // [lo, hi] inclusive
  int64_t range(int64_t lo, int64_t hi) { return lo + index(hi - lo + 1); }

private:
  std::mt19937_64 g_;
};

inline DenseMatrix random_dense(Rng& r, int64_t rows, int64_t cols) {
  DenseMatrix m(rows, cols);
  for (int64_t i = 0; i < rows; ++i) {
    Real* p = m.row(i);
    for (int64_t j = 0; j < cols; ++j) p[j] = static_cast<Real>(r.uniform_pm1());
  }
  return m;
}

inline BitDenseMatrix random_bits(Rng& r, int64_t rows, int64_t cols, BitSemantics sem,
                                  int word_bits = 32) {
  BitDenseMatrix m(rows, cols, sem, word_bits);
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < cols; ++j) m.set_bit(i, j, r.next() & 1);
  }
  return m;
}

// Roughly m edges drawn uniformly; duplicates are possible and collapse when
// the structure is built.
inline EdgeList random_edges(Rng& r, int64_t nodes, int64_t m, bool allow_self = false) {
  EdgeList e;
  e.node_count = nodes;
  e.edges.reserve(static_cast<size_t>(m));
  for (int64_t k = 0; k < m; ++k) {
    int64_t s = r.index(nodes);
    int64_t d = r.index(nodes);
    if (!allow_self && s == d) {
      d = (d + 1) % nodes;
      if (s == d) continue;
    }
    e.edges.emplace_back(s, d);
  }
  return e;
}

}  // namespace bitgnn
