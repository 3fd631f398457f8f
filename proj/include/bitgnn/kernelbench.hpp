// Single-threaded speed comparisons of the packed kernels against naive
// full-precision baselines computing the same result.
#pragma once

#include <cstdint>
#include <string>

namespace bitgnn {

struct KernelBenchResult {
  std::string name;
  double engine_ms = 0.0;
  double baseline_ms = 0.0;
  double speedup = 0.0;
  bool values_match = false;

  std::string to_json() const;
};

// Dense n x n x n product, binary operands, integer-valued output: the packed
// kernel against a naive double triple loop over the decoded values.
KernelBenchResult bench_bmm_bbf(int64_t n = 2048, uint64_t seed = 7);

// Sparse aggregation with binary features and binarized output: the tiled
// kernel against a naive CSR SpMM over decoded float features.
KernelBenchResult bench_bspmm_bbb(int64_t nodes = 65536, double density = 0.001,
                                  int64_t feature_cols = 128, uint64_t seed = 7,
                                  int word_bits = 32);

}  // namespace bitgnn
