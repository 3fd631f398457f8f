// Engine-versus-reference verification and model benchmarking.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bitgnn/graphops.hpp"
#include "bitgnn/oracle.hpp"

namespace bitgnn {

struct VerifyReport {
  double max_rel_logit_error = 0.0;  // max |e - o| / max(1, |o|)
  int64_t bin_points = 0;            // binarization points compared
  int64_t bin_values = 0;            // total bits compared across them
  int64_t bin_mismatches = 0;
  std::string first_mismatch_label;
  int64_t first_mismatch_row = -1, first_mismatch_col = -1;
  double argmax_agreement = 0.0;  // fraction of rows picking the same class
  double tolerance = 1e-6;
  bool pass = false;

  std::string to_json() const;
};

// Runs the engine and the reference on the same inputs and compares the
// binarization points, the logits and the predicted classes. For the fault
// hook below, corrupt_tile >= 0 flips one bit of that stored structure tile
// (modulo the tile count) in the engine's copy only.
VerifyReport verify_model(const ModelSpec& m, const DenseMatrix& x0, const EdgeList& e,
                          const oracle::Config& cfg, int64_t corrupt_tile = -1);

struct MemoryReport {
  size_t graph_bytes = 0;
  size_t weight_bytes = 0;
  size_t weight_dense_bytes = 0;  // the same weights as full-precision values
  size_t act_peak_bytes = 0;      // largest live input + output pair
  size_t act_peak_dense_bytes = 0;
  size_t input_bytes = 0;        // the model input as it enters layer 0
  size_t input_bits_bytes = 0;   // the same input bit-packed
  size_t input_dense_bytes = 0;  // the same input as full-precision values
  size_t peak_bytes = 0;        // graph + weights + activation peak
};

// Walks the layer chain analytically; every figure comes from the same
// payload formulas the containers allocate with.
MemoryReport model_memory(const ModelSpec& m, int64_t nodes, int64_t features);

struct BenchReport {
  int reps = 0;
  double total_median_ms = 0.0, total_mean_ms = 0.0;
  std::vector<std::string> kernel_labels;
  std::vector<double> kernel_median_ms, kernel_mean_ms;
  MemoryReport memory;
  std::vector<std::string> plan;  // chosen variants, filled by the caller
  std::string strategy;
  int verified = -1;  // -1 not checked, 0 failed, 1 passed

  std::string to_json() const;
};

// Times reps full model runs after warmup discarded runs.
BenchReport bench_model(const ModelSpec& m, const DenseMatrix& x0, int reps, int warmup = 1);

}  // namespace bitgnn
