// GNN layers over the kernel families, model descriptions, and the
// sequential executor.
#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bitgnn/kernels.hpp"

namespace bitgnn {

// Symmetric normalization of A + I: s_i = (1 + degree_i)^{-1/2}, applied on
// both sides of the 0/1 structure.
struct NormalizedAdjacency {
  FrdcMatrix structure;  // with self-loops
  ScaleVector scale;     // Axis::Row
};

NormalizedAdjacency normalize_adjacency(const EdgeList& e);

// The per-graph state shared by every layer of a model: the normalized
// self-loop structure plus the loop-free structure for aggregators that
// exclude the node itself.
struct GraphBundle {
  FrdcMatrix structure;  // A + I
  ScaleVector norm_row, norm_col;
  FrdcMatrix raw;  // A without self-loops (explicit self edges stripped)
  std::vector<int64_t> neighbor_count;
  ScaleVector mean_row;  // 1 / max(1, neighbor_count), Axis::Row
  ScaleVector ones_row, ones_col;

  size_t payload_bytes() const {
    return structure.payload_bytes() + raw.payload_bytes() + norm_row.payload_bytes();
  }
};

std::shared_ptr<const GraphBundle> prepare_graph(const EdgeList& e);

enum class LayerKind {
  GcnConv,         // plan {mm, spmm}: adj * (x * W1), normalized adjacency
  SageConv,        // plan {mm_self, mm_neigh, spmm, add}: x*W1 + mean_N(x*W2)
  GraphConv,       // plan {mm_self, mm_neigh, spmm, add}: x*W1 + sum_N(x*W2)
  FullyConnected,  // plan {mm}
  Aggregate,       // plan {spmm}: normalized adjacency times x
  Relu,            // no-op on binary inputs
  BatchNorm,
  Softmax,
  Binarize,  // explicit BIN node, F -> B
  Scale      // explicit SCL node with static factors
};

const char* layer_kind_name(LayerKind k);

struct BatchNormParams {
  std::vector<Real> gamma, beta, mean, sigma;
};

// Plan slots use KernelVariant; the pseudo-variant MM.FFF in an mm slot
// selects the plain full-precision product.
struct LayerSpec {
  LayerKind kind = LayerKind::FullyConnected;
  std::vector<KernelVariant> plan;
  std::shared_ptr<const DenseMatrix> w1, w2;
  std::optional<BatchNormParams> bn;
  std::optional<ScaleVector> scale_row, scale_col;
  bool relu = false;  // applied after conv/fc kinds when the output is F
};

struct ModelSpec {
  std::vector<LayerSpec> layers;
  Precision input_precision = Precision::F;
  std::shared_ptr<const GraphBundle> graph;
  std::optional<TrinaryStrategy> strategy;
  int word_bits = 32;  // packing width for values binarized while running
};

// Static checks: slot counts and ops per kind, variant legality, parameter
// presence, and that every producer/consumer precision pair chains, ending
// at F. Returns human-readable problems, empty when the model is well formed.
std::vector<std::string> validate_model(const ModelSpec& m);

// Precision after each layer given the input tag; errors collected alongside.
Precision layer_output_precision(const LayerSpec& l, Precision in, std::vector<std::string>* errors);

// Observation hooks for tracing binarization points and timing kernel calls.
struct LayerHooks {
  std::function<void(const std::string&, const BitDenseMatrix&)> record_bits;
  std::function<void(const std::string&, int64_t)> record_ns;
};

MatOperand gcn_layer(const MatOperand& x, const LayerSpec& l, const GraphBundle& g,
                     std::optional<TrinaryStrategy> strategy = std::nullopt,
                     const LayerHooks* hooks = nullptr, const std::string& prefix = "",
                     int word_bits = 32);
MatOperand sage_layer(const MatOperand& x, const LayerSpec& l, const GraphBundle& g,
                      std::optional<TrinaryStrategy> strategy = std::nullopt,
                      const LayerHooks* hooks = nullptr, const std::string& prefix = "",
                      int word_bits = 32);
MatOperand graphconv_layer(const MatOperand& x, const LayerSpec& l, const GraphBundle& g,
                           std::optional<TrinaryStrategy> strategy = std::nullopt,
                           const LayerHooks* hooks = nullptr, const std::string& prefix = "",
                           int word_bits = 32);

// out = gamma * (x - mean) / sigma + beta, column-wise parameters.
DenseMatrix batchnorm_infer(const DenseMatrix& x, const BatchNormParams& p);

// Drops every Scale node directly followed by a Binarize node: positive
// factors cannot change the sign pattern the Binarize produces.
ModelSpec rewrite_eliminate_scl(const ModelSpec& m);

// Binarization points recorded while running a model.
struct RunTrace {
  struct Point {
    std::string label;
    BitDenseMatrix bits;
  };
  std::vector<Point> points;
  DenseMatrix logits;  // input of the final softmax (model output if none)
};

struct KernelTiming {
  std::string label;
  int64_t ns;
};

// Executes the layers in order and returns the final full-precision output
// (class probabilities when the model ends in Softmax). Layer failures are
// rethrown with the layer index attached.
DenseMatrix run_model(const ModelSpec& m, const MatOperand& x0, RunTrace* trace = nullptr,
                      std::vector<KernelTiming>* timings = nullptr);

}  // namespace bitgnn
