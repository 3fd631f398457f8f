// Matrix-multiply kernel families over mixed full-precision / binary
// operands, plus the small glue ops (bin, scl, add, concat).
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "bitgnn/bitdense.hpp"
#include "bitgnn/bitsparse.hpp"

namespace bitgnn {

enum class Precision : uint8_t { F, B };

enum class KernelOp : uint8_t { BMM, BSpMM, ADD, CONCAT };

// A kernel family member, e.g. BMM.FBB = full-precision in1, binary in2,
// binary out. For BSpMM in1 tags the activations and in2 the adjacency, so
// chains pair on mm.out == spmm.in1. BMM admits every combination except
// FFF; BSpMM admits all eight; ADD and CONCAT admit BBF, BBB and FFF.
struct KernelVariant {
  KernelOp op = KernelOp::BMM;
  Precision in1 = Precision::B, in2 = Precision::B, out = Precision::B;

  bool valid() const;
  std::string name() const;
  // Accepts "BMM.FBB" (alias "MM.FBB"), "BSpMM.BBB", "ADD.BBF", "CONCAT.FFF".
  static KernelVariant parse(std::string_view text);

  bool operator==(const KernelVariant&) const = default;
};

// Binary operand: packed bits plus an optional reconstruction scale
// (row scales for activations, column scales for weights).
struct BitOperand {
  BitDenseMatrix bits;
  std::optional<ScaleVector> scale;
};

using MatOperand = std::variant<DenseMatrix, BitOperand>;

Precision operand_precision(const MatOperand& m);
int64_t operand_rows(const MatOperand& m);
int64_t operand_cols(const MatOperand& m);
size_t operand_payload_bytes(const MatOperand& m);

// Sparse multiplicand view. Without factors it is the raw 0/1 structure
// (in2 = B); with factors it stands for diag(row_scale) * A * diag(col_scale)
// (in2 = F).
struct AdjacencyOperand {
  const FrdcMatrix* structure = nullptr;
  const ScaleVector* row_scale = nullptr;  // length node_rows
  const ScaleVector* col_scale = nullptr;  // length node_cols
  bool factorized() const { return row_scale != nullptr; }
};

// out = a * w over K = a.cols. Full-precision inputs are binarized inside
// the kernel (row scales for a, column scales for w); when out = B the
// product is thresholded at >= 0 and no scale is ever applied. word_bits
// sets the packing width where no binary operand pins it already.
MatOperand bmm(const KernelVariant& v, const MatOperand& a, const MatOperand& w,
               int word_bits = 32);

// out = adj * x per tile row. in1 tags the activations x, in2 the adjacency.
// strategy selects the 0/1-times-sign rewriting for the binary-activation
// path; all strategies produce identical results. word_bits sets the packing
// width of a binary output over full-precision activations; binary
// activations pin it themselves.
MatOperand bspmm(const KernelVariant& v, const AdjacencyOperand& adj, const MatOperand& x,
                 std::optional<TrinaryStrategy> strategy = std::nullopt, int word_bits = 32);

// Plain full-precision product, the non-binarized path a layer plan selects
// with the pseudo-variant MM.FFF.
DenseMatrix dense_mm(const DenseMatrix& a, const DenseMatrix& w);

BitDenseMatrix bin(const DenseMatrix& x, int word_bits = 32);

// x(i,j) * row[i] * col[j]
DenseMatrix scl(const DenseMatrix& x, const ScaleVector& row, const ScaleVector& col);

MatOperand add(const KernelVariant& v, const MatOperand& a, const MatOperand& b);

// Feature-axis concatenation; binary inputs are repacked bit-contiguously.
MatOperand concat(const KernelVariant& v, const MatOperand& a, const MatOperand& b);

struct FusedPlan {
  KernelVariant mm;
  KernelVariant spmm;
};

// adj * (x * w) with the intermediate handed straight to the sparse kernel;
// requires mm.out == spmm.in1.
MatOperand fused_mm_spmm(const FusedPlan& plan, const MatOperand& x, const MatOperand& w,
                         const AdjacencyOperand& adj,
                         std::optional<TrinaryStrategy> strategy = std::nullopt);

}  // namespace bitgnn
