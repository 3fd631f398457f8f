// Reference implementations the engine is tested against: plain double
// arithmetic, single-threaded, fixed accumulation order, no bit tricks.
#pragma once

#include <string>
#include <vector>

#include "bitgnn/graphops.hpp"

namespace bitgnn::oracle {

struct Config {
  enum class Mode { FullPrecision, SimulatedBinarization };
  Mode mode = Mode::SimulatedBinarization;
  double tolerance = 1e-6;
};

struct Mat {
  int64_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int64_t r, int64_t c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<size_t>(r * c), fill) {}

  double& at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * cols + j)]; }
  double at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * cols + j)]; }

  static Mat from(const DenseMatrix& m);
};

// sign with sign(0) = +1, matching the packed-bit convention.
inline double sign(double x) { return x >= 0 ? 1.0 : -1.0; }

// Naive i-j-k product; mm_alt runs k outermost so the two orders can be
// cross-checked against each other.
Mat mm(const Mat& a, const Mat& b);
Mat mm_alt(const Mat& a, const Mat& b);

// Aggregation over a dense 0/1 structure with optional diagonal factors,
// accumulated neighbor-by-neighbor in ascending column order:
// out_i = srow_i * sum_j a(i,j) * scol_j * x_j.
Mat aggregate(const Mat& a, const std::vector<double>* srow, const std::vector<double>* scol,
              const Mat& x);

// Dense adjacency times features, same order as aggregate without factors.
Mat spmm(const Mat& a, const Mat& x);

Mat sign_of(const Mat& m);

// Row (axis Row) or column (axis Col) mean absolute values, floored at 1e-12.
std::vector<double> l1_scales(const Mat& m, Axis axis);

struct GraphDense {
  int64_t n = 0;
  Mat a_raw;    // 0/1, self edges stripped
  Mat a_loops;  // 0/1 with self loops
  std::vector<double> norm;            // (row sum of a_loops)^{-1/2}
  std::vector<double> neighbor_count;  // row sums of a_raw
};

GraphDense graph_from_edges(const EdgeList& e);

struct Trace {
  struct Point {
    std::string label;
    Mat signs;  // entries are exactly -1 or +1
  };
  std::vector<Point> points;
  Mat logits;
};

// Walks the same layer chain as the engine. SimulatedBinarization replaces
// every value the engine would binarize with its sign and carries the L1
// reconstruction scales; FullPrecision ignores binarization entirely and
// runs the dense semantics of each layer. Trace points carry the same labels
// in the same order as the engine run.
Mat run_model(const ModelSpec& m, const Mat& x0, const GraphDense& g, const Config& cfg,
              Trace* trace = nullptr);

}  // namespace bitgnn::oracle
