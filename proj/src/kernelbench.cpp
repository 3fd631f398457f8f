#include "bitgnn/kernelbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "bitgnn/kernels.hpp"
#include "bitgnn/rng.hpp"

namespace bitgnn {

namespace {

class SingleThreadGuard {
public:
  SingleThreadGuard() {
#ifdef _OPENMP
    saved_ = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
  }
  ~SingleThreadGuard() {
#ifdef _OPENMP
    omp_set_num_threads(saved_);
#endif
  }

private:
  int saved_ = 1;
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string KernelBenchResult::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["engine_ms"] = engine_ms;
  j["baseline_ms"] = baseline_ms;
  j["speedup"] = speedup;
  j["values_match"] = values_match;
  return j.dump(2);
}

KernelBenchResult bench_bmm_bbf(int64_t n, uint64_t seed) {
  SingleThreadGuard guard;
  Rng rng(seed);
  BitDenseMatrix a = random_bits(rng, n, n, BitSemantics::PlusMinus);
  BitDenseMatrix w = random_bits(rng, n, n, BitSemantics::PlusMinus);

  KernelVariant v = KernelVariant::parse("MM.BBF");
  MatOperand ao = BitOperand{a, std::nullopt};
  MatOperand wo = BitOperand{w, std::nullopt};

  auto t0 = std::chrono::steady_clock::now();
  MatOperand out = bmm(v, ao, wo);
  double engine_ms = ms_since(t0);
  const DenseMatrix& eng = std::get<DenseMatrix>(out);

  // Same values, no bit tricks: decode to +-1 and run the classic triple loop
  // with double accumulation.
  DenseMatrix ad = unpack(a);
  DenseMatrix wd = unpack(w);
  DenseMatrix ref(n, n);
  t0 = std::chrono::steady_clock::now();
  for (int64_t i = 0; i < n; ++i) {
    const Real* ar = ad.row(i);
    Real* rr = ref.row(i);
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t k = 0; k < n; ++k) {
        acc += static_cast<double>(ar[k]) * static_cast<double>(wd.at(k, j));
      }
      rr[j] = static_cast<Real>(acc);
    }
  }
  double baseline_ms = ms_since(t0);

  bool match = true;
  for (int64_t i = 0; i < n && match; ++i) {
    const Real* er = eng.row(i);
    const Real* rr = ref.row(i);
    for (int64_t j = 0; j < n; ++j) {
      if (er[j] != rr[j]) {
        match = false;
        break;
      }
    }
  }

  KernelBenchResult r;
  r.name = "MM.BBF " + std::to_string(n) + "^3 vs naive full-precision triple loop";
  r.engine_ms = engine_ms;
  r.baseline_ms = baseline_ms;
  r.speedup = engine_ms > 0 ? baseline_ms / engine_ms : 0.0;
  r.values_match = match;
  return r;
}

KernelBenchResult bench_bspmm_bbb(int64_t nodes, double density, int64_t feature_cols,
                                  uint64_t seed, int word_bits) {
  SingleThreadGuard guard;
  Rng rng(seed);
  int64_t target_edges = static_cast<int64_t>(static_cast<double>(nodes) * static_cast<double>(nodes) * density);
  EdgeList e = random_edges(rng, nodes, target_edges, /*allow_self=*/true);
  FrdcMatrix a = frdc_from_edges(e, /*add_self_loops=*/false);
  BitDenseMatrix x = random_bits(rng, nodes, feature_cols, BitSemantics::PlusMinus, word_bits);

  KernelVariant v = KernelVariant::parse("BSpMM.BBB");
  AdjacencyOperand adj{&a, nullptr, nullptr};
  MatOperand xo = BitOperand{x, std::nullopt};

  auto t0 = std::chrono::steady_clock::now();
  MatOperand out = bspmm(v, adj, xo, std::nullopt);
  double engine_ms = ms_since(t0);
  const BitDenseMatrix& eng = std::get<BitOperand>(out).bits;

  // CSR expansion of the identical structure plus decoded +-1 features.
  std::vector<int64_t> row_ptr(static_cast<size_t>(nodes) + 1, 0);
  std::vector<int32_t> col_idx;
  {
    const auto& rp = a.row_ptr();
    const auto& ci = a.col_ind();
    const auto& tiles = a.tiles();
    for (int64_t tr = 0; tr < a.tile_rows(); ++tr) {
      for (int r = 0; r < FrdcMatrix::kTileDim; ++r) {
        int64_t i = tr * FrdcMatrix::kTileDim + r;
        if (i >= nodes) break;
        for (uint64_t k = rp[static_cast<size_t>(tr)]; k < rp[static_cast<size_t>(tr) + 1]; ++k) {
          uint16_t nib = static_cast<uint16_t>((tiles[k] >> (12 - 4 * r)) & 0xF);
          for (int c = 0; c < FrdcMatrix::kTileDim; ++c) {
            if (nib & (1u << (3 - c))) {
              col_idx.push_back(static_cast<int32_t>(ci[k] * FrdcMatrix::kTileDim + c));
            }
          }
        }
        row_ptr[static_cast<size_t>(i) + 1] = static_cast<int64_t>(col_idx.size());
      }
    }
    for (int64_t i = 1; i <= nodes; ++i) row_ptr[static_cast<size_t>(i)] = std::max(row_ptr[static_cast<size_t>(i)], row_ptr[static_cast<size_t>(i) - 1]);
  }
  DenseMatrix xd = unpack(x);
  DenseMatrix ref(nodes, feature_cols);
  std::vector<double> acc(static_cast<size_t>(feature_cols));
  t0 = std::chrono::steady_clock::now();
  for (int64_t i = 0; i < nodes; ++i) {
    Real* rr = ref.row(i);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int64_t k = row_ptr[static_cast<size_t>(i)]; k < row_ptr[static_cast<size_t>(i) + 1]; ++k) {
      const Real* xr = xd.row(col_idx[static_cast<size_t>(k)]);
      for (int64_t f = 0; f < feature_cols; ++f) acc[static_cast<size_t>(f)] += static_cast<double>(xr[f]);
    }
    for (int64_t f = 0; f < feature_cols; ++f) rr[f] = static_cast<Real>(acc[static_cast<size_t>(f)]);
  }
  double baseline_ms = ms_since(t0);

  bool match = true;
  for (int64_t i = 0; i < nodes && match; ++i) {
    for (int64_t f = 0; f < feature_cols; ++f) {
      bool rb = ref.at(i, f) >= 0;
      if (eng.bit(i, f) != rb) {
        match = false;
        break;
      }
    }
  }

  KernelBenchResult r;
  r.name = "BSpMM.BBB " + std::to_string(nodes) + " nodes, " + std::to_string(col_idx.size()) +
           " edges, " + std::to_string(feature_cols) + " features vs naive CSR SpMM";
  r.engine_ms = engine_ms;
  r.baseline_ms = baseline_ms;
  r.speedup = engine_ms > 0 ? baseline_ms / engine_ms : 0.0;
  r.values_match = match;
  return r;
}

}  // namespace bitgnn
