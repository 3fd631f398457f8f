// Acceptance gate: every promised behavior runs here at its stated strength,
// one verdict line per criterion.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <chrono>
#include <cstdio>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "bitgnn/graphops.hpp"
#include "bitgnn/kernelbench.hpp"
#include "bitgnn/modelconfig.hpp"
#include "bitgnn/oracle.hpp"
#include "bitgnn/rng.hpp"
#include "bitgnn/runreport.hpp"

using namespace bitgnn;
using oracle::Mat;

namespace {

struct Criterion {
  std::string name;
  bool ok = true;

  explicit Criterion(std::string n) : name(std::move(n)) {}
  ~Criterion() {
    std::printf("[acceptance] %s: %s\n", name.c_str(), ok ? "PASS" : "FAIL");
    std::fflush(stdout);
  }
  void expect(bool cond) { ok = ok && cond; }
};

KernelVariant V(const char* s) { return KernelVariant::parse(s); }

Mat signs_of_bits(const BitDenseMatrix& b) {
  Mat s(b.rows(), b.cols());
  for (int64_t i = 0; i < b.rows(); ++i)
    for (int64_t j = 0; j < b.cols(); ++j) s.at(i, j) = b.bit(i, j) ? 1.0 : -1.0;
  return s;
}

Mat zero_one_of_bits(const BitDenseMatrix& b) {
  Mat s(b.rows(), b.cols());
  for (int64_t i = 0; i < b.rows(); ++i)
    for (int64_t j = 0; j < b.cols(); ++j) s.at(i, j) = b.bit(i, j) ? 1.0 : 0.0;
  return s;
}

std::vector<double> as_doubles(const ScaleVector& s) {
  return std::vector<double>(s.values().begin(), s.values().end());
}

ScaleVector random_scales(Rng& rng, Axis axis, int64_t n) {
  std::vector<Real> v(static_cast<size_t>(n));
  for (auto& x : v) x = static_cast<Real>(0.1 + rng.uniform());
  return ScaleVector(axis, std::move(v));
}

}  // namespace

TEST_CASE("binary dot-product identities") {
  Criterion c("binary dot-product identities");
  Rng rng(41);
  int64_t trials = 10000, bad = 0;
  for (int64_t t = 0; t < trials; ++t) {
    int64_t n = rng.range(1, 512);
    int wb = (t & 1) ? 64 : 32;
    BitDenseMatrix a = random_bits(rng, 1, n, BitSemantics::ZeroOne, wb);
    BitDenseMatrix b = random_bits(rng, 1, n, BitSemantics::ZeroOne, wb);

    int64_t dot01 = 0, dotpm = 0;
    for (int64_t j = 0; j < n; ++j) {
      int va = a.bit(0, j), vb = b.bit(0, j);
      dot01 += va & vb;
      dotpm += (va ? 1 : -1) * (vb ? 1 : -1);
    }
    int64_t pand = 0, pxor = 0;
    auto wa = a.row_span(0);
    auto wbs = b.row_span(0);
    for (size_t w = 0; w < wa.size(); ++w) {
      pand += std::popcount(wa[w] & wbs[w]);
      pxor += std::popcount(wa[w] ^ wbs[w]);
    }
    bad += pand != dot01;          // 0/1 values: dot = popcount(a AND b)
    bad += (n - 2 * pxor) != dotpm;  // +/-1 values: dot = n - 2 popcount(a XOR b)
  }
  c.expect(bad == 0);
  CHECK(bad == 0);
  CHECK(c.ok);
}

TEST_CASE("trinary strategy agreement") {
  Criterion c("trinary strategy agreement");
  Rng rng(42);
  int64_t trials = 10000, bad = 0;
  for (int64_t t = 0; t < trials; ++t) {
    int64_t n = rng.range(1, 64);
    uint64_t mask = n == 64 ? ~0ull : ((1ull << n) - 1);
    uint64_t a = rng.next() & mask;  // 0/1 structure row
    uint64_t x = rng.next();         // sign bits, 1 = +1

    int64_t walk = 0;
    for (int64_t j = 0; j < n; ++j) {
      if ((a >> j) & 1) walk += ((x >> j) & 1) ? 1 : -1;
    }
    int64_t and_andnot = std::popcount(a & x) - std::popcount(a & ~x & mask);
    int64_t two_minus = 2 * static_cast<int64_t>(std::popcount(a & x)) - std::popcount(a);
    bad += !(walk == and_andnot && walk == two_minus);
  }
  c.expect(bad == 0);

  // the same equivalence at full kernel granularity
  for (int it = 0; it < 6; ++it) {
    EdgeList e = random_edges(rng, 80, 900, true);
    FrdcMatrix a = frdc_from_edges(e, false);
    DenseMatrix xd = random_dense(rng, 80, 17);
    BitOperand xb{binarize(xd), std::nullopt};
    AdjacencyOperand adj{&a, nullptr, nullptr};
    MatOperand r0 = bspmm(V("BSpMM.BBF"), adj, MatOperand(xb), TrinaryStrategy::IfElse);
    MatOperand r1 = bspmm(V("BSpMM.BBF"), adj, MatOperand(xb), TrinaryStrategy::AndAndNot);
    MatOperand r2 = bspmm(V("BSpMM.BBF"), adj, MatOperand(xb), TrinaryStrategy::TwoAndMinusPopc);
    const auto& d0 = std::get<DenseMatrix>(r0);
    const auto& d1 = std::get<DenseMatrix>(r1);
    const auto& d2 = std::get<DenseMatrix>(r2);
    int64_t diff = 0;
    for (int64_t i = 0; i < 80; ++i)
      for (int64_t j = 0; j < 17; ++j)
        diff += (d0.at(i, j) != d1.at(i, j)) + (d0.at(i, j) != d2.at(i, j));
    c.expect(diff == 0);
  }
  CHECK(c.ok);
}

TEST_CASE("kernel-vs-reference instances") {
  Criterion c("kernel-vs-reference instances");
  auto started = std::chrono::steady_clock::now();
  Rng rng(43);
  auto dim = [&rng]() -> int64_t {
    static const int64_t pinned[] = {1, 31, 32, 33, 63, 64, 65, 127, 128, 300};
    return (rng.next() & 1) ? pinned[rng.index(10)] : rng.range(1, 300);
  };
  int64_t instances = 0, bit_bad = 0, int_bad = 0;
  double max_rel = 0.0;

  for (int it = 0; it < 35; ++it) {
    int64_t m = dim(), k = dim(), n = dim();
    int wb = (it & 1) ? 64 : 32;

    BitDenseMatrix abits = random_bits(rng, m, k, BitSemantics::PlusMinus, wb);
    BitDenseMatrix wbits = random_bits(rng, k, n, BitSemantics::PlusMinus, wb);
    DenseMatrix ad = random_dense(rng, m, k);
    Mat dots = oracle::mm(signs_of_bits(abits), signs_of_bits(wbits));
    Mat dots_f = oracle::mm(oracle::sign_of(Mat::from(ad)), signs_of_bits(wbits));

    {  // BMM.BBB: packed output thresholds the integer dot
      MatOperand out = bmm(V("BMM.BBB"), MatOperand(BitOperand{abits, std::nullopt}),
                           MatOperand(BitOperand{wbits, std::nullopt}), wb);
      const auto& b = std::get<BitOperand>(out).bits;
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) bit_bad += b.bit(i, j) != (dots.at(i, j) >= 0);
      ++instances;
    }
    {  // BMM.BBF: integer dots land exactly, scaled dots within 1e-6
      bool scaled = it & 1;
      std::optional<ScaleVector> beta;
      if (scaled) beta = random_scales(rng, Axis::Col, n);
      MatOperand out = bmm(V("BMM.BBF"), MatOperand(BitOperand{abits, std::nullopt}),
                           MatOperand(BitOperand{wbits, beta}), wb);
      const auto& d = std::get<DenseMatrix>(out);
      std::vector<double> bd = scaled ? as_doubles(*beta) : std::vector<double>();
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          double want = dots.at(i, j) * (scaled ? bd[static_cast<size_t>(j)] : 1.0);
          if (scaled) {
            double rel = std::abs(d.at(i, j) - want) / std::max(1.0, std::abs(want));
            max_rel = std::max(max_rel, rel);
          } else {
            int_bad += d.at(i, j) != static_cast<Real>(want);
          }
        }
      }
      ++instances;
    }
    {  // BMM.FBB: the full-precision side is binarized inside the kernel
      MatOperand out = bmm(V("BMM.FBB"), MatOperand(ad),
                           MatOperand(BitOperand{wbits, std::nullopt}), wb);
      const auto& b = std::get<BitOperand>(out).bits;
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) bit_bad += b.bit(i, j) != (dots_f.at(i, j) >= 0);
      ++instances;
    }
  }

  TrinaryStrategy strategies[3] = {TrinaryStrategy::IfElse, TrinaryStrategy::AndAndNot,
                                   TrinaryStrategy::TwoAndMinusPopc};
  for (int it = 0; it < 25; ++it) {
    int64_t n = dim(), f = dim();
    double density = 0.001 + rng.uniform() * 0.099;
    int64_t edges = std::max<int64_t>(1, static_cast<int64_t>(density * static_cast<double>(n) *
                                                              static_cast<double>(n)));
    EdgeList e = random_edges(rng, n, edges, true);
    FrdcMatrix a = frdc_from_edges(e, false);
    Mat a01 = zero_one_of_bits(frdc_to_dense(a));
    int wb = (it & 1) ? 64 : 32;
    TrinaryStrategy st = strategies[it % 3];

    DenseMatrix xd = random_dense(rng, n, f);
    BitOperand xb{binarize(xd, wb), std::nullopt};
    Mat xsigns = oracle::sign_of(Mat::from(xd));

    AdjacencyOperand raw{&a, nullptr, nullptr};
    Mat agg = oracle::aggregate(a01, nullptr, nullptr, xsigns);
    Mat agg_f = oracle::aggregate(a01, nullptr, nullptr, Mat::from(xd));

    {  // BSpMM.BBB
      MatOperand out = bspmm(V("BSpMM.BBB"), raw, MatOperand(xb), st, wb);
      const auto& b = std::get<BitOperand>(out).bits;
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < f; ++j) bit_bad += b.bit(i, j) != (agg.at(i, j) >= 0);
      ++instances;
    }
    {  // BSpMM.BBF: plain integer sums
      MatOperand out = bspmm(V("BSpMM.BBF"), raw, MatOperand(xb), st, wb);
      const auto& d = std::get<DenseMatrix>(out);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < f; ++j)
          int_bad += d.at(i, j) != static_cast<Real>(agg.at(i, j));
      ++instances;
    }
    {  // BSpMM.FBB: full-precision rows aggregated, packed output
      MatOperand out = bspmm(V("BSpMM.FBB"), raw, MatOperand(xd), st, wb);
      const auto& b = std::get<BitOperand>(out).bits;
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < f; ++j) bit_bad += b.bit(i, j) != (agg_f.at(i, j) >= 0);
      ++instances;
    }
    {  // BSpMM.FBF
      MatOperand out = bspmm(V("BSpMM.FBF"), raw, MatOperand(xd), st, wb);
      const auto& d = std::get<DenseMatrix>(out);
      for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < f; ++j) {
          double rel = std::abs(static_cast<double>(d.at(i, j)) - agg_f.at(i, j)) /
                       std::max(1.0, std::abs(agg_f.at(i, j)));
          max_rel = std::max(max_rel, rel);
        }
      }
      ++instances;
    }
  }

  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  c.expect(instances >= 200);
  c.expect(bit_bad == 0);
  c.expect(int_bad == 0);
  c.expect(max_rel <= 1e-6);
  c.expect(secs < 300.0);
  CHECK(instances >= 200);
  CHECK(bit_bad == 0);
  CHECK(int_bad == 0);
  CHECK(max_rel <= 1e-6);
  CHECK(secs < 300.0);
  CHECK(c.ok);
}

TEST_CASE("tile-set gather fidelity") {
  Criterion c("tile-set gather fidelity");

  // ten populated tiles in one tile row
  EdgeList e;
  e.node_count = 40;
  for (int64_t t = 0; t < 10; ++t) e.edges.emplace_back(0, 4 * t);
  FrdcMatrix m = frdc_from_edges(e, false);

  c.expect(tileset_count(m, 0, 32) == 2);
  TileSet s0 = gather_tileset(m, 0, 0, 32);
  TileSet s1 = gather_tileset(m, 0, 1, 32);
  c.expect(s0.ts == 8);
  for (int s = 0; s < 8; ++s) c.expect(s0.cols[static_cast<size_t>(s)] == static_cast<uint32_t>(s));
  c.expect(s1.cols[0] == 8 && s1.cols[1] == 9);
  int padded = 0;
  for (int s = 2; s < 8; ++s) padded += s1.cols[static_cast<size_t>(s)] == TileSet::kPadCol;
  c.expect(padded == 6);
  c.expect(s0.rows[0] == 0x88888888u);
  c.expect(s1.rows[0] == 0x88000000u);
  c.expect(tileset_count(m, 0, 64) == 1);
  TileSet w = gather_tileset(m, 0, 0, 64);
  c.expect(w.rows[0] == 0x8888888888000000ull);
  c.expect(w.cols[10] == TileSet::kPadCol);

  // gathering is the exact inverse of the stored layout
  Rng rng(44);
  int64_t mism = 0;
  for (int it = 0; it < 50; ++it) {
    int64_t n = rng.range(1, 200);
    EdgeList re = random_edges(rng, n, rng.range(1, 4 * n), true);
    FrdcMatrix rm = frdc_from_edges(re, it & 1);
    BitDenseMatrix want = frdc_to_dense(rm);
    for (int wb : {32, 64}) {
      BitDenseMatrix got(rm.node_rows(), rm.node_cols(), BitSemantics::ZeroOne);
      for (int64_t tr = 0; tr < (rm.node_rows() + 3) / 4; ++tr) {
        for (int64_t s = 0; s < tileset_count(rm, tr, wb); ++s) {
          TileSet ts = gather_tileset(rm, tr, s, wb);
          for (int slot = 0; slot < ts.ts; ++slot) {
            uint32_t tc = ts.cols[static_cast<size_t>(slot)];
            if (tc == TileSet::kPadCol) continue;
            for (int r = 0; r < 4; ++r) {
              int64_t row = tr * 4 + r;
              if (row >= rm.node_rows()) break;
              uint64_t nib = (ts.rows[static_cast<size_t>(r)] >> (wb - 4 - 4 * slot)) & 0xF;
              for (int co = 0; co < 4; ++co) {
                int64_t col = static_cast<int64_t>(tc) * 4 + co;
                if (col >= rm.node_cols()) break;
                if ((nib >> (3 - co)) & 1) got.set_bit(row, col, true);
              }
            }
          }
        }
      }
      mism += !(got == want);
    }
  }
  c.expect(mism == 0);
  CHECK(mism == 0);
  CHECK(c.ok);
}

TEST_CASE("end-to-end binary gcn") {
  Criterion c("end-to-end binary gcn");
  Rng rng(100);
  EdgeList e = random_edges(rng, 2708, 13264, false);

  ModelConfig cfg;
  cfg.model = "gcn";
  cfg.features = 1433;
  cfg.hidden = 16;
  cfg.classes = 7;
  cfg.seed = 99;
  auto graph = prepare_graph(e);
  BuiltModel bm = build_model(cfg, graph, e.node_count);

  oracle::Config ocfg;
  ocfg.mode = oracle::Config::Mode::SimulatedBinarization;
  VerifyReport r = verify_model(bm.spec, bm.features, e, ocfg);
  c.expect(r.bin_points > 0);
  c.expect(r.bin_values > 0);
  c.expect(r.bin_mismatches == 0);
  c.expect(r.argmax_agreement == 1.0);
  CHECK(r.bin_mismatches == 0);
  CHECK(r.argmax_agreement == 1.0);
  CHECK(c.ok);
}

TEST_CASE("scale-elimination rewrite") {
  Criterion c("scale-elimination rewrite");
  Rng rng(45);
  int64_t bad = 0;
  for (int it = 0; it < 100; ++it) {
    int64_t rows = rng.range(3, 12);
    int64_t f0 = rng.range(2, 10), f1 = rng.range(2, 10), f2 = rng.range(2, 8);

    auto make_scale = [&](int64_t r, int64_t cols) {
      std::vector<Real> sr(static_cast<size_t>(r)), sc(static_cast<size_t>(cols));
      for (auto& v : sr) v = static_cast<Real>(0.25 + rng.uniform());
      for (auto& v : sc) v = static_cast<Real>(0.25 + rng.uniform());
      LayerSpec l;
      l.kind = LayerKind::Scale;
      l.scale_row = ScaleVector(Axis::Row, std::move(sr));
      l.scale_col = ScaleVector(Axis::Col, std::move(sc));
      return l;
    };
    auto fc = [&](const char* v, int64_t r, int64_t cc) {
      LayerSpec l;
      l.kind = LayerKind::FullyConnected;
      l.plan = {KernelVariant::parse(v)};
      l.w1 = std::make_shared<DenseMatrix>(random_dense(rng, r, cc));
      return l;
    };
    LayerSpec bin;
    bin.kind = LayerKind::Binarize;
    LayerSpec sm;
    sm.kind = LayerKind::Softmax;

    ModelSpec m;
    m.layers.push_back(fc("MM.FBF", f0, f1));
    m.layers.push_back(make_scale(rows, f1));
    m.layers.push_back(bin);
    m.layers.push_back(fc("MM.BBF", f1, f2));
    if (it % 2) {
      m.layers.push_back(make_scale(rows, f2));
      m.layers.push_back(bin);
      m.layers.push_back(fc("MM.BBF", f2, f2));
    }
    m.layers.push_back(sm);

    ModelSpec r = rewrite_eliminate_scl(m);
    if (r.layers.size() >= m.layers.size()) {
      ++bad;
      continue;
    }
    DenseMatrix x0 = random_dense(rng, rows, f0);
    RunTrace ta, tb;
    DenseMatrix oa = run_model(m, MatOperand(x0), &ta);
    DenseMatrix ob = run_model(r, MatOperand(x0), &tb);
    if (ta.points.size() != tb.points.size()) {
      ++bad;
      continue;
    }
    for (size_t k = 0; k < ta.points.size(); ++k) bad += !(ta.points[k].bits == tb.points[k].bits);
    for (int64_t i = 0; i < oa.rows(); ++i)
      for (int64_t j = 0; j < oa.cols(); ++j) bad += oa.at(i, j) != ob.at(i, j);
  }
  c.expect(bad == 0);
  CHECK(bad == 0);
  CHECK(c.ok);
}

TEST_CASE("feature memory compression") {
  Criterion c("feature memory compression");
  Rng rng(46);
  EdgeList e = random_edges(rng, 2708, 13264, false);

  ModelConfig cfg;
  cfg.model = "gcn";
  cfg.features = 1433;
  cfg.hidden = 16;
  cfg.classes = 7;
  cfg.seed = 99;
  auto graph = prepare_graph(e);
  BuiltModel bm = build_model(cfg, graph, e.node_count);

  MemoryReport mr = model_memory(bm.spec, e.node_count, cfg.features);
  c.expect(mr.input_bits_bytes == 487440);
  c.expect(mr.input_dense_bytes == static_cast<size_t>(2708) * 1433 * sizeof(Real));
  double ratio = static_cast<double>(mr.input_dense_bytes) / static_cast<double>(mr.input_bits_bytes);
  c.expect(ratio > 31.8);
  CHECK(mr.input_bits_bytes == 487440);
  CHECK(ratio > 31.8);
  CHECK(c.ok);
}

TEST_CASE("kernel speedups") {
  Criterion c("kernel speedups");
  KernelBenchResult a = bench_bmm_bbf(2048, 7);
  KernelBenchResult b = bench_bspmm_bbb(65536, 0.001, 128, 7);
  std::printf("[acceptance]   %s: %.2fx (%.1f ms vs %.1f ms)\n", a.name.c_str(), a.speedup,
              a.engine_ms, a.baseline_ms);
  std::printf("[acceptance]   %s: %.2fx (%.1f ms vs %.1f ms)\n", b.name.c_str(), b.speedup,
              b.engine_ms, b.baseline_ms);
  c.expect(a.values_match);
  c.expect(b.values_match);
  c.expect(a.speedup >= 8.0);
  c.expect(b.speedup >= 3.0);
  CHECK(a.values_match);
  CHECK(b.values_match);
  CHECK(a.speedup >= 8.0);
  CHECK(b.speedup >= 3.0);
  CHECK(c.ok);
}

TEST_CASE("container round trip") {
  Criterion c("container round trip");
  Rng rng(47);
  int64_t bad = 0;
  for (int64_t t = 0; t < 1000; ++t) {
    int64_t n = rng.range(1, 2048);
    EdgeList e = random_edges(rng, n, rng.range(0, 4 * n), true);
    FrdcMatrix m = frdc_from_edges(e, t & 1);
    int wb = (t & 2) ? 64 : 32;

    std::stringstream ss;
    write_frdc(ss, m, wb);
    FrdcFile f = read_frdc(ss);
    bool same = f.word_bits == wb && f.matrix.node_rows() == m.node_rows() &&
                f.matrix.node_cols() == m.node_cols() && f.matrix.row_ptr() == m.row_ptr() &&
                f.matrix.col_ind() == m.col_ind() && f.matrix.tiles() == m.tiles();
    bad += !same;
  }
  c.expect(bad == 0);

  // byte-for-byte layout of a hand-assembled container
  EdgeList e;
  e.node_count = 8;
  e.edges = {{1, 2}, {0, 5}};
  std::stringstream ss;
  write_frdc(ss, frdc_from_edges(e, false), 32);
  std::string got = ss.str();

  std::string want;
  auto u16 = [&](uint16_t v) {
    want.push_back(static_cast<char>(v & 0xFF));
    want.push_back(static_cast<char>(v >> 8));
  };
  auto u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) want.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto u64 = [&](uint64_t v) {
    for (int i = 0; i < 8; ++i) want.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  want += "FRDC";
  u32(1);                      // version
  want.push_back(4);           // tile dim
  want.push_back(32);          // word bits
  u16(0);                      // reserved
  u64(8);                      // node rows
  u64(8);                      // node cols
  u64(2);                      // tile count
  u64(0);                      // row_ptr
  u64(2);
  u64(2);
  u32(0);                      // col_ind
  u32(1);
  u16(0x0200);                 // tile holding (1, 2)
  u16(0x4000);                 // tile holding (0, 5)
  c.expect(got == want);
  CHECK(bad == 0);
  CHECK(got == want);
  CHECK(c.ok);
}
