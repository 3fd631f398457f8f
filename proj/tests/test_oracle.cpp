#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "bitgnn/graphops.hpp"
#include "bitgnn/oracle.hpp"
#include "bitgnn/rng.hpp"

using namespace bitgnn;
using oracle::Mat;

namespace {

Mat mat(int64_t r, int64_t c, std::vector<double> v) {
  Mat m(r, c);
  m.v = std::move(v);
  return m;
}

Mat random_mat(Rng& rng, int64_t r, int64_t c) {
  Mat m(r, c);
  for (auto& x : m.v) x = rng.uniform_pm1();
  return m;
}

std::shared_ptr<DenseMatrix> weights(int64_t r, int64_t c, std::vector<Real> v) {
  auto w = std::make_shared<DenseMatrix>(r, c);
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) w->at(i, j) = v[static_cast<size_t>(i * c + j)];
  return w;
}

void check_equal(const Mat& a, const Mat& b) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  size_t diff = 0;
  for (size_t k = 0; k < a.v.size(); ++k) diff += a.v[k] != b.v[k];
  CHECK(diff == 0);
}

}  // namespace

TEST_CASE("mm reproduces hand-computed products") {
  Mat a = mat(2, 2, {1, 2, 3, 4});
  Mat b = mat(2, 2, {5, 6, 7, 8});
  check_equal(oracle::mm(a, b), mat(2, 2, {19, 22, 43, 50}));
  check_equal(oracle::mm(mat(1, 1, {3}), mat(1, 1, {-2})), mat(1, 1, {-6}));

  Mat eye = mat(2, 2, {1, 0, 0, 1});
  check_equal(oracle::mm(a, eye), a);
  check_equal(oracle::mm(eye, a), a);

  CHECK_THROWS(oracle::mm(mat(2, 3, std::vector<double>(6)), mat(2, 2, std::vector<double>(4))));
}

TEST_CASE("the two loop orders agree bit for bit") {
  Rng rng(11);
  for (auto [m, k, n] : std::vector<std::array<int64_t, 3>>{
           {9, 13, 7}, {1, 1, 1}, {4, 32, 5}, {17, 3, 17}}) {
    Mat a = random_mat(rng, m, k);
    Mat b = random_mat(rng, k, n);
    check_equal(oracle::mm(a, b), oracle::mm_alt(a, b));
  }
}

TEST_CASE("aggregate applies the diagonal factors around a 0/1 structure") {
  Mat a = mat(2, 2, {0, 1, 1, 0});
  std::vector<double> srow = {2, 3}, scol = {5, 7};
  Mat x = mat(2, 1, {1, 10});
  check_equal(oracle::aggregate(a, &srow, &scol, x), mat(2, 1, {140, 15}));
  check_equal(oracle::aggregate(a, nullptr, nullptr, x), oracle::spmm(a, x));
  check_equal(oracle::spmm(a, x), mat(2, 1, {10, 1}));
  CHECK_THROWS(oracle::aggregate(a, &srow, &scol, mat(3, 1, {1, 2, 3})));
}

TEST_CASE("sign maps zero to plus one") {
  CHECK(oracle::sign(0.0) == 1.0);
  CHECK(oracle::sign(-0.0) == 1.0);
  CHECK(oracle::sign(1e-300) == 1.0);
  CHECK(oracle::sign(-1e-300) == -1.0);
  check_equal(oracle::sign_of(mat(1, 4, {0.0, -0.5, 2.0, -0.0})), mat(1, 4, {1, -1, 1, 1}));
}

TEST_CASE("l1 scales are per-axis mean magnitudes with a positive floor") {
  Mat m = mat(2, 2, {1, -2, 3, 4});
  auto row = oracle::l1_scales(m, Axis::Row);
  auto col = oracle::l1_scales(m, Axis::Col);
  CHECK(row == std::vector<double>{1.5, 3.5});
  CHECK(col == std::vector<double>{2.0, 3.0});

  auto z = oracle::l1_scales(Mat(3, 2), Axis::Row);
  CHECK(z == std::vector<double>(3, 1e-12));
}

TEST_CASE("oracle scales match the packing-side scales") {
  Rng rng(13);
  for (int it = 0; it < 20; ++it) {
    DenseMatrix d = random_dense(rng, rng.range(1, 40), rng.range(1, 40));
    Mat m = Mat::from(d);
    for (Axis axis : {Axis::Row, Axis::Col}) {
      auto [bits, scale] = binarize_with_scale(d, axis);
      auto ref = oracle::l1_scales(m, axis);
      REQUIRE(scale.size() == static_cast<int64_t>(ref.size()));
      int64_t off = 0;
      for (int64_t i = 0; i < scale.size(); ++i) {
        // the engine averages in float, the oracle in double
        double want = ref[static_cast<size_t>(i)];
        off += std::abs(static_cast<double>(scale[i]) - want) > 1e-5 * std::max(1.0, want);
      }
      CHECK(off == 0);
      (void)bits;
    }
  }
}

TEST_CASE("graph_from_edges splits raw and self-loop structures") {
  EdgeList e;
  e.node_count = 3;
  e.edges = {{0, 1}, {1, 0}, {1, 2}, {2, 2}};
  oracle::GraphDense g = oracle::graph_from_edges(e);
  check_equal(g.a_raw, mat(3, 3, {0, 1, 0, 1, 0, 1, 0, 0, 0}));
  check_equal(g.a_loops, mat(3, 3, {1, 1, 0, 1, 1, 1, 0, 0, 1}));
  CHECK(g.neighbor_count == std::vector<double>{1, 2, 0});
  CHECK(g.norm[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(g.norm[1] == doctest::Approx(1.0 / std::sqrt(3.0)));
  CHECK(g.norm[2] == doctest::Approx(1.0));

  EdgeList bad;
  bad.node_count = 2;
  bad.edges = {{0, 5}};
  CHECK_THROWS_WITH_AS(oracle::graph_from_edges(bad),
                       "oracle: edge (0, 5) out of range for 2 nodes", std::invalid_argument);
}

TEST_CASE("Mat::from widens the engine matrix exactly") {
  Rng rng(17);
  DenseMatrix d = random_dense(rng, 5, 9);
  Mat m = Mat::from(d);
  size_t diff = 0;
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 9; ++j) diff += m.at(i, j) != static_cast<double>(d.at(i, j));
  CHECK(diff == 0);
}

TEST_CASE("a full-precision fully connected chain is plain matrix algebra") {
  ModelSpec spec;
  LayerSpec fc;
  fc.kind = LayerKind::FullyConnected;
  fc.plan = {KernelVariant::parse("MM.FFF")};
  fc.w1 = weights(2, 2, {1, -1, 0.5, 2});
  spec.layers.push_back(fc);
  LayerSpec sm;
  sm.kind = LayerKind::Softmax;
  spec.layers.push_back(sm);

  oracle::Config cfg;
  cfg.mode = oracle::Config::Mode::FullPrecision;
  oracle::Trace tr;
  Mat x0 = mat(1, 2, {1, 2});
  Mat out = oracle::run_model(spec, x0, oracle::GraphDense{}, cfg, &tr);

  check_equal(tr.logits, mat(1, 2, {2, 3}));
  CHECK(tr.points.empty());
  CHECK(out.at(0, 0) == doctest::Approx(std::exp(2.0) / (std::exp(2.0) + std::exp(3.0))));
  CHECK(out.at(0, 0) + out.at(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("simulated binarization reconstructs through the L1 scales") {
  ModelSpec spec;
  LayerSpec fc;
  fc.kind = LayerKind::FullyConnected;
  fc.plan = {KernelVariant::parse("MM.FBF")};
  fc.w1 = weights(2, 2, {1, -3, 2, 0.5});
  spec.layers.push_back(fc);
  LayerSpec sm;
  sm.kind = LayerKind::Softmax;
  spec.layers.push_back(sm);

  oracle::Config cfg;
  oracle::Trace tr;
  Mat out = oracle::run_model(spec, mat(1, 2, {0.5, -2}), oracle::GraphDense{}, cfg, &tr);
  (void)out;

  // signs: x -> [1, -1], W -> [[1, -1], [1, 1]], dots = [0, -2]
  // alpha = 1.25, beta = [1.5, 1.75]
  REQUIRE(tr.points.size() == 2);
  CHECK(tr.points[0].label == "layer0.mm.bin_in");
  check_equal(tr.points[0].signs, mat(1, 2, {1, -1}));
  CHECK(tr.points[1].label == "layer0.mm.bin_w");
  check_equal(tr.points[1].signs, mat(2, 2, {1, -1, 1, 1}));
  CHECK(tr.logits.at(0, 0) == doctest::Approx(0.0));
  CHECK(tr.logits.at(0, 1) == doctest::Approx(-2.0 * 1.25 * 1.75));
}

TEST_CASE("a binary-to-binary chain records every sign point in order") {
  ModelSpec spec;
  LayerSpec fc0;
  fc0.kind = LayerKind::FullyConnected;
  fc0.plan = {KernelVariant::parse("MM.FBB")};
  fc0.w1 = weights(2, 2, {1, -3, 2, 0.5});
  spec.layers.push_back(fc0);
  LayerSpec fc1;
  fc1.kind = LayerKind::FullyConnected;
  fc1.plan = {KernelVariant::parse("MM.BBF")};
  fc1.w1 = weights(2, 1, {2, -4});
  spec.layers.push_back(fc1);
  LayerSpec sm;
  sm.kind = LayerKind::Softmax;
  spec.layers.push_back(sm);

  oracle::Config cfg;
  oracle::Trace tr;
  oracle::run_model(spec, mat(1, 2, {0.5, -2}), oracle::GraphDense{}, cfg, &tr);

  REQUIRE(tr.points.size() == 4);
  CHECK(tr.points[0].label == "layer0.mm.bin_in");
  CHECK(tr.points[1].label == "layer0.mm.bin_w");
  CHECK(tr.points[2].label == "layer0.mm.out");
  check_equal(tr.points[2].signs, mat(1, 2, {1, -1}));  // dots [0, -2], sign(0) = +1
  CHECK(tr.points[3].label == "layer1.mm.bin_w");
  // second layer: [1, -1] x sign([[2], [-4]]) = [1*1 + (-1)*(-1)] = [2], beta = 3
  CHECK(tr.logits.at(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("simulated gcn drops the norm scales on the pure binary path") {
  EdgeList e;
  e.node_count = 2;
  e.edges = {{0, 1}, {1, 0}};
  auto bundle = prepare_graph(e);
  oracle::GraphDense g = oracle::graph_from_edges(e);

  ModelSpec spec;
  spec.graph = bundle;
  LayerSpec conv;
  conv.kind = LayerKind::GcnConv;
  conv.plan = {KernelVariant::parse("MM.FBB"), KernelVariant::parse("BSpMM.BBB")};
  conv.w1 = weights(1, 2, {1, -1});
  spec.layers.push_back(conv);
  LayerSpec fc;
  fc.kind = LayerKind::FullyConnected;
  fc.plan = {KernelVariant::parse("MM.BBF")};
  fc.w1 = weights(2, 1, {2, -4});
  spec.layers.push_back(fc);
  LayerSpec sm;
  sm.kind = LayerKind::Softmax;
  spec.layers.push_back(sm);

  oracle::Config cfg;
  oracle::Trace tr;
  oracle::run_model(spec, mat(2, 1, {0.5, -2}), g, cfg, &tr);

  REQUIRE(tr.points.size() == 5);
  CHECK(tr.points[0].label == "layer0.mm.bin_in");
  CHECK(tr.points[1].label == "layer0.mm.bin_w");
  CHECK(tr.points[2].label == "layer0.mm.out");
  check_equal(tr.points[2].signs, mat(2, 2, {1, -1, -1, 1}));
  CHECK(tr.points[3].label == "layer0.spmm.out");
  // both rows sum the two sign rows: [0, 0] -> [+1, +1]
  check_equal(tr.points[3].signs, mat(2, 2, {1, 1, 1, 1}));
  CHECK(tr.points[4].label == "layer1.mm.bin_w");
  // [1, 1] x [[1], [-1]] = 0, beta = 3 -> logits 0
  check_equal(tr.logits, mat(2, 1, {0, 0}));
}

TEST_CASE("a full-precision gcn averages over the normalized structure") {
  EdgeList e;
  e.node_count = 2;
  e.edges = {{0, 1}, {1, 0}};
  auto bundle = prepare_graph(e);
  oracle::GraphDense g = oracle::graph_from_edges(e);

  ModelSpec spec;
  spec.graph = bundle;
  LayerSpec conv;
  conv.kind = LayerKind::GcnConv;
  conv.plan = {KernelVariant::parse("MM.FFF"), KernelVariant::parse("BSpMM.FFF")};
  conv.w1 = weights(1, 1, {3});
  conv.relu = true;
  spec.layers.push_back(conv);
  LayerSpec sm;
  sm.kind = LayerKind::Softmax;
  spec.layers.push_back(sm);

  oracle::Config cfg;
  cfg.mode = oracle::Config::Mode::FullPrecision;
  oracle::Trace tr;
  Mat out = oracle::run_model(spec, mat(2, 1, {2, 4}), g, cfg, &tr);

  // h = [6, 12]; the normalized factor pairs multiply to 1/2 up to rounding,
  // so out_i = (6 + 12) / 2 = 9
  REQUIRE(tr.logits.v.size() == 2);
  CHECK(tr.logits.at(0, 0) == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(tr.logits.at(1, 0) == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(tr.points.empty());
  check_equal(out, mat(2, 1, {1, 1}));  // softmax over a single class
}

TEST_CASE("the oracle is deterministic across runs") {
  Rng rng(23);
  EdgeList e = random_edges(rng, 20, 60, false);
  auto bundle = prepare_graph(e);
  oracle::GraphDense g = oracle::graph_from_edges(e);

  ModelSpec spec;
  spec.graph = bundle;
  LayerSpec conv;
  conv.kind = LayerKind::GcnConv;
  conv.plan = {KernelVariant::parse("MM.FBB"), KernelVariant::parse("BSpMM.BBF")};
  auto w = std::make_shared<DenseMatrix>(random_dense(rng, 6, 4));
  conv.w1 = w;
  spec.layers.push_back(conv);
  LayerSpec sm;
  sm.kind = LayerKind::Softmax;
  spec.layers.push_back(sm);

  Mat x0 = random_mat(rng, 20, 6);
  oracle::Config cfg;
  oracle::Trace t1, t2;
  Mat o1 = oracle::run_model(spec, x0, g, cfg, &t1);
  Mat o2 = oracle::run_model(spec, x0, g, cfg, &t2);
  check_equal(o1, o2);
  REQUIRE(t1.points.size() == t2.points.size());
  for (size_t k = 0; k < t1.points.size(); ++k) {
    CHECK(t1.points[k].label == t2.points[k].label);
    check_equal(t1.points[k].signs, t2.points[k].signs);
  }
}
