#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bitgnn/bitsparse.hpp"
#include "bitgnn/rng.hpp"

using namespace bitgnn;

namespace {

// The dense matrix an edge list should expand to, for whole-matrix equality.
BitDenseMatrix dense_of(const EdgeList& e, bool self_loops) {
  BitDenseMatrix want(e.node_count, e.node_count, BitSemantics::ZeroOne, 32);
  for (auto [s, d] : e.edges) want.set_bit(s, d, true);
  if (self_loops)
    for (int64_t i = 0; i < e.node_count; ++i) want.set_bit(i, i, true);
  return want;
}

void check_matches(const FrdcMatrix& m, const EdgeList& e, bool self_loops) {
  REQUIRE(frdc_to_dense(m) == dense_of(e, self_loops));
}

}  // namespace

TEST_CASE("two scattered edges land in the expected tiles") {
  EdgeList e;
  e.node_count = 8;
  e.edges = {{1, 2}, {0, 5}};
  FrdcMatrix m = frdc_from_edges(e, false);
  CHECK(m.row_ptr() == std::vector<uint64_t>{0, 2, 2});
  REQUIRE(m.col_ind().size() == 2);
  CHECK(m.col_ind()[0] == 0);
  CHECK(m.col_ind()[1] == 1);
  CHECK(m.tiles()[0] == 0x0200);  // local (1, 2)
  CHECK(m.tiles()[1] == 0x4000);  // local (0, 1)
  check_matches(m, e, false);
}

TEST_CASE("a 4-node path with self loops packs into one tridiagonal tile") {
  EdgeList e;
  e.node_count = 4;
  e.edges = {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {2, 3}, {3, 2}};
  FrdcMatrix m = frdc_from_edges(e, true);
  CHECK(m.row_ptr() == std::vector<uint64_t>{0, 1});
  REQUIRE(m.tiles().size() == 1);
  CHECK(m.tiles()[0] == 0xCE73);
  check_matches(m, e, true);
}

TEST_CASE("duplicate edges collapse and stats count distinct bits") {
  EdgeList e;
  e.node_count = 6;
  e.edges = {{0, 3}, {0, 3}, {0, 3}, {5, 5}, {2, 4}};
  FrdcMatrix m = frdc_from_edges(e, false);
  FrdcStats st = frdc_stats(m);
  CHECK(st.nnz_bits == 3);
  CHECK(st.nnz_tiles == static_cast<uint64_t>(m.nnz_tiles()));
  CHECK(st.bytes == m.payload_bytes());
  CHECK(st.fill_ratio == doctest::Approx(3.0 / (16.0 * static_cast<double>(st.nnz_tiles))));
  check_matches(m, e, false);
}

TEST_CASE("out-of-range edges name the offender") {
  EdgeList e;
  e.node_count = 4;
  e.edges = {{0, 1}, {2, 9}};
  try {
    frdc_from_edges(e, false);
    FAIL("expected a throw");
  } catch (const std::exception& ex) {
    std::string msg = ex.what();
    CHECK(msg.find("(2, 9)") != std::string::npos);
    CHECK(msg.find("4 nodes") != std::string::npos);
  }
}

TEST_CASE("an empty graph with declared nodes is a valid empty matrix") {
  EdgeList e;
  e.node_count = 10;
  FrdcMatrix m = frdc_from_edges(e, false);
  CHECK(m.node_rows() == 10);
  CHECK(m.tiles().empty());
  CHECK(m.row_ptr() == std::vector<uint64_t>(4, 0));
  CHECK(frdc_stats(m).fill_ratio == 0.0);
  std::stringstream ss;
  write_frdc(ss, m);
  FrdcFile f = read_frdc(ss);
  CHECK(f.matrix == m);
}

TEST_CASE("stored tiles are never empty and columns strictly increase") {
  Rng rng(5);
  for (int it = 0; it < 50; ++it) {
    int64_t n = rng.range(1, 200);
    EdgeList e = random_edges(rng, n, rng.range(0, 4 * n), true);
    bool loops = it % 2;
    FrdcMatrix m = frdc_from_edges(e, loops);
    const auto& rp = m.row_ptr();
    int violations = 0;
    for (size_t r = 0; r + 1 < rp.size(); ++r) {
      for (uint64_t k = rp[r]; k < rp[r + 1]; ++k) {
        violations += m.tiles()[k] == 0;
        if (k > rp[r]) violations += m.col_ind()[k] <= m.col_ind()[k - 1];
      }
    }
    REQUIRE(violations == 0);
    check_matches(m, e, loops);
  }
}

TEST_CASE("constructor validation rejects malformed inputs") {
  // boundary tile with a bit outside the node range
  CHECK_THROWS(FrdcMatrix(5, 5, {0, 1, 2}, {0, 1}, {0x8000, 0x0800}));
  // all-zero tile
  CHECK_THROWS(FrdcMatrix(4, 4, {0, 1}, {0}, {0}));
  // row_ptr does not cover the payload
  CHECK_THROWS(FrdcMatrix(8, 8, {0, 2, 1}, {0, 1}, {0x8000, 0x8000}));
  // tile columns must strictly increase
  CHECK_THROWS(FrdcMatrix(4, 8, {0, 2}, {1, 1}, {0x8000, 0x4000}));
  // tile column past the last tile
  CHECK_THROWS(FrdcMatrix(4, 8, {0, 1}, {2}, {0x8000}));
  CHECK_NOTHROW(FrdcMatrix(4, 8, {0, 1}, {1}, {0x8000}));
}

TEST_CASE("a tile row of 10 tiles gathers into 2 tilesets with 6 padded slots") {
  EdgeList e;
  e.node_count = 40;
  for (int c = 0; c < 10; ++c) e.edges.emplace_back(0, 4 * c);
  FrdcMatrix m = frdc_from_edges(e, false);
  REQUIRE(m.tiles().size() == 10);

  CHECK(tileset_count(m, 0, 32) == 2);
  CHECK(tileset_count(m, 0, 64) == 1);
  CHECK(tileset_count(m, 1, 32) == 0);

  TileSet s0 = gather_tileset(m, 0, 0, 32);
  TileSet s1 = gather_tileset(m, 0, 1, 32);
  CHECK(s0.ts == 8);
  for (size_t i = 0; i < 8; ++i) CHECK(s0.cols[i] == static_cast<uint32_t>(i));
  CHECK(s1.cols[0] == 8);
  CHECK(s1.cols[1] == 9);
  int padded = 0;
  for (size_t i = 2; i < 8; ++i) padded += s1.cols[i] == TileSet::kPadCol;
  CHECK(padded == 6);
  // every tile holds only local bit (0,0), so assembled row 0 carries one set
  // bit per filled slot
  CHECK(s0.rows[0] == 0x88888888u);
  CHECK(s1.rows[0] == 0x88000000u);
  CHECK(s1.rows[1] == 0u);

  TileSet w = gather_tileset(m, 0, 0, 64);
  CHECK(w.ts == 16);
  CHECK(w.rows[0] == 0x8888888888000000ull);
  CHECK(w.cols[10] == TileSet::kPadCol);
}

TEST_CASE("gather reassembles exactly the stored tile bits") {
  Rng rng(7);
  for (int word_bits : {32, 64}) {
    for (int it = 0; it < 25; ++it) {
      int64_t n = rng.range(1, 120);
      EdgeList e = random_edges(rng, n, rng.range(0, 6 * n), true);
      FrdcMatrix m = frdc_from_edges(e, false);
      BitDenseMatrix dense = frdc_to_dense(m);
      const int ts = word_bits / 4;
      int64_t mismatches = 0;
      for (int64_t tr = 0; tr < m.tile_rows(); ++tr) {
        int64_t sets = tileset_count(m, tr, word_bits);
        for (int64_t s = 0; s < sets; ++s) {
          TileSet g = gather_tileset(m, tr, s, word_bits);
          REQUIRE(g.ts == ts);
          for (int slot = 0; slot < ts; ++slot) {
            uint32_t tc = g.cols[static_cast<size_t>(slot)];
            for (int r = 0; r < 4; ++r) {
              for (int c = 0; c < 4; ++c) {
                int bitpos = word_bits - 1 - (4 * slot + c);
                bool assembled = (g.rows[static_cast<size_t>(r)] >> bitpos) & 1;
                int64_t gi = tr * 4 + r;
                int64_t gj = tc == TileSet::kPadCol ? -1 : static_cast<int64_t>(tc) * 4 + c;
                bool want =
                    gj >= 0 && gi < dense.rows() && gj < dense.cols() && dense.bit(gi, gj);
                mismatches += assembled != want;
              }
            }
          }
        }
      }
      REQUIRE(mismatches == 0);
    }
  }
}

TEST_CASE("serialized bytes follow the declared little-endian layout") {
  EdgeList e;
  e.node_count = 8;
  e.edges = {{1, 2}, {0, 5}};
  FrdcMatrix m = frdc_from_edges(e, false);
  std::stringstream ss;
  write_frdc(ss, m, 32);
  std::string got = ss.str();

  std::string want;
  auto u16 = [&want](uint16_t v) {
    want.push_back(static_cast<char>(v & 0xFF));
    want.push_back(static_cast<char>((v >> 8) & 0xFF));
  };
  auto u32 = [&want](uint32_t v) {
    for (int i = 0; i < 4; ++i) want.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto u64 = [&want](uint64_t v) {
    for (int i = 0; i < 8; ++i) want.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  want += "FRDC";
  u32(1);             // version
  want.push_back(4);  // tile_dim
  want.push_back(32); // word_bits
  u16(0);             // reserved
  u64(8);             // node_rows
  u64(8);             // node_cols
  u64(2);             // nnz_tiles
  u64(0);             // row_ptr
  u64(2);
  u64(2);
  u32(0);             // col_ind
  u32(1);
  u16(0x0200);        // tiles
  u16(0x4000);
  CHECK(got.size() == want.size());
  CHECK(got == want);
}

TEST_CASE("reader rejects foreign and damaged headers") {
  EdgeList e;
  e.node_count = 4;
  e.edges = {{0, 1}};
  FrdcMatrix m = frdc_from_edges(e, false);
  std::stringstream ss;
  write_frdc(ss, m);
  const std::string bytes = ss.str();

  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::stringstream in(bad);
    CHECK_THROWS(read_frdc(in));
  }
  {
    std::string bad = bytes;
    bad[4] = 2;  // version
    std::stringstream in(bad);
    CHECK_THROWS(read_frdc(in));
  }
  {
    std::string bad = bytes;
    bad[8] = 3;  // tile_dim
    std::stringstream in(bad);
    CHECK_THROWS(read_frdc(in));
  }
  {
    std::stringstream in(bytes.substr(0, bytes.size() - 1));
    CHECK_THROWS(read_frdc(in));
  }
}

TEST_CASE("random edge lists round trip through file bytes") {
  Rng rng(41);
  for (int it = 0; it < 200; ++it) {
    int64_t n = rng.range(1, 2048);
    EdgeList e = random_edges(rng, n, rng.range(0, 3 * n), true);
    bool loops = it % 2;
    FrdcMatrix m = frdc_from_edges(e, loops);
    int word_bits = (it % 3) ? 32 : 64;
    std::stringstream ss;
    write_frdc(ss, m, word_bits);
    FrdcFile f = read_frdc(ss);
    REQUIRE(f.word_bits == word_bits);
    REQUIRE(f.matrix == m);
    check_matches(f.matrix, e, loops);
  }
}

TEST_CASE("a graph shaped like the usual citation benchmark keeps its bit count") {
  Rng rng(43);
  std::set<std::pair<int64_t, int64_t>> edges;
  while (edges.size() < 13264) {
    int64_t s = rng.index(2708), d = rng.index(2708);
    if (s != d) edges.emplace(s, d);
  }
  EdgeList e;
  e.node_count = 2708;
  e.edges.assign(edges.begin(), edges.end());
  FrdcMatrix raw = frdc_from_edges(e, false);
  CHECK(frdc_stats(raw).nnz_bits == 13264);
  FrdcMatrix loops = frdc_from_edges(e, true);
  CHECK(frdc_stats(loops).nnz_bits == 13264 + 2708);
}
