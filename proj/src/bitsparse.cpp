#include "bitgnn/bitsparse.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace bitgnn {

namespace {

constexpr int64_t kMaxTileCols = 0xFFFFFFFEll;  // last u32 value is the pad sentinel

// Payload mask of the bits a tile may use given how many of its 4 rows and
// columns fall inside the node range.
uint16_t allowed_tile_mask(int rmax, int cmax) {
  uint16_t m = 0;
  for (int r = 0; r < rmax; ++r)
    for (int c = 0; c < cmax; ++c) m |= static_cast<uint16_t>(1u << (15 - (4 * r + c)));
  return m;
}

void put_bytes(std::ostream& out, uint64_t v, int n) {
  char b[8];
  for (int i = 0; i < n; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, n);
}

uint64_t get_bytes(std::istream& in, int n) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), n)) throw std::runtime_error("FRDC: truncated file");
  uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

FrdcMatrix::FrdcMatrix(int64_t node_rows, int64_t node_cols, std::vector<uint64_t> row_ptr,
                       std::vector<uint32_t> col_ind, std::vector<uint16_t> tiles)
    : node_rows_(node_rows),
      node_cols_(node_cols),
      row_ptr_(std::move(row_ptr)),
      col_ind_(std::move(col_ind)),
      tiles_(std::move(tiles)) {
  if (node_rows_ < 0 || node_cols_ < 0) throw std::invalid_argument("FRDC: negative dimension");
  if (tile_cols() > kMaxTileCols) throw std::invalid_argument("FRDC: too many tile columns");
  if (static_cast<int64_t>(row_ptr_.size()) != tile_rows() + 1)
    throw std::invalid_argument("FRDC: row_ptr length mismatch");
  if (row_ptr_.front() != 0 || row_ptr_.back() != tiles_.size() ||
      col_ind_.size() != tiles_.size())
    throw std::invalid_argument("FRDC: offsets do not match payload");
  const int rrem = static_cast<int>(node_rows_ & 3);
  const int crem = static_cast<int>(node_cols_ & 3);
  for (int64_t r = 0; r < tile_rows(); ++r) {
    if (row_ptr_[r] > row_ptr_[r + 1]) throw std::invalid_argument("FRDC: row_ptr not monotone");
    const int rmax = (rrem && r == tile_rows() - 1) ? rrem : 4;
    for (uint64_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      if (k > row_ptr_[r] && col_ind_[k - 1] >= col_ind_[k])
        throw std::invalid_argument("FRDC: tile columns not strictly increasing");
      if (col_ind_[k] >= static_cast<uint64_t>(tile_cols()))
        throw std::invalid_argument("FRDC: tile column out of range");
      if (tiles_[k] == 0) throw std::invalid_argument("FRDC: stored all-zero tile");
      const int cmax = (crem && col_ind_[k] == static_cast<uint64_t>(tile_cols()) - 1) ? crem : 4;
      if (tiles_[k] & ~allowed_tile_mask(rmax, cmax))
        throw std::invalid_argument("FRDC: boundary tile has bits outside the node range");
    }
  }
}

FrdcMatrix frdc_from_edges(const EdgeList& e, bool add_self_loops) {
  if (e.node_count < 0) throw std::invalid_argument("frdc_from_edges: negative node count");
  const int64_t n = e.node_count;
  const int64_t tcols = (n + 3) / 4;
  if (tcols > kMaxTileCols) throw std::invalid_argument("frdc_from_edges: graph too large");

  std::vector<uint64_t> entries;
  entries.reserve(e.edges.size() + (add_self_loops ? static_cast<size_t>(n) : 0));
  for (size_t k = 0; k < e.edges.size(); ++k) {
    const auto [src, dst] = e.edges[k];
    if (src < 0 || src >= n || dst < 0 || dst >= n)
      throw std::invalid_argument("frdc_from_edges: edge " + std::to_string(k) + " = (" +
                                  std::to_string(src) + ", " + std::to_string(dst) +
                                  ") out of range for " + std::to_string(n) + " nodes");
    const uint64_t key = static_cast<uint64_t>(src / 4) * tcols + static_cast<uint64_t>(dst / 4);
    entries.push_back((key << 4) | static_cast<uint64_t>(4 * (src & 3) + (dst & 3)));
  }
  if (add_self_loops)
    for (int64_t i = 0; i < n; ++i) {
      const uint64_t key = static_cast<uint64_t>(i / 4) * tcols + static_cast<uint64_t>(i / 4);
      entries.push_back((key << 4) | static_cast<uint64_t>(4 * (i & 3) + (i & 3)));
    }
  std::sort(entries.begin(), entries.end());

  std::vector<uint64_t> row_ptr(static_cast<size_t>((n + 3) / 4) + 1, 0);
  std::vector<uint32_t> col_ind;
  std::vector<uint16_t> tiles;
  size_t k = 0;
  while (k < entries.size()) {
    const uint64_t key = entries[k] >> 4;
    uint16_t payload = 0;
    for (; k < entries.size() && (entries[k] >> 4) == key; ++k)
      payload |= static_cast<uint16_t>(1u << (15 - (entries[k] & 15)));
    col_ind.push_back(static_cast<uint32_t>(key % tcols));
    tiles.push_back(payload);
    row_ptr[key / tcols + 1] = col_ind.size();
  }
  for (size_t r = 1; r < row_ptr.size(); ++r) row_ptr[r] = std::max(row_ptr[r], row_ptr[r - 1]);

  return FrdcMatrix(n, n, std::move(row_ptr), std::move(col_ind), std::move(tiles));
}

BitDenseMatrix frdc_to_dense(const FrdcMatrix& m, int word_bits) {
  BitDenseMatrix out(m.node_rows(), m.node_cols(), BitSemantics::ZeroOne, word_bits);
  for (int64_t r = 0; r < m.tile_rows(); ++r) {
    for (uint64_t k = m.row_ptr()[r]; k < m.row_ptr()[r + 1]; ++k) {
      const uint16_t t = m.tiles()[k];
      const int64_t base_r = 4 * r;
      const int64_t base_c = 4 * static_cast<int64_t>(m.col_ind()[k]);
      for (int rl = 0; rl < 4; ++rl)
        for (int cl = 0; cl < 4; ++cl)
          if ((t >> (15 - (4 * rl + cl))) & 1) out.set_bit(base_r + rl, base_c + cl, true);
    }
  }
  return out;
}

int64_t tileset_count(const FrdcMatrix& m, int64_t tile_row, int word_bits) {
  const int ts = word_bits / 4;
  const int64_t nt =
      static_cast<int64_t>(m.row_ptr()[tile_row + 1] - m.row_ptr()[tile_row]);
  return (nt + ts - 1) / ts;
}

TileSet gather_tileset(const FrdcMatrix& m, int64_t tile_row, int64_t set_index, int word_bits) {
  if (word_bits != 32 && word_bits != 64)
    throw std::invalid_argument("gather_tileset: word_bits must be 32 or 64");
  if (tile_row < 0 || tile_row >= m.tile_rows())
    throw std::invalid_argument("gather_tileset: tile_row out of range");
  TileSet out;
  out.ts = word_bits / 4;
  if (set_index < 0 || set_index >= tileset_count(m, tile_row, word_bits))
    throw std::invalid_argument("gather_tileset: set_index out of range");
  out.cols.fill(TileSet::kPadCol);
  const uint64_t begin = m.row_ptr()[tile_row] + static_cast<uint64_t>(set_index) * out.ts;
  const uint64_t end = m.row_ptr()[tile_row + 1];
  for (int s = 0; s < out.ts; ++s) {
    const uint64_t k = begin + static_cast<uint64_t>(s);
    if (k >= end) break;
    out.cols[static_cast<size_t>(s)] = m.col_ind()[k];
    const uint16_t t = m.tiles()[k];
    const int shift = word_bits - 4 - 4 * s;
    for (int n = 0; n < 4; ++n) {
      const uint64_t nibble = (t >> (12 - 4 * n)) & 0xF;
      out.rows[static_cast<size_t>(n)] |= nibble << shift;
    }
  }
  return out;
}

FrdcStats frdc_stats(const FrdcMatrix& m) {
  FrdcStats s;
  s.nnz_tiles = static_cast<uint64_t>(m.nnz_tiles());
  for (uint16_t t : m.tiles()) s.nnz_bits += static_cast<uint64_t>(std::popcount(t));
  s.bytes = m.payload_bytes();
  s.fill_ratio = s.nnz_tiles ? static_cast<double>(s.nnz_bits) / (16.0 * s.nnz_tiles) : 0.0;
  return s;
}

void write_frdc(std::ostream& out, const FrdcMatrix& m, int word_bits) {
  if (word_bits != 32 && word_bits != 64)
    throw std::invalid_argument("write_frdc: word_bits must be 32 or 64");
  out.write("FRDC", 4);
  put_bytes(out, 1, 4);  // version
  put_bytes(out, 4, 1);  // tile_dim
  put_bytes(out, static_cast<uint64_t>(word_bits), 1);
  put_bytes(out, 0, 2);  // reserved
  put_bytes(out, static_cast<uint64_t>(m.node_rows()), 8);
  put_bytes(out, static_cast<uint64_t>(m.node_cols()), 8);
  put_bytes(out, static_cast<uint64_t>(m.nnz_tiles()), 8);
  for (uint64_t v : m.row_ptr()) put_bytes(out, v, 8);
  for (uint32_t v : m.col_ind()) put_bytes(out, v, 4);
  for (uint16_t v : m.tiles()) put_bytes(out, v, 2);
  if (!out) throw std::runtime_error("write_frdc: write failed");
}

void write_frdc(const std::string& path, const FrdcMatrix& m, int word_bits) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_frdc: cannot open " + path);
  write_frdc(f, m, word_bits);
}

FrdcFile read_frdc(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "FRDC")
    throw std::runtime_error("FRDC: bad magic");
  if (get_bytes(in, 4) != 1) throw std::runtime_error("FRDC: unsupported version");
  if (get_bytes(in, 1) != 4) throw std::runtime_error("FRDC: unsupported tile_dim");
  const int word_bits = static_cast<int>(get_bytes(in, 1));
  if (word_bits != 32 && word_bits != 64) throw std::runtime_error("FRDC: bad word_bits");
  if (get_bytes(in, 2) != 0) throw std::runtime_error("FRDC: nonzero reserved field");
  const auto node_rows = static_cast<int64_t>(get_bytes(in, 8));
  const auto node_cols = static_cast<int64_t>(get_bytes(in, 8));
  const auto nnz = get_bytes(in, 8);
  const int64_t tile_rows = (node_rows + 3) / 4;
  std::vector<uint64_t> row_ptr(static_cast<size_t>(tile_rows) + 1);
  for (auto& v : row_ptr) v = get_bytes(in, 8);
  std::vector<uint32_t> col_ind(nnz);
  for (auto& v : col_ind) v = static_cast<uint32_t>(get_bytes(in, 4));
  std::vector<uint16_t> tiles(nnz);
  for (auto& v : tiles) v = static_cast<uint16_t>(get_bytes(in, 2));
  return {FrdcMatrix(node_rows, node_cols, std::move(row_ptr), std::move(col_ind),
                     std::move(tiles)),
          word_bits};
}

FrdcFile read_frdc(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_frdc: cannot open " + path);
  return read_frdc(f);
}

}  // namespace bitgnn
