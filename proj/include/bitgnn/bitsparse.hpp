// Block-compressed sparse bit matrices over 4x4 tiles, plus the on-disk
// container format.
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "bitgnn/bitdense.hpp"

namespace bitgnn {

struct EdgeList {
  int64_t node_count = 0;
  std::vector<std::pair<int64_t, int64_t>> edges;  // (src, dst), directed
  std::vector<double> weights;                     // optional, ignored for structure
};

// Sparse 0/1 matrix stored as CSR over 4x4 bit tiles. A tile's bit (r, c)
// sits at payload bit 15 - (4r + c), so local row 0 is the top nibble.
// Stored tiles are never all-zero and tile columns are strictly increasing
// within a tile row.
class FrdcMatrix {
public:
  static constexpr int kTileDim = 4;

  FrdcMatrix() : row_ptr_(1, 0) {}
  FrdcMatrix(int64_t node_rows, int64_t node_cols, std::vector<uint64_t> row_ptr,
             std::vector<uint32_t> col_ind, std::vector<uint16_t> tiles);

  int64_t node_rows() const { return node_rows_; }
  int64_t node_cols() const { return node_cols_; }
  int64_t tile_rows() const { return (node_rows_ + kTileDim - 1) / kTileDim; }
  int64_t tile_cols() const { return (node_cols_ + kTileDim - 1) / kTileDim; }
  int64_t nnz_tiles() const { return static_cast<int64_t>(tiles_.size()); }

  const std::vector<uint64_t>& row_ptr() const { return row_ptr_; }
  const std::vector<uint32_t>& col_ind() const { return col_ind_; }
  const std::vector<uint16_t>& tiles() const { return tiles_; }
  std::vector<uint16_t>& mutable_tiles() { return tiles_; }  // test hooks only

  // Payload size at the serialized widths: u64 row_ptr, u32 col_ind, u16 tiles.
  size_t payload_bytes() const {
    return row_ptr_.size() * 8 + col_ind_.size() * 4 + tiles_.size() * 2;
  }

  bool operator==(const FrdcMatrix& o) const {
    return node_rows_ == o.node_rows_ && node_cols_ == o.node_cols_ && row_ptr_ == o.row_ptr_ &&
           col_ind_ == o.col_ind_ && tiles_ == o.tiles_;
  }

private:
  int64_t node_rows_ = 0, node_cols_ = 0;
  std::vector<uint64_t> row_ptr_;  // length tile_rows() + 1
  std::vector<uint32_t> col_ind_;
  std::vector<uint16_t> tiles_;
};

// One gather unit: ts = word_bits/4 consecutive tiles of a tile row packed
// into four words, tile slot s occupying bits [word_bits-1-4s, word_bits-4-4s]
// of each word. Slots past the end of the tile row are zero with column
// index kPadCol.
struct TileSet {
  static constexpr uint32_t kPadCol = 0xFFFFFFFFu;
  int ts = 8;
  std::array<uint64_t, 4> rows{};   // assembled words, one per node row of the tile
  std::array<uint32_t, 16> cols{};  // tile column per slot, kPadCol when padded
};

// Duplicate edges collapse; out-of-range endpoints are an error.
FrdcMatrix frdc_from_edges(const EdgeList& e, bool add_self_loops);

BitDenseMatrix frdc_to_dense(const FrdcMatrix& m, int word_bits = 32);

TileSet gather_tileset(const FrdcMatrix& m, int64_t tile_row, int64_t set_index,
                       int word_bits = 32);

int64_t tileset_count(const FrdcMatrix& m, int64_t tile_row, int word_bits = 32);

struct FrdcStats {
  uint64_t nnz_tiles = 0;
  uint64_t nnz_bits = 0;
  uint64_t bytes = 0;
  double fill_ratio = 0;  // nnz_bits / (16 * nnz_tiles), 0 when empty
};

FrdcStats frdc_stats(const FrdcMatrix& m);

// Serialized container, little-endian:
//   "FRDC" | u32 version=1 | u8 tile_dim=4 | u8 word_bits | u16 reserved=0 |
//   u64 node_rows | u64 node_cols | u64 nnz_tiles |
//   u64 row_ptr[tile_rows+1] | u32 col_ind[nnz] | u16 tiles[nnz]
struct FrdcFile {
  FrdcMatrix matrix;
  int word_bits = 32;
};

void write_frdc(std::ostream& out, const FrdcMatrix& m, int word_bits = 32);
void write_frdc(const std::string& path, const FrdcMatrix& m, int word_bits = 32);
FrdcFile read_frdc(std::istream& in);
FrdcFile read_frdc(const std::string& path);

}  // namespace bitgnn
