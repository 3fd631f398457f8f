#include "bitgnn/graphio.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string_view>

namespace bitgnn {

namespace {

[[noreturn]] void fail_at(const std::string& name, int64_t line, const std::string& msg) {
  throw std::runtime_error(name + ":" + std::to_string(line) + ": " + msg);
}

bool blank_or_comment(const std::string& s) {
  size_t p = s.find_first_not_of(" \t\r");
  return p == std::string::npos || s[p] == '#' || s[p] == '%';
}

void finish(EdgeList& e, const std::string& name, int64_t forced_nodes, bool undirected) {
  int64_t max_idx = -1;
  for (const auto& [s, d] : e.edges) max_idx = std::max({max_idx, s, d});
  if (forced_nodes >= 0) {
    if (max_idx >= forced_nodes) {
      throw std::runtime_error(name + ": node index " + std::to_string(max_idx) +
                               " does not fit the requested " + std::to_string(forced_nodes) +
                               " nodes");
    }
    e.node_count = forced_nodes;
  } else {
    e.node_count = max_idx + 1;
  }
  if (undirected) {
    size_t n = e.edges.size();
    e.edges.reserve(2 * n);
    for (size_t k = 0; k < n; ++k) {
      auto [s, d] = e.edges[k];
      if (s != d) e.edges.emplace_back(d, s);
    }
  }
}

// Decodes a tiled container back to its edges so every subcommand takes the
// convert output as readily as the text formats.
EdgeList read_frdc_edges(const std::string& path, int64_t forced_nodes, bool undirected) {
  const FrdcMatrix m = read_frdc(path).matrix;
  EdgeList e;
  for (int64_t r = 0; r < m.tile_rows(); ++r) {
    for (uint64_t t = m.row_ptr()[static_cast<size_t>(r)];
         t < m.row_ptr()[static_cast<size_t>(r) + 1]; ++t) {
      const int64_t jb = 4 * static_cast<int64_t>(m.col_ind()[static_cast<size_t>(t)]);
      uint32_t tb = m.tiles()[static_cast<size_t>(t)];
      while (tb) {
        const int rc = 15 - std::countr_zero(tb);
        tb &= tb - 1;
        e.edges.emplace_back(4 * r + (rc >> 2), jb + (rc & 3));
      }
    }
  }
  // The header is authoritative for the node count; trailing isolated nodes
  // have no edges to infer it from.
  if (forced_nodes < 0) forced_nodes = std::max(m.node_rows(), m.node_cols());
  finish(e, path, forced_nodes, undirected);
  return e;
}

}  // namespace

EdgeList read_edge_list(std::istream& in, const std::string& name, int64_t forced_nodes,
                        bool undirected) {
  EdgeList e;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank_or_comment(line)) continue;
    std::istringstream ls(line);
    int64_t s, d;
    if (!(ls >> s >> d)) fail_at(name, lineno, "expected \"src dst\", got \"" + line + "\"");
    double w;
    if (ls >> w) {
      // optional weight column, kept but irrelevant to the 0/1 structure
      e.weights.resize(e.edges.size(), 1.0);
      e.weights.push_back(w);
    } else if (!ls.eof()) {
      std::string extra;
      ls.clear();
      ls >> extra;
      fail_at(name, lineno, "trailing token \"" + extra + "\"");
    }
    if (s < 0 || d < 0) fail_at(name, lineno, "negative node index");
    e.edges.emplace_back(s, d);
  }
  finish(e, name, forced_nodes, undirected);
  return e;
}

EdgeList read_matrix_market(std::istream& in, const std::string& name, bool undirected) {
  std::string line;
  int64_t lineno = 0;
  if (!std::getline(in, line)) fail_at(name, 1, "empty file");
  ++lineno;
  std::istringstream hs(line);
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket" || object != "matrix" || format != "coordinate") {
    fail_at(name, 1, "expected a MatrixMarket coordinate header");
  }
  if (field != "pattern" && field != "real" && field != "integer") {
    fail_at(name, 1, "unsupported field \"" + field + "\"");
  }
  if (symmetry != "general" && symmetry != "symmetric") {
    fail_at(name, 1, "unsupported symmetry \"" + symmetry + "\"");
  }
  bool has_value = field != "pattern";
  bool mirror = symmetry == "symmetric" || undirected;

  int64_t rows = 0, cols = 0, nnz = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank_or_comment(line)) continue;
    std::istringstream ls(line);
    if (!(ls >> rows >> cols >> nnz)) fail_at(name, lineno, "expected \"rows cols nnz\"");
    break;
  }
  if (rows <= 0 || cols <= 0) fail_at(name, lineno, "missing size line");
  if (rows != cols) fail_at(name, lineno, "adjacency must be square, got " +
                                              std::to_string(rows) + "x" + std::to_string(cols));

  EdgeList e;
  e.node_count = rows;
  e.edges.reserve(static_cast<size_t>(nnz));
  int64_t seen = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank_or_comment(line)) continue;
    std::istringstream ls(line);
    int64_t i, j;
    double v;
    if (!(ls >> i >> j)) fail_at(name, lineno, "expected \"row col\", got \"" + line + "\"");
    if (has_value && !(ls >> v)) fail_at(name, lineno, "missing value");
    if (i < 1 || i > rows || j < 1 || j > cols) fail_at(name, lineno, "index out of range");
    e.edges.emplace_back(i - 1, j - 1);
    if (mirror && i != j) e.edges.emplace_back(j - 1, i - 1);
    ++seen;
  }
  if (seen != nnz) {
    throw std::runtime_error(name + ": header promised " + std::to_string(nnz) +
                             " entries, file holds " + std::to_string(seen));
  }
  return e;
}

EdgeList load_graph(const std::string& path, int64_t forced_nodes, bool undirected) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error(path + ": cannot open");
  char magic[4] = {};
  probe.read(magic, 4);
  if (probe.gcount() == 4 && std::string_view(magic, 4) == "FRDC") {
    probe.close();
    return read_frdc_edges(path, forced_nodes, undirected);
  }
  probe.seekg(0);
  std::string first;
  std::getline(probe, first);
  probe.close();

  std::ifstream in(path);
  if (first.rfind("%%MatrixMarket", 0) == 0) {
    return read_matrix_market(in, path, undirected);
  }
  return read_edge_list(in, path, forced_nodes, undirected);
}

}  // namespace bitgnn
