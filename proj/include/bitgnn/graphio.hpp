// Readers for the graph formats the CLI accepts.
#pragma once

#include <iosfwd>
#include <string>

#include "bitgnn/bitsparse.hpp"

namespace bitgnn {

// Whitespace-separated "src dst" pairs, 0-based, one edge per line. Lines
// starting with '#' or '%' are comments. forced_nodes == -1 infers the node
// count from the largest index; otherwise it must cover every edge.
EdgeList read_edge_list(std::istream& in, const std::string& name, int64_t forced_nodes = -1,
                        bool undirected = false);

// MatrixMarket coordinate format; pattern, real and integer fields are
// accepted (weights are dropped), symmetric entries are mirrored. The matrix
// must be square.
EdgeList read_matrix_market(std::istream& in, const std::string& name, bool undirected = false);

// Sniffs the header and dispatches to one of the readers above; a tiled
// container (the convert output) is decoded back to its edges.
EdgeList load_graph(const std::string& path, int64_t forced_nodes = -1, bool undirected = false);

}  // namespace bitgnn
