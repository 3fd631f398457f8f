#include "bitgnn/graphops.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace bitgnn {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// Bits set in each node row of the 0/1 structure.
std::vector<int64_t> row_popcounts(const FrdcMatrix& a) {
  std::vector<int64_t> deg(static_cast<size_t>(a.node_rows()), 0);
  const auto& rp = a.row_ptr();
  const auto& tiles = a.tiles();
  for (int64_t tr = 0; tr + 1 < static_cast<int64_t>(rp.size()); ++tr) {
    for (uint64_t k = rp[static_cast<size_t>(tr)]; k < rp[static_cast<size_t>(tr) + 1]; ++k) {
      uint16_t t = tiles[k];
      for (int r = 0; r < FrdcMatrix::kTileDim; ++r) {
        int64_t row = tr * FrdcMatrix::kTileDim + r;
        if (row >= a.node_rows()) break;
        deg[static_cast<size_t>(row)] += std::popcount(static_cast<unsigned>((t >> (12 - 4 * r)) & 0xF));
      }
    }
  }
  return deg;
}

int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void record_bits(const LayerHooks* hooks, const std::string& label, const BitDenseMatrix& b) {
  if (hooks && hooks->record_bits) hooks->record_bits(label, b);
}

// Runs one mm slot. B-tagged weights are binarized up front with their column
// scales attached, so BMM applies them whenever the output stays F.
MatOperand run_mm_slot(const KernelVariant& mm, const MatOperand& x, const DenseMatrix& w,
                       const LayerHooks* hooks, const std::string& label, int word_bits) {
  if (mm.op != KernelOp::BMM) fail(label + ": plan slot expects an MM variant");
  if (mm.in1 == Precision::F && mm.in2 == Precision::F && mm.out == Precision::F) {
    const auto* xd = std::get_if<DenseMatrix>(&x);
    if (!xd) fail(label + ": MM.FFF expects a full-precision input");
    int64_t t0 = hooks && hooks->record_ns ? now_ns() : 0;
    DenseMatrix r = dense_mm(*xd, w);
    if (hooks && hooks->record_ns) hooks->record_ns(label + "[MM.FFF]", now_ns() - t0);
    return r;
  }
  if (hooks && hooks->record_bits) {
    if (mm.in1 == Precision::F) {
      const auto* xd = std::get_if<DenseMatrix>(&x);
      if (xd) record_bits(hooks, label + ".bin_in", binarize(*xd, word_bits));
    }
    record_bits(hooks, label + ".bin_w", binarize(w, word_bits));
  }
  MatOperand wop;
  if (mm.in2 == Precision::B) {
    auto [bits, scale] = binarize_with_scale(w, Axis::Col, word_bits);
    wop = BitOperand{std::move(bits), std::move(scale)};
  } else {
    wop = w;
  }
  int64_t t0 = hooks && hooks->record_ns ? now_ns() : 0;
  MatOperand r = bmm(mm, x, wop, word_bits);
  if (hooks && hooks->record_ns) hooks->record_ns(label + "[" + mm.name() + "]", now_ns() - t0);
  if (mm.out == Precision::B) record_bits(hooks, label + ".out", std::get<BitOperand>(r).bits);
  return r;
}

MatOperand run_spmm_slot(const KernelVariant& spmm, const AdjacencyOperand& adj, const MatOperand& x,
                         std::optional<TrinaryStrategy> strategy, const LayerHooks* hooks,
                         const std::string& label, int word_bits) {
  int64_t t0 = hooks && hooks->record_ns ? now_ns() : 0;
  MatOperand r = bspmm(spmm, adj, x, strategy, word_bits);
  if (hooks && hooks->record_ns) hooks->record_ns(label + "[" + spmm.name() + "]", now_ns() - t0);
  if (spmm.out == Precision::B) record_bits(hooks, label + ".out", std::get<BitOperand>(r).bits);
  return r;
}

void relu_inplace(MatOperand& x) {
  if (auto* d = std::get_if<DenseMatrix>(&x)) {
    Real* p = d->row(0);
    size_t n = static_cast<size_t>(d->rows() * d->cols());
    for (size_t k = 0; k < n; ++k) p[k] = p[k] > 0 ? p[k] : Real(0);
  }
  // Binary operands are fixed points of ReLU up to the shared sign
  // convention, nothing to do.
}

const KernelVariant& slot(const LayerSpec& l, size_t i) { return l.plan[i]; }

bool is_dense_fff(const KernelVariant& v) {
  return v.op == KernelOp::BMM && v.in1 == Precision::F && v.in2 == Precision::F &&
         v.out == Precision::F;
}

void check_slot(std::vector<std::string>* errors, const std::string& where, const KernelVariant& v,
                KernelOp want) {
  if (v.op != want) {
    if (errors) errors->push_back(where + ": expected a " + std::string(want == KernelOp::BMM ? "MM" : want == KernelOp::BSpMM ? "SpMM" : want == KernelOp::ADD ? "ADD" : "CONCAT") + " variant, got " + v.name());
    return;
  }
  if (!v.valid() && !is_dense_fff(v)) {
    if (errors) errors->push_back(where + ": unsupported variant " + v.name());
  }
}

}  // namespace

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::GcnConv: return "gcn_conv";
    case LayerKind::SageConv: return "sage_conv";
    case LayerKind::GraphConv: return "graph_conv";
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::Aggregate: return "aggregate";
    case LayerKind::Relu: return "relu";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Binarize: return "binarize";
    case LayerKind::Scale: return "scale";
  }
  return "?";
}

NormalizedAdjacency normalize_adjacency(const EdgeList& e) {
  FrdcMatrix structure = frdc_from_edges(e, /*add_self_loops=*/true);
  std::vector<int64_t> deg = row_popcounts(structure);
  std::vector<Real> s(deg.size());
  for (size_t i = 0; i < deg.size(); ++i) {
    // Every row holds at least its self-loop bit.
    s[i] = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(deg[i])));
  }
  return {std::move(structure), ScaleVector(Axis::Row, std::move(s))};
}

std::shared_ptr<const GraphBundle> prepare_graph(const EdgeList& e) {
  NormalizedAdjacency na = normalize_adjacency(e);

  EdgeList loopless;
  loopless.node_count = e.node_count;
  loopless.edges.reserve(e.edges.size());
  for (const auto& [s, d] : e.edges) {
    if (s != d) loopless.edges.emplace_back(s, d);
  }

  auto g = std::make_shared<GraphBundle>();
  g->structure = std::move(na.structure);
  g->norm_row = na.scale;
  g->norm_col = ScaleVector(Axis::Col, na.scale.values());
  g->raw = frdc_from_edges(loopless, /*add_self_loops=*/false);
  g->neighbor_count = row_popcounts(g->raw);
  std::vector<Real> mean(g->neighbor_count.size()), ones(g->neighbor_count.size(), Real(1));
  for (size_t i = 0; i < mean.size(); ++i) {
    mean[i] = Real(1) / static_cast<Real>(std::max<int64_t>(1, g->neighbor_count[i]));
  }
  g->mean_row = ScaleVector(Axis::Row, std::move(mean));
  g->ones_row = ScaleVector(Axis::Row, ones);
  g->ones_col = ScaleVector(Axis::Col, std::move(ones));
  return g;
}

Precision layer_output_precision(const LayerSpec& l, Precision in, std::vector<std::string>* errors) {
  auto err = [&](const std::string& m) {
    if (errors) errors->push_back(std::string(layer_kind_name(l.kind)) + ": " + m);
  };
  auto need_plan = [&](size_t n) {
    if (l.plan.size() != n) {
      err("expected " + std::to_string(n) + " plan slots, got " + std::to_string(l.plan.size()));
      return false;
    }
    return true;
  };
  switch (l.kind) {
    case LayerKind::GcnConv: {
      if (!need_plan(2)) return in;
      check_slot(errors, "gcn_conv mm", slot(l, 0), KernelOp::BMM);
      check_slot(errors, "gcn_conv spmm", slot(l, 1), KernelOp::BSpMM);
      if (!l.w1) err("missing weights");
      if (slot(l, 0).in1 != in) err("mm input tag does not match incoming value");
      if (slot(l, 0).out != slot(l, 1).in1) err("mm output tag does not feed the spmm input");
      return slot(l, 1).out;
    }
    case LayerKind::SageConv:
    case LayerKind::GraphConv: {
      if (!need_plan(4)) return in;
      check_slot(errors, "mm_self", slot(l, 0), KernelOp::BMM);
      check_slot(errors, "mm_neigh", slot(l, 1), KernelOp::BMM);
      check_slot(errors, "spmm", slot(l, 2), KernelOp::BSpMM);
      check_slot(errors, "add", slot(l, 3), KernelOp::ADD);
      if (!l.w1 || !l.w2) err("missing weights");
      if (slot(l, 0).in1 != in || slot(l, 1).in1 != in) err("mm input tags do not match incoming value");
      if (slot(l, 1).out != slot(l, 2).in1) err("mm_neigh output tag does not feed the spmm input");
      if (slot(l, 3).in1 != slot(l, 0).out) err("add input 1 tag does not match mm_self output");
      if (slot(l, 3).in2 != slot(l, 2).out) err("add input 2 tag does not match spmm output");
      return slot(l, 3).out;
    }
    case LayerKind::FullyConnected: {
      if (!need_plan(1)) return in;
      check_slot(errors, "fc mm", slot(l, 0), KernelOp::BMM);
      if (!l.w1) err("missing weights");
      if (slot(l, 0).in1 != in) err("mm input tag does not match incoming value");
      return slot(l, 0).out;
    }
    case LayerKind::Aggregate: {
      if (!need_plan(1)) return in;
      check_slot(errors, "aggregate spmm", slot(l, 0), KernelOp::BSpMM);
      if (slot(l, 0).in1 != in) err("spmm input tag does not match incoming value");
      return slot(l, 0).out;
    }
    case LayerKind::Relu:
      need_plan(0);
      return in;
    case LayerKind::BatchNorm:
      need_plan(0);
      if (in != Precision::F) err("expects a full-precision input");
      if (!l.bn) err("missing parameters");
      return Precision::F;
    case LayerKind::Softmax:
      need_plan(0);
      if (in != Precision::F) err("expects a full-precision input");
      return Precision::F;
    case LayerKind::Binarize:
      need_plan(0);
      if (in != Precision::F) err("expects a full-precision input");
      return Precision::B;
    case LayerKind::Scale:
      need_plan(0);
      if (in != Precision::F) err("expects a full-precision input");
      if (!l.scale_row || !l.scale_col) err("missing factors");
      return Precision::F;
  }
  return in;
}

std::vector<std::string> validate_model(const ModelSpec& m) {
  std::vector<std::string> errors;
  if (!m.graph) {
    bool needs_graph = false;
    for (const auto& l : m.layers) {
      if (l.kind == LayerKind::GcnConv || l.kind == LayerKind::SageConv ||
          l.kind == LayerKind::GraphConv || l.kind == LayerKind::Aggregate) {
        needs_graph = true;
      }
    }
    if (needs_graph) errors.push_back("model uses graph layers but carries no graph");
  }
  if (m.layers.empty()) errors.push_back("model has no layers");
  Precision cur = m.input_precision;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    std::vector<std::string> local;
    cur = layer_output_precision(m.layers[i], cur, &local);
    for (auto& e : local) errors.push_back("layer " + std::to_string(i) + " " + e);
  }
  if (!m.layers.empty() && cur != Precision::F) {
    errors.push_back("model output must be full precision, got a binary tail");
  }
  return errors;
}

MatOperand gcn_layer(const MatOperand& x, const LayerSpec& l, const GraphBundle& g,
                     std::optional<TrinaryStrategy> strategy, const LayerHooks* hooks,
                     const std::string& prefix, int word_bits) {
  if (l.plan.size() != 2 || !l.w1) fail("gcn_conv: expected {mm, spmm} plan and weights");
  const KernelVariant& mm = slot(l, 0);
  const KernelVariant& sp = slot(l, 1);
  MatOperand h = run_mm_slot(mm, x, *l.w1, hooks, prefix + "mm", word_bits);
  AdjacencyOperand adj{&g.structure, nullptr, nullptr};
  if (sp.in2 == Precision::F) {
    adj.row_scale = &g.norm_row;
    adj.col_scale = &g.norm_col;
  }
  MatOperand out = run_spmm_slot(sp, adj, h, strategy, hooks, prefix + "spmm", word_bits);
  if (l.relu) relu_inplace(out);
  return out;
}

namespace {

MatOperand neighborhood_layer(const MatOperand& x, const LayerSpec& l, const GraphBundle& g,
                              bool mean, std::optional<TrinaryStrategy> strategy,
                              const LayerHooks* hooks, const std::string& prefix, int word_bits) {
  if (l.plan.size() != 4 || !l.w1 || !l.w2) {
    fail("expected {mm_self, mm_neigh, spmm, add} plan and two weight matrices");
  }
  MatOperand hs = run_mm_slot(slot(l, 0), x, *l.w1, hooks, prefix + "mm_self", word_bits);
  MatOperand hn = run_mm_slot(slot(l, 1), x, *l.w2, hooks, prefix + "mm_neigh", word_bits);
  const KernelVariant& sp = slot(l, 2);
  AdjacencyOperand adj{&g.raw, nullptr, nullptr};
  if (sp.in2 == Precision::F) {
    adj.row_scale = mean ? &g.mean_row : &g.ones_row;
    adj.col_scale = &g.ones_col;
  }
  MatOperand agg = run_spmm_slot(sp, adj, hn, strategy, hooks, prefix + "spmm", word_bits);
  if (mean && sp.in2 == Precision::B && sp.out == Precision::F) {
    // The binary-structure path aggregates a plain sum; divide it into the
    // mean here. When the output is binary the sign is unchanged by the
    // positive count, so nothing is needed there.
    auto& d = std::get<DenseMatrix>(agg);
    for (int64_t i = 0; i < d.rows(); ++i) {
      double inv = 1.0 / static_cast<double>(std::max<int64_t>(1, g.neighbor_count[static_cast<size_t>(i)]));
      Real* r = d.row(i);
      for (int64_t j = 0; j < d.cols(); ++j) r[j] = static_cast<Real>(r[j] * inv);
    }
  }
  MatOperand out = add(slot(l, 3), hs, agg);
  if (slot(l, 3).out == Precision::B) {
    record_bits(hooks, prefix + "add.out", std::get<BitOperand>(out).bits);
  }
  if (l.relu) relu_inplace(out);
  return out;
}

}  // namespace

MatOperand sage_layer(const MatOperand& x, const LayerSpec& l, const GraphBundle& g,
                      std::optional<TrinaryStrategy> strategy, const LayerHooks* hooks,
                      const std::string& prefix, int word_bits) {
  return neighborhood_layer(x, l, g, /*mean=*/true, strategy, hooks, prefix, word_bits);
}

MatOperand graphconv_layer(const MatOperand& x, const LayerSpec& l, const GraphBundle& g,
                           std::optional<TrinaryStrategy> strategy, const LayerHooks* hooks,
                           const std::string& prefix, int word_bits) {
  return neighborhood_layer(x, l, g, /*mean=*/false, strategy, hooks, prefix, word_bits);
}

DenseMatrix batchnorm_infer(const DenseMatrix& x, const BatchNormParams& p) {
  size_t c = static_cast<size_t>(x.cols());
  if (p.gamma.size() != c || p.beta.size() != c || p.mean.size() != c || p.sigma.size() != c) {
    fail("batchnorm: parameter lengths do not match " + std::to_string(x.cols()) + " columns");
  }
  DenseMatrix out(x.rows(), x.cols());
  for (int64_t i = 0; i < x.rows(); ++i) {
    const Real* xr = x.row(i);
    Real* yr = out.row(i);
    for (int64_t j = 0; j < x.cols(); ++j) {
      size_t js = static_cast<size_t>(j);
      double sigma = std::max(static_cast<double>(p.sigma[js]), 1e-12);
      yr[j] = static_cast<Real>(static_cast<double>(p.gamma[js]) *
                                    (static_cast<double>(xr[j]) - static_cast<double>(p.mean[js])) / sigma +
                                static_cast<double>(p.beta[js]));
    }
  }
  return out;
}

ModelSpec rewrite_eliminate_scl(const ModelSpec& m) {
  ModelSpec out = m;
  out.layers.clear();
  for (size_t i = 0; i < m.layers.size(); ++i) {
    if (m.layers[i].kind == LayerKind::Scale && i + 1 < m.layers.size() &&
        m.layers[i + 1].kind == LayerKind::Binarize) {
      continue;  // positive factors do not move any value across the sign threshold
    }
    out.layers.push_back(m.layers[i]);
  }
  return out;
}

namespace {

DenseMatrix softmax_rows(const DenseMatrix& x) {
  DenseMatrix out(x.rows(), x.cols());
  for (int64_t i = 0; i < x.rows(); ++i) {
    const Real* xr = x.row(i);
    Real* yr = out.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < x.cols(); ++j) mx = std::max(mx, static_cast<double>(xr[j]));
    double sum = 0.0;
    for (int64_t j = 0; j < x.cols(); ++j) sum += std::exp(static_cast<double>(xr[j]) - mx);
    for (int64_t j = 0; j < x.cols(); ++j) {
      yr[j] = static_cast<Real>(std::exp(static_cast<double>(xr[j]) - mx) / sum);
    }
  }
  return out;
}

}  // namespace

DenseMatrix run_model(const ModelSpec& m, const MatOperand& x0, RunTrace* trace,
                      std::vector<KernelTiming>* timings) {
  {
    std::vector<std::string> errors = validate_model(m);
    if (!errors.empty()) {
      std::ostringstream os;
      os << "invalid model:";
      for (const auto& e : errors) os << "\n  " << e;
      fail(os.str());
    }
  }
  if (operand_precision(x0) != m.input_precision) {
    fail("model input tag does not match the provided operand");
  }

  LayerHooks hooks;
  if (trace) {
    hooks.record_bits = [&](const std::string& label, const BitDenseMatrix& b) {
      trace->points.push_back({label, b});
    };
  }
  if (timings) {
    hooks.record_ns = [&](const std::string& label, int64_t ns) {
      timings->push_back({label, ns});
    };
  }
  const LayerHooks* hp = (trace || timings) ? &hooks : nullptr;

  MatOperand cur = x0;
  bool logits_set = false;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    std::string prefix = "layer" + std::to_string(i) + ".";
    try {
      switch (l.kind) {
        case LayerKind::GcnConv:
          cur = gcn_layer(cur, l, *m.graph, m.strategy, hp, prefix, m.word_bits);
          break;
        case LayerKind::SageConv:
          cur = sage_layer(cur, l, *m.graph, m.strategy, hp, prefix, m.word_bits);
          break;
        case LayerKind::GraphConv:
          cur = graphconv_layer(cur, l, *m.graph, m.strategy, hp, prefix, m.word_bits);
          break;
        case LayerKind::FullyConnected: {
          cur = run_mm_slot(slot(l, 0), cur, *l.w1, hp, prefix + "mm", m.word_bits);
          if (l.relu) relu_inplace(cur);
          break;
        }
        case LayerKind::Aggregate: {
          const KernelVariant& sp = slot(l, 0);
          AdjacencyOperand adj{&m.graph->structure, nullptr, nullptr};
          if (sp.in2 == Precision::F) {
            adj.row_scale = &m.graph->norm_row;
            adj.col_scale = &m.graph->norm_col;
          }
          cur = run_spmm_slot(sp, adj, cur, m.strategy, hp, prefix + "spmm", m.word_bits);
          break;
        }
        case LayerKind::Relu:
          relu_inplace(cur);
          break;
        case LayerKind::BatchNorm:
          cur = batchnorm_infer(std::get<DenseMatrix>(cur), *l.bn);
          break;
        case LayerKind::Softmax: {
          const auto& d = std::get<DenseMatrix>(cur);
          if (trace) {
            trace->logits = d;
            logits_set = true;
          }
          int64_t t0 = timings ? now_ns() : 0;
          cur = softmax_rows(d);
          if (timings) timings->push_back({prefix + "softmax", now_ns() - t0});
          break;
        }
        case LayerKind::Binarize: {
          BitDenseMatrix b = binarize(std::get<DenseMatrix>(cur), m.word_bits);
          record_bits(hp, prefix + "bin.out", b);
          cur = BitOperand{std::move(b), std::nullopt};
          break;
        }
        case LayerKind::Scale:
          cur = scl(std::get<DenseMatrix>(cur), *l.scale_row, *l.scale_col);
          break;
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("layer " + std::to_string(i) + " (" +
                               layer_kind_name(l.kind) + "): " + e.what());
    }
  }
  DenseMatrix out = std::get<DenseMatrix>(std::move(cur));
  if (trace && !logits_set) trace->logits = out;
  return out;
}

}  // namespace bitgnn
