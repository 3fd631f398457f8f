#include "bitgnn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace bitgnn::oracle {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("oracle: " + msg); }

}  // namespace

Mat Mat::from(const DenseMatrix& m) {
  Mat out(m.rows(), m.cols());
  for (int64_t i = 0; i < m.rows(); ++i) {
    for (int64_t j = 0; j < m.cols(); ++j) out.at(i, j) = static_cast<double>(m.at(i, j));
  }
  return out;
}

Mat mm(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) fail("mm: inner dimensions differ");
  Mat out(a.rows, b.cols);
  for (int64_t i = 0; i < a.rows; ++i) {
    for (int64_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (int64_t k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  }
  return out;
}

Mat mm_alt(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) fail("mm_alt: inner dimensions differ");
  Mat out(a.rows, b.cols);
  for (int64_t k = 0; k < a.cols; ++k) {
    for (int64_t i = 0; i < a.rows; ++i) {
      double aik = a.at(i, k);
      for (int64_t j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  }
  return out;
}

Mat aggregate(const Mat& a, const std::vector<double>* srow, const std::vector<double>* scol,
              const Mat& x) {
  if (a.cols != x.rows) fail("aggregate: structure and features disagree");
  Mat out(a.rows, x.cols);
  std::vector<double> acc(static_cast<size_t>(x.cols));
  for (int64_t i = 0; i < a.rows; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int64_t j = 0; j < a.cols; ++j) {
      if (a.at(i, j) == 0.0) continue;
      double wj = scol ? (*scol)[static_cast<size_t>(j)] : 1.0;
      for (int64_t k = 0; k < x.cols; ++k) acc[static_cast<size_t>(k)] += wj * x.at(j, k);
    }
    double si = srow ? (*srow)[static_cast<size_t>(i)] : 1.0;
    for (int64_t k = 0; k < x.cols; ++k) out.at(i, k) = si * acc[static_cast<size_t>(k)];
  }
  return out;
}

Mat spmm(const Mat& a, const Mat& x) { return aggregate(a, nullptr, nullptr, x); }

Mat sign_of(const Mat& m) {
  Mat out(m.rows, m.cols);
  for (size_t k = 0; k < m.v.size(); ++k) out.v[k] = sign(m.v[k]);
  return out;
}

std::vector<double> l1_scales(const Mat& m, Axis axis) {
  if (axis == Axis::Row) {
    std::vector<double> s(static_cast<size_t>(m.rows));
    for (int64_t i = 0; i < m.rows; ++i) {
      double t = 0.0;
      for (int64_t j = 0; j < m.cols; ++j) t += std::abs(m.at(i, j));
      s[static_cast<size_t>(i)] = std::max(t / std::max<int64_t>(1, m.cols), 1e-12);
    }
    return s;
  }
  std::vector<double> s(static_cast<size_t>(m.cols));
  for (int64_t j = 0; j < m.cols; ++j) {
    double t = 0.0;
    for (int64_t i = 0; i < m.rows; ++i) t += std::abs(m.at(i, j));
    s[static_cast<size_t>(j)] = std::max(t / std::max<int64_t>(1, m.rows), 1e-12);
  }
  return s;
}

GraphDense graph_from_edges(const EdgeList& e) {
  GraphDense g;
  g.n = e.node_count;
  g.a_raw = Mat(g.n, g.n);
  g.a_loops = Mat(g.n, g.n);
  for (const auto& [s, d] : e.edges) {
    if (s < 0 || s >= g.n || d < 0 || d >= g.n) {
      std::ostringstream os;
      os << "edge (" << s << ", " << d << ") out of range for " << g.n << " nodes";
      fail(os.str());
    }
    if (s != d) g.a_raw.at(s, d) = 1.0;
    g.a_loops.at(s, d) = 1.0;
  }
  for (int64_t i = 0; i < g.n; ++i) g.a_loops.at(i, i) = 1.0;
  g.norm.resize(static_cast<size_t>(g.n));
  g.neighbor_count.resize(static_cast<size_t>(g.n));
  for (int64_t i = 0; i < g.n; ++i) {
    double dl = 0.0, dr = 0.0;
    for (int64_t j = 0; j < g.n; ++j) {
      dl += g.a_loops.at(i, j);
      dr += g.a_raw.at(i, j);
    }
    g.norm[static_cast<size_t>(i)] = 1.0 / std::sqrt(dl);
    g.neighbor_count[static_cast<size_t>(i)] = dr;
  }
  return g;
}

namespace {

struct Walker {
  const GraphDense& g;
  Config cfg;
  Trace* trace = nullptr;

  bool simulated() const { return cfg.mode == Config::Mode::SimulatedBinarization; }

  void record(const std::string& label, const Mat& signs) {
    if (trace) trace->points.push_back({label, signs});
  }

  // One mm slot. In simulated mode both operands turn into their signs; the
  // L1 scales re-enter only when the output stays full precision, mirroring
  // how the kernels treat scale state.
  Mat mm_slot(const KernelVariant& kv, const Mat& x, Precision cur, const DenseMatrix& w,
              const std::string& label) {
    Mat wd = Mat::from(w);
    if (!simulated() ||
        (kv.in1 == Precision::F && kv.in2 == Precision::F && kv.out == Precision::F)) {
      return mm(x, wd);
    }
    Mat xb = cur == Precision::F ? sign_of(x) : x;
    Mat wb = sign_of(wd);
    if (cur == Precision::F) record(label + ".bin_in", xb);
    record(label + ".bin_w", wb);
    Mat dots = mm(xb, wb);
    if (kv.out == Precision::B) {
      Mat s = sign_of(dots);
      record(label + ".out", s);
      return s;
    }
    std::vector<double> beta = l1_scales(wd, Axis::Col);
    std::vector<double> alpha;
    if (kv.in1 == Precision::F) alpha = l1_scales(x, Axis::Row);
    for (int64_t i = 0; i < dots.rows; ++i) {
      double a = alpha.empty() ? 1.0 : alpha[static_cast<size_t>(i)];
      for (int64_t j = 0; j < dots.cols; ++j) {
        dots.at(i, j) *= a * beta[static_cast<size_t>(j)];
      }
    }
    return dots;
  }

  Mat spmm_slot(const KernelVariant& kv, const Mat& x, const Mat& structure,
                const std::vector<double>* srow, const std::vector<double>* scol,
                const std::string& label) {
    const std::vector<double>* r = srow;
    const std::vector<double>* c = scol;
    if (simulated() && kv.in2 == Precision::B) {
      r = nullptr;
      c = nullptr;
    }
    Mat out = aggregate(structure, r, c, x);
    if (simulated() && kv.out == Precision::B) {
      out = sign_of(out);
      record(label + ".out", out);
    }
    return out;
  }

  void relu(Mat& x, Precision cur) {
    if (cur == Precision::B && simulated()) return;
    for (auto& v : x.v) v = v > 0 ? v : 0.0;
  }
};

}  // namespace

Mat run_model(const ModelSpec& m, const Mat& x0, const GraphDense& g, const Config& cfg,
              Trace* trace) {
  {
    std::vector<std::string> errors = validate_model(m);
    if (!errors.empty()) fail("invalid model: " + errors.front());
  }
  Walker w{g, cfg, trace};
  Mat cur = x0;
  Precision tag = m.input_precision;
  bool logits_set = false;

  for (size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    std::string prefix = "layer" + std::to_string(i) + ".";
    switch (l.kind) {
      case LayerKind::GcnConv: {
        const KernelVariant& mmv = l.plan[0];
        const KernelVariant& spv = l.plan[1];
        Mat h = w.mm_slot(mmv, cur, tag, *l.w1, prefix + "mm");
        cur = w.spmm_slot(spv, h, g.a_loops, &g.norm, &g.norm, prefix + "spmm");
        tag = spv.out;
        if (l.relu) w.relu(cur, tag);
        break;
      }
      case LayerKind::SageConv:
      case LayerKind::GraphConv: {
        bool mean = l.kind == LayerKind::SageConv;
        const KernelVariant& spv = l.plan[2];
        Mat hs = w.mm_slot(l.plan[0], cur, tag, *l.w1, prefix + "mm_self");
        Mat hn = w.mm_slot(l.plan[1], cur, tag, *l.w2, prefix + "mm_neigh");
        std::vector<double> mean_row(g.neighbor_count.size());
        for (size_t k = 0; k < mean_row.size(); ++k) {
          mean_row[k] = 1.0 / std::max(1.0, g.neighbor_count[k]);
        }
        const std::vector<double>* srow = mean ? &mean_row : nullptr;
        Mat agg = w.spmm_slot(spv, hn, g.a_raw, srow, nullptr, prefix + "spmm");
        bool spmm_binary = w.simulated() && spv.out == Precision::B;
        if (mean && !spmm_binary && w.simulated() && spv.in2 == Precision::B) {
          // The structure-only path sums; fold the mean in afterwards like
          // the engine does.
          for (int64_t r = 0; r < agg.rows; ++r) {
            double inv = 1.0 / std::max(1.0, g.neighbor_count[static_cast<size_t>(r)]);
            for (int64_t c = 0; c < agg.cols; ++c) agg.at(r, c) *= inv;
          }
        }
        const KernelVariant& av = l.plan[3];
        if (hs.rows != agg.rows || hs.cols != agg.cols) fail("add operand shapes differ");
        Mat sum(hs.rows, hs.cols);
        for (size_t k = 0; k < sum.v.size(); ++k) sum.v[k] = hs.v[k] + agg.v[k];
        if (w.simulated() && av.out == Precision::B) {
          sum = sign_of(sum);
          w.record(prefix + "add.out", sum);
        }
        cur = std::move(sum);
        tag = av.out;
        if (l.relu) w.relu(cur, tag);
        break;
      }
      case LayerKind::FullyConnected: {
        cur = w.mm_slot(l.plan[0], cur, tag, *l.w1, prefix + "mm");
        tag = l.plan[0].out;
        if (l.relu) w.relu(cur, tag);
        break;
      }
      case LayerKind::Aggregate: {
        const KernelVariant& spv = l.plan[0];
        cur = w.spmm_slot(spv, cur, g.a_loops, &g.norm, &g.norm, prefix + "spmm");
        tag = spv.out;
        break;
      }
      case LayerKind::Relu:
        w.relu(cur, tag);
        break;
      case LayerKind::BatchNorm: {
        const auto& p = *l.bn;
        if (static_cast<int64_t>(p.gamma.size()) != cur.cols) fail("batchnorm width mismatch");
        for (int64_t r = 0; r < cur.rows; ++r) {
          for (int64_t c = 0; c < cur.cols; ++c) {
            size_t cs = static_cast<size_t>(c);
            double sigma = std::max(static_cast<double>(p.sigma[cs]), 1e-12);
            cur.at(r, c) = static_cast<double>(p.gamma[cs]) * (cur.at(r, c) - static_cast<double>(p.mean[cs])) / sigma +
                           static_cast<double>(p.beta[cs]);
          }
        }
        break;
      }
      case LayerKind::Softmax: {
        if (trace) {
          trace->logits = cur;
          logits_set = true;
        }
        for (int64_t r = 0; r < cur.rows; ++r) {
          double mx = -std::numeric_limits<double>::infinity();
          for (int64_t c = 0; c < cur.cols; ++c) mx = std::max(mx, cur.at(r, c));
          double sum = 0.0;
          for (int64_t c = 0; c < cur.cols; ++c) sum += std::exp(cur.at(r, c) - mx);
          for (int64_t c = 0; c < cur.cols; ++c) cur.at(r, c) = std::exp(cur.at(r, c) - mx) / sum;
        }
        break;
      }
      case LayerKind::Binarize: {
        if (w.simulated()) {
          cur = sign_of(cur);
          w.record(prefix + "bin.out", cur);
        }
        tag = Precision::B;
        break;
      }
      case LayerKind::Scale: {
        const ScaleVector& sr = *l.scale_row;
        const ScaleVector& sc = *l.scale_col;
        if (sr.size() != cur.rows || sc.size() != cur.cols) fail("scale length mismatch");
        for (int64_t r = 0; r < cur.rows; ++r) {
          for (int64_t c = 0; c < cur.cols; ++c) {
            cur.at(r, c) *= static_cast<double>(sr[r]) * static_cast<double>(sc[c]);
          }
        }
        break;
      }
    }
  }
  if (trace && !logits_set) trace->logits = cur;
  return cur;
}

}  // namespace bitgnn::oracle
