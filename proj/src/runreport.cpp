#include "bitgnn/runreport.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace bitgnn {

namespace {

size_t bits_bytes(int64_t rows, int64_t cols, int word_bits) {
  int64_t words = (cols + word_bits - 1) / word_bits;
  return static_cast<size_t>(rows * words * (word_bits / 8));
}

size_t dense_bytes(int64_t rows, int64_t cols) {
  return static_cast<size_t>(rows * cols) * sizeof(Real);
}

size_t value_bytes(Precision tag, int64_t rows, int64_t cols, int wb) {
  return tag == Precision::B ? bits_bytes(rows, cols, wb) : dense_bytes(rows, cols);
}

int64_t argmax_row(const Real* p, int64_t n) {
  int64_t best = 0;
  for (int64_t j = 1; j < n; ++j) {
    if (p[j] > p[best]) best = j;
  }
  return best;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

VerifyReport verify_model(const ModelSpec& m, const DenseMatrix& x0, const EdgeList& e,
                          const oracle::Config& cfg, int64_t corrupt_tile) {
  ModelSpec engine_model = m;
  if (!engine_model.graph) engine_model.graph = prepare_graph(e);
  if (corrupt_tile >= 0) {
    GraphBundle gb = *engine_model.graph;
    auto& tiles = gb.structure.mutable_tiles();
    if (!tiles.empty()) {
      size_t k = static_cast<size_t>(corrupt_tile) % tiles.size();
      tiles[k] = static_cast<uint16_t>(tiles[k] ^ 1u);
    }
    engine_model.graph = std::make_shared<GraphBundle>(std::move(gb));
  }

  RunTrace etrace;
  run_model(engine_model, MatOperand(x0), &etrace);

  oracle::GraphDense gd = oracle::graph_from_edges(e);
  oracle::Trace otrace;
  oracle::run_model(engine_model, oracle::Mat::from(x0), gd, cfg, &otrace);

  VerifyReport r;
  r.tolerance = cfg.tolerance;

  if (cfg.mode == oracle::Config::Mode::SimulatedBinarization) {
    if (etrace.points.size() != otrace.points.size()) {
      throw std::logic_error("verify: engine and reference disagree on trace shape (" +
                             std::to_string(etrace.points.size()) + " vs " +
                             std::to_string(otrace.points.size()) + " points)");
    }
    r.bin_points = static_cast<int64_t>(etrace.points.size());
    for (size_t p = 0; p < etrace.points.size(); ++p) {
      const auto& ep = etrace.points[p];
      const auto& op = otrace.points[p];
      if (ep.label != op.label || ep.bits.rows() != op.signs.rows ||
          ep.bits.cols() != op.signs.cols) {
        throw std::logic_error("verify: trace point " + std::to_string(p) +
                               " misaligned (" + ep.label + " vs " + op.label + ")");
      }
      for (int64_t i = 0; i < ep.bits.rows(); ++i) {
        for (int64_t j = 0; j < ep.bits.cols(); ++j) {
          ++r.bin_values;
          bool eb = ep.bits.bit(i, j);
          bool ob = op.signs.at(i, j) > 0;
          if (eb != ob) {
            if (r.bin_mismatches == 0) {
              r.first_mismatch_label = ep.label;
              r.first_mismatch_row = i;
              r.first_mismatch_col = j;
            }
            ++r.bin_mismatches;
          }
        }
      }
    }
  }

  const DenseMatrix& el = etrace.logits;
  const oracle::Mat& ol = otrace.logits;
  if (el.rows() != ol.rows || el.cols() != ol.cols) {
    throw std::logic_error("verify: logit shapes disagree");
  }
  for (int64_t i = 0; i < el.rows(); ++i) {
    for (int64_t j = 0; j < el.cols(); ++j) {
      double ev = static_cast<double>(el.at(i, j));
      double ov = ol.at(i, j);
      double rel = std::abs(ev - ov) / std::max(1.0, std::abs(ov));
      r.max_rel_logit_error = std::max(r.max_rel_logit_error, rel);
    }
  }
  int64_t agree = 0;
  for (int64_t i = 0; i < el.rows(); ++i) {
    // The engine's class counts as agreeing when the reference value there
    // equals the reference row maximum. Exact ties in the reference (several
    // classes sharing the max) make any of those classes a correct answer.
    int64_t pick = argmax_row(el.row(i), el.cols());
    double omax = ol.at(i, 0);
    for (int64_t j = 1; j < ol.cols; ++j) omax = std::max(omax, ol.at(i, j));
    if (ol.at(i, pick) == omax) ++agree;
  }
  r.argmax_agreement = el.rows() ? static_cast<double>(agree) / static_cast<double>(el.rows()) : 1.0;
  r.pass = r.bin_mismatches == 0 && r.argmax_agreement == 1.0 &&
           r.max_rel_logit_error <= r.tolerance;
  return r;
}

std::string VerifyReport::to_json() const {
  nlohmann::json j;
  j["max_rel_logit_error"] = max_rel_logit_error;
  j["tolerance"] = tolerance;
  j["bin_points"] = bin_points;
  j["bin_values"] = bin_values;
  j["bin_mismatches"] = bin_mismatches;
  if (bin_mismatches > 0) {
    j["first_mismatch"] = {{"label", first_mismatch_label},
                           {"row", first_mismatch_row},
                           {"col", first_mismatch_col}};
  }
  j["argmax_agreement"] = argmax_agreement;
  j["pass"] = pass;
  return j.dump(2);
}

MemoryReport model_memory(const ModelSpec& m, int64_t nodes, int64_t features) {
  MemoryReport r;
  const int wb = m.word_bits;
  if (m.graph) r.graph_bytes = m.graph->payload_bytes();

  r.input_bytes = value_bytes(m.input_precision, nodes, features, wb);
  r.input_bits_bytes = bits_bytes(nodes, features, wb);
  r.input_dense_bytes = dense_bytes(nodes, features);

  auto weight_cost = [&](const KernelVariant& mm, const DenseMatrix& w) {
    r.weight_dense_bytes += dense_bytes(w.rows(), w.cols());
    if (mm.in2 == Precision::B) {
      r.weight_bytes += bits_bytes(w.rows(), w.cols(), wb) + static_cast<size_t>(w.cols()) * sizeof(Real);
    } else {
      r.weight_bytes += dense_bytes(w.rows(), w.cols());
    }
  };

  int64_t rows = nodes, cols = features;
  Precision tag = m.input_precision;
  for (const auto& l : m.layers) {
    size_t in_b = value_bytes(tag, rows, cols, wb);
    size_t in_d = dense_bytes(rows, cols);
    size_t live_b = in_b, live_d = in_d;
    int64_t out_cols = cols;
    Precision out_tag = tag;
    switch (l.kind) {
      case LayerKind::GcnConv: {
        weight_cost(l.plan[0], *l.w1);
        out_cols = l.w1->cols();
        live_b += value_bytes(l.plan[0].out, rows, out_cols, wb) +
                  value_bytes(l.plan[1].out, rows, out_cols, wb);
        live_d += 2 * dense_bytes(rows, out_cols);
        out_tag = l.plan[1].out;
        break;
      }
      case LayerKind::SageConv:
      case LayerKind::GraphConv: {
        weight_cost(l.plan[0], *l.w1);
        weight_cost(l.plan[1], *l.w2);
        out_cols = l.w1->cols();
        live_b += value_bytes(l.plan[0].out, rows, out_cols, wb) +
                  value_bytes(l.plan[1].out, rows, out_cols, wb) +
                  value_bytes(l.plan[2].out, rows, out_cols, wb) +
                  value_bytes(l.plan[3].out, rows, out_cols, wb);
        live_d += 4 * dense_bytes(rows, out_cols);
        out_tag = l.plan[3].out;
        break;
      }
      case LayerKind::FullyConnected: {
        weight_cost(l.plan[0], *l.w1);
        out_cols = l.w1->cols();
        live_b += value_bytes(l.plan[0].out, rows, out_cols, wb);
        live_d += dense_bytes(rows, out_cols);
        out_tag = l.plan[0].out;
        break;
      }
      case LayerKind::Aggregate:
        live_b += value_bytes(l.plan[0].out, rows, cols, wb);
        live_d += dense_bytes(rows, cols);
        out_tag = l.plan[0].out;
        break;
      case LayerKind::Binarize:
        live_b += bits_bytes(rows, cols, wb);
        live_d += dense_bytes(rows, cols);
        out_tag = Precision::B;
        break;
      case LayerKind::Relu:
        out_tag = tag;  // in place
        break;
      case LayerKind::BatchNorm:
      case LayerKind::Softmax:
      case LayerKind::Scale:
        live_b += dense_bytes(rows, cols);
        live_d += dense_bytes(rows, cols);
        out_tag = Precision::F;
        break;
    }
    r.act_peak_bytes = std::max(r.act_peak_bytes, live_b);
    r.act_peak_dense_bytes = std::max(r.act_peak_dense_bytes, live_d);
    cols = out_cols;
    tag = out_tag;
  }
  r.peak_bytes = r.graph_bytes + r.weight_bytes + r.act_peak_bytes;
  return r;
}

BenchReport bench_model(const ModelSpec& m, const DenseMatrix& x0, int reps, int warmup) {
  if (reps < 1) throw std::invalid_argument("bench: reps must be at least 1");
  BenchReport r;
  r.reps = reps;

  for (int i = 0; i < warmup; ++i) run_model(m, MatOperand(x0));

  std::vector<double> totals;
  std::vector<std::vector<double>> per_kernel;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<KernelTiming> timings;
    auto t0 = std::chrono::steady_clock::now();
    run_model(m, MatOperand(x0), nullptr, &timings);
    auto t1 = std::chrono::steady_clock::now();
    totals.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    if (rep == 0) {
      for (const auto& t : timings) {
        r.kernel_labels.push_back(t.label);
        per_kernel.emplace_back();
      }
    }
    if (timings.size() != r.kernel_labels.size()) {
      throw std::logic_error("bench: kernel timing shape changed between reps");
    }
    for (size_t k = 0; k < timings.size(); ++k) {
      per_kernel[k].push_back(static_cast<double>(timings[k].ns) / 1e6);
    }
  }
  r.total_median_ms = median(totals);
  r.total_mean_ms = mean(totals);
  for (const auto& v : per_kernel) {
    r.kernel_median_ms.push_back(median(v));
    r.kernel_mean_ms.push_back(mean(v));
  }
  r.memory = model_memory(m, x0.rows(), x0.cols());
  return r;
}

std::string BenchReport::to_json() const {
  nlohmann::json j;
  j["reps"] = reps;
  j["total"] = {{"median_ms", total_median_ms}, {"mean_ms", total_mean_ms}};
  j["kernels"] = nlohmann::json::array();
  for (size_t k = 0; k < kernel_labels.size(); ++k) {
    j["kernels"].push_back({{"label", kernel_labels[k]},
                            {"median_ms", kernel_median_ms[k]},
                            {"mean_ms", kernel_mean_ms[k]}});
  }
  j["memory"] = {
      {"graph_bytes", memory.graph_bytes},
      {"weight_bytes", memory.weight_bytes},
      {"weight_dense_bytes", memory.weight_dense_bytes},
      {"activation_peak_bytes", memory.act_peak_bytes},
      {"activation_peak_dense_bytes", memory.act_peak_dense_bytes},
      {"input_bytes", memory.input_bytes},
      {"input_bits_bytes", memory.input_bits_bytes},
      {"input_dense_bytes", memory.input_dense_bytes},
      {"peak_bytes", memory.peak_bytes},
  };
  if (memory.input_bits_bytes > 0) {
    j["memory"]["feature_compression"] =
        static_cast<double>(memory.input_dense_bytes) / static_cast<double>(memory.input_bits_bytes);
  }
  if (!plan.empty()) j["plan"] = plan;
  if (!strategy.empty()) j["strategy"] = strategy;
  if (verified >= 0) j["verified"] = verified == 1;
  return j.dump(2);
}

}  // namespace bitgnn
