// Command-line front end: convert graphs to the tiled binary format, verify
// models against the reference, benchmark, and auto-tune kernel variants.
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bitgnn/graphio.hpp"
#include "bitgnn/kernelbench.hpp"
#include "bitgnn/modelconfig.hpp"
#include "bitgnn/runreport.hpp"
#include "bitgnn/tune.hpp"

namespace {

using namespace bitgnn;

void apply_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text << "\n";
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error(out_path + ": cannot open for writing");
  out << text << "\n";
}

ModelConfig config_for(const std::string& path, uint64_t seed_override, bool has_seed) {
  ModelConfig cfg = path.empty() ? ModelConfig{} : load_model_config(path);
  if (has_seed) cfg.seed = seed_override;
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"binary graph neural network inference engine"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --threads ride after a subcommand

  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 keeps the default)");

  // convert
  auto* convert = app.add_subcommand("convert", "convert a graph file to the tiled format");
  std::string cv_in, cv_out;
  int64_t cv_nodes = -1;
  bool cv_undirected = false, cv_self_loops = false;
  int cv_word_bits = 32;
  convert->add_option("input", cv_in, "edge list or MatrixMarket file")->required();
  convert->add_option("-o,--out", cv_out, "output file")->required();
  convert->add_option("--nodes", cv_nodes, "node count when the file does not imply it");
  convert->add_flag("--undirected", cv_undirected, "mirror every edge");
  convert->add_flag("--self-loops", cv_self_loops, "add the diagonal");
  convert->add_option("--word-bits", cv_word_bits, "packing width")->check(CLI::IsMember({32, 64}));

  // verify
  auto* verify = app.add_subcommand("verify", "compare the engine against the reference");
  std::string vf_graph, vf_config;
  uint64_t vf_seed = 0;
  double vf_tolerance = 1e-6;
  bool vf_full = false;
  int64_t vf_corrupt = -1;
  verify->add_option("graph", vf_graph, "graph file")->required();
  verify->add_option("-c,--config", vf_config, "model config JSON");
  auto* vf_seed_opt = verify->add_option("--seed", vf_seed, "override the config seed");
  verify->add_option("--tolerance", vf_tolerance, "relative logit tolerance");
  verify->add_flag("--full-precision", vf_full,
                   "reference ignores binarization (for all-F plans)");
  verify->add_option("--corrupt-tile", vf_corrupt, "fault hook: flip a bit of stored tile k")
      ->group("");  // hidden
  std::string vf_out;
  verify->add_option("--out", vf_out, "write the report here instead of stdout");

  // bench
  auto* bench = app.add_subcommand("bench", "time a model or the kernel comparisons");
  std::string bc_graph, bc_config, bc_out;
  int bc_reps = 10, bc_warmup = 1;
  uint64_t bc_seed = 0;
  bool bc_kernels = false, bc_verify = false;
  int64_t bc_bmm_n = 2048, bc_sp_nodes = 65536, bc_sp_feat = 128;
  double bc_sp_density = 0.001;
  bench->add_option("graph", bc_graph, "graph file (model mode)");
  bench->add_option("-c,--config", bc_config, "model config JSON");
  bench->add_option("-r,--reps", bc_reps, "timed repetitions")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bc_warmup, "discarded warm-up runs");
  auto* bc_seed_opt = bench->add_option("--seed", bc_seed, "override the config seed");
  bench->add_flag("--verify", bc_verify, "embed a verification result in the report");
  bench->add_flag("--kernels", bc_kernels, "run the fixed kernel-vs-baseline comparisons");
  bench->add_option("--bmm-n", bc_bmm_n, "kernel mode: dense product dimension");
  bench->add_option("--spmm-nodes", bc_sp_nodes, "kernel mode: graph size");
  bench->add_option("--spmm-density", bc_sp_density, "kernel mode: edge density");
  bench->add_option("--spmm-features", bc_sp_feat, "kernel mode: feature columns");
  bench->add_option("--out", bc_out, "write the report here instead of stdout");

  // tune
  auto* tune = app.add_subcommand("tune", "search variant substitutions for the fastest plan");
  std::string tn_graph, tn_config, tn_out;
  int tn_reps = 3;
  double tn_tolerance = 1e-6;
  uint64_t tn_seed = 0;
  tune->add_option("graph", tn_graph, "graph file")->required();
  tune->add_option("-c,--config", tn_config, "model config JSON");
  tune->add_option("-r,--reps", tn_reps, "timed repetitions per candidate")
      ->check(CLI::PositiveNumber);
  tune->add_option("--tolerance", tn_tolerance, "relative logit tolerance");
  auto* tn_seed_opt = tune->add_option("--seed", tn_seed, "override the config seed");
  tune->add_option("--out", tn_out, "write the report here instead of stdout");

  CLI11_PARSE(app, argc, argv);
  apply_threads(threads);

  if (*convert) {
    EdgeList e = load_graph(cv_in, cv_nodes, cv_undirected);
    FrdcMatrix m = frdc_from_edges(e, cv_self_loops);
    write_frdc(cv_out, m, cv_word_bits);
    FrdcStats st = frdc_stats(m);
    nlohmann::json j;
    j["nodes"] = m.node_rows();
    j["nnz_tiles"] = st.nnz_tiles;
    j["nnz_bits"] = st.nnz_bits;
    j["bytes"] = st.bytes;
    j["fill_ratio"] = st.fill_ratio;
    j["word_bits"] = cv_word_bits;
    j["out"] = cv_out;
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  if (*verify) {
    ModelConfig cfg = config_for(vf_config, vf_seed, vf_seed_opt->count() > 0);
    EdgeList e = load_graph(vf_graph);
    auto graph = prepare_graph(e);
    BuiltModel bm = build_model(cfg, graph, e.node_count);
    oracle::Config ocfg;
    ocfg.mode = vf_full ? oracle::Config::Mode::FullPrecision
                        : oracle::Config::Mode::SimulatedBinarization;
    ocfg.tolerance = vf_tolerance;
    VerifyReport r = verify_model(bm.spec, bm.features, e, ocfg, vf_corrupt);
    emit(r.to_json(), vf_out);
    return r.pass ? 0 : 2;
  }

  if (*bench) {
    if (bc_kernels) {
      KernelBenchResult a = bench_bmm_bbf(bc_bmm_n);
      KernelBenchResult b = bench_bspmm_bbb(bc_sp_nodes, bc_sp_density, bc_sp_feat);
      nlohmann::json j;
      j["kernel_benchmarks"] = {nlohmann::json::parse(a.to_json()),
                                nlohmann::json::parse(b.to_json())};
      emit(j.dump(2), bc_out);
      return 0;
    }
    if (bc_graph.empty()) {
      std::cerr << "bench: a graph file is required unless --kernels is given\n";
      return 1;
    }
    ModelConfig cfg = config_for(bc_config, bc_seed, bc_seed_opt->count() > 0);
    EdgeList e = load_graph(bc_graph);
    auto graph = prepare_graph(e);
    BuiltModel bm = build_model(cfg, graph, e.node_count);
    BenchReport r = bench_model(bm.spec, bm.features, bc_reps, bc_warmup);
    r.plan = cfg.plan.empty() ? default_plan(cfg.model) : cfg.plan;
    if (cfg.strategy) r.strategy = trinary_strategy_name(*cfg.strategy);
    if (bc_verify) {
      oracle::Config ocfg;
      r.verified = verify_model(bm.spec, bm.features, e, ocfg).pass ? 1 : 0;
    }
    emit(r.to_json(), bc_out);
    return 0;
  }

  if (*tune) {
    ModelConfig cfg = config_for(tn_config, tn_seed, tn_seed_opt->count() > 0);
    EdgeList e = load_graph(tn_graph);
    TuneResult r = tune_model(cfg, e, tn_reps, tn_tolerance);
    emit(r.to_json(), tn_out);
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
