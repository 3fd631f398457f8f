#include "bitgnn/tune.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

#include "bitgnn/runreport.hpp"

namespace bitgnn {

namespace {

constexpr Precision kTags[2] = {Precision::F, Precision::B};

std::string join_chain(const std::vector<KernelVariant>& chain) {
  std::string s;
  for (size_t i = 0; i < chain.size(); ++i) {
    if (i) s += '+';
    s += chain[i].name();
  }
  return s;
}

// Per-layer chain choices and the output tag each choice produces.
struct ChainChoice {
  std::vector<KernelVariant> chain;
  Precision out;
};

std::vector<ChainChoice> layer_choices(LayerKind kind, Precision in) {
  std::vector<ChainChoice> out;
  switch (kind) {
    case LayerKind::GcnConv: {
      for (const auto& mm : legal_variants(KernelOp::BMM, in, std::nullopt, std::nullopt)) {
        for (const auto& sp : legal_variants(KernelOp::BSpMM, mm.out, std::nullopt, std::nullopt)) {
          out.push_back({{mm, sp}, sp.out});
        }
      }
      break;
    }
    case LayerKind::SageConv:
    case LayerKind::GraphConv: {
      for (const auto& ms : legal_variants(KernelOp::BMM, in, std::nullopt, std::nullopt)) {
        for (const auto& mn : legal_variants(KernelOp::BMM, in, std::nullopt, std::nullopt)) {
          for (const auto& sp :
               legal_variants(KernelOp::BSpMM, mn.out, std::nullopt, std::nullopt)) {
            for (const auto& ad : legal_variants(KernelOp::ADD, ms.out, sp.out, std::nullopt)) {
              out.push_back({{ms, mn, sp, ad}, ad.out});
            }
          }
        }
      }
      break;
    }
    case LayerKind::FullyConnected: {
      for (const auto& mm : legal_variants(KernelOp::BMM, in, std::nullopt, std::nullopt)) {
        out.push_back({{mm}, mm.out});
      }
      break;
    }
    case LayerKind::Aggregate: {
      for (const auto& sp : legal_variants(KernelOp::BSpMM, in, std::nullopt, std::nullopt)) {
        out.push_back({{sp}, sp.out});
      }
      break;
    }
    default:
      throw std::invalid_argument("tune: layer kind carries no kernel slots");
  }
  return out;
}

void enumerate_rec(const std::vector<LayerKind>& kinds, size_t at, Precision in,
                   std::vector<std::string>& acc, std::vector<std::vector<std::string>>& out) {
  if (at == kinds.size()) {
    if (in == Precision::F) out.push_back(acc);
    return;
  }
  for (const auto& c : layer_choices(kinds[at], in)) {
    acc.push_back(join_chain(c.chain));
    enumerate_rec(kinds, at + 1, c.out, acc, out);
    acc.pop_back();
  }
}

std::vector<LayerKind> skeleton_of(const ModelConfig& cfg, size_t layer_count) {
  std::vector<LayerKind> kinds;
  if (cfg.model == "gcn") {
    kinds.assign(layer_count, LayerKind::GcnConv);
  } else if (cfg.model == "sage") {
    kinds.assign(layer_count, LayerKind::SageConv);
  } else {
    kinds.assign(layer_count - 1, LayerKind::GraphConv);
    kinds.push_back(LayerKind::FullyConnected);
  }
  return kinds;
}

}  // namespace

std::vector<KernelVariant> legal_variants(KernelOp op, std::optional<Precision> in1,
                                          std::optional<Precision> in2,
                                          std::optional<Precision> out) {
  std::vector<KernelVariant> r;
  for (Precision a : kTags) {
    if (in1 && a != *in1) continue;
    for (Precision b : kTags) {
      if (in2 && b != *in2) continue;
      for (Precision c : kTags) {
        if (out && c != *out) continue;
        KernelVariant v{op, a, b, c};
        if (v.valid()) r.push_back(v);
      }
    }
  }
  return r;
}

std::vector<std::vector<std::string>> enumerate_plans(const std::vector<LayerKind>& kinds,
                                                      Precision in) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> acc;
  enumerate_rec(kinds, 0, in, acc, out);
  return out;
}

TuneResult tune_model(const ModelConfig& cfg, const EdgeList& e, int reps, double tolerance) {
  size_t layer_count = (cfg.plan.empty() ? default_plan(cfg.model) : cfg.plan).size();
  std::vector<std::vector<std::string>> chains;
  if (!cfg.plan.empty()) {
    chains.push_back(cfg.plan);
  } else {
    chains = enumerate_plans(skeleton_of(cfg, layer_count), Precision::F);
  }
  std::vector<TrinaryStrategy> strategies;
  if (cfg.strategy) {
    strategies.push_back(*cfg.strategy);
  } else {
    strategies = {TrinaryStrategy::IfElse, TrinaryStrategy::AndAndNot,
                  TrinaryStrategy::TwoAndMinusPopc};
  }

  auto graph = prepare_graph(e);
  oracle::Config ocfg;
  ocfg.mode = oracle::Config::Mode::SimulatedBinarization;
  ocfg.tolerance = tolerance;

  TuneResult result;
  bool have_best = false;
  for (const auto& chain : chains) {
    for (TrinaryStrategy st : strategies) {
      ModelConfig c = cfg;
      c.plan = chain;
      c.strategy = st;
      BuiltModel bm = build_model(c, graph, e.node_count);

      TuneCandidate cand;
      cand.plan = chain;
      cand.strategy = st;
      VerifyReport vr = verify_model(bm.spec, bm.features, e, ocfg);
      cand.verified = vr.pass;
      cand.max_rel_logit_error = vr.max_rel_logit_error;
      cand.bin_mismatches = vr.bin_mismatches;
      if (cand.verified) {
        cand.median_ms = bench_model(bm.spec, bm.features, reps, 1).total_median_ms;
        if (!have_best || cand.median_ms < result.best.median_ms) {
          result.best = cand;
          have_best = true;
        }
      }
      result.evaluated.push_back(std::move(cand));
    }
  }
  result.candidates = result.evaluated.size();
  if (!have_best) throw std::runtime_error("tune: no candidate passed verification");
  return result;
}

std::string TuneResult::to_json() const {
  auto cand_json = [](const TuneCandidate& c) {
    nlohmann::json j;
    j["plan"] = c.plan;
    j["strategy"] = trinary_strategy_name(c.strategy);
    j["verified"] = c.verified;
    j["median_ms"] = c.median_ms;
    j["max_rel_logit_error"] = c.max_rel_logit_error;
    j["bin_mismatches"] = c.bin_mismatches;
    return j;
  };
  nlohmann::json j;
  j["candidates"] = candidates;
  j["best"] = cand_json(best);
  j["evaluated"] = nlohmann::json::array();
  for (const auto& c : evaluated) j["evaluated"].push_back(cand_json(c));
  return j.dump(2);
}

}  // namespace bitgnn
