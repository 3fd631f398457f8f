#include "bitgnn/modelconfig.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace bitgnn {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("config: " + msg); }

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::shared_ptr<const DenseMatrix> random_weight(Rng& rng, int64_t rows, int64_t cols) {
  return std::make_shared<DenseMatrix>(random_dense(rng, rows, cols));
}

}  // namespace

std::optional<TrinaryStrategy> parse_strategy(const std::string& name) {
  std::string n = lower(name);
  if (n.empty() || n == "default") return std::nullopt;
  if (n == "if_else" || n == "ifelse") return TrinaryStrategy::IfElse;
  if (n == "and_andnot" || n == "andandnot") return TrinaryStrategy::AndAndNot;
  if (n == "two_and_minus_popc" || n == "twoandminuspopc") return TrinaryStrategy::TwoAndMinusPopc;
  fail("unknown strategy \"" + name + "\"");
}

std::vector<KernelVariant> parse_plan_chain(const std::string& chain) {
  std::vector<KernelVariant> out;
  std::string part;
  std::istringstream is(chain);
  while (std::getline(is, part, '+')) {
    if (part.empty()) continue;
    out.push_back(KernelVariant::parse(part));
  }
  if (out.empty()) fail("empty plan entry \"" + chain + "\"");
  return out;
}

std::vector<std::string> default_plan(const std::string& model) {
  if (model == "gcn") {
    return {"MM.FBB+BSpMM.BBB", "MM.BBF+BSpMM.FBF"};
  }
  if (model == "sage") {
    return {"MM.FBB+MM.FBB+BSpMM.BBB+ADD.BBF", "MM.FBF+MM.FBF+BSpMM.FFF+ADD.FFF"};
  }
  if (model == "saint") {
    return {"MM.FBB+MM.FBB+BSpMM.BBB+ADD.BBF", "MM.FBB+MM.FBB+BSpMM.BBB+ADD.BBF", "MM.FBF"};
  }
  fail("unknown model \"" + model + "\"");
}

ModelConfig parse_model_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(e.what());
  }
  ModelConfig cfg;
  cfg.model = lower(j.value("model", cfg.model));
  if (cfg.model != "gcn" && cfg.model != "sage" && cfg.model != "saint") {
    fail("unknown model \"" + cfg.model + "\"");
  }
  cfg.features = j.value("features", cfg.features);
  cfg.hidden = j.value("hidden", cfg.hidden);
  cfg.classes = j.value("classes", cfg.classes);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.word_bits = j.value("word_bits", cfg.word_bits);
  if (cfg.features <= 0 || cfg.hidden <= 0 || cfg.classes <= 0) {
    fail("features, hidden and classes must be positive");
  }
  if (cfg.word_bits != 32 && cfg.word_bits != 64) fail("word_bits must be 32 or 64");
  if (j.contains("plan")) {
    if (!j["plan"].is_array()) fail("plan must be an array of strings");
    for (const auto& p : j["plan"]) cfg.plan.push_back(p.get<std::string>());
  }
  if (j.contains("strategy")) cfg.strategy = parse_strategy(j["strategy"].get<std::string>());
  return cfg;
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(path + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model_config(ss.str());
}

BuiltModel build_model(const ModelConfig& cfg, std::shared_ptr<const GraphBundle> graph,
                       int64_t nodes) {
  std::vector<std::string> plan = cfg.plan.empty() ? default_plan(cfg.model) : cfg.plan;
  Rng rng(cfg.seed);

  BuiltModel bm;
  bm.spec.graph = std::move(graph);
  bm.spec.strategy = cfg.strategy;
  bm.spec.input_precision = Precision::F;
  bm.spec.word_bits = cfg.word_bits;
  bm.features = random_dense(rng, nodes, cfg.features);

  auto conv_dims = [&](size_t conv_count) {
    std::vector<std::pair<int64_t, int64_t>> d;
    int64_t in = cfg.features;
    for (size_t i = 0; i < conv_count; ++i) {
      int64_t out = i + 1 == conv_count ? cfg.classes : cfg.hidden;
      d.emplace_back(in, out);
      in = out;
    }
    return d;
  };

  if (cfg.model == "gcn") {
    auto dims = conv_dims(plan.size());
    for (size_t i = 0; i < plan.size(); ++i) {
      std::vector<KernelVariant> chain = parse_plan_chain(plan[i]);
      if (chain.size() != 2) fail("gcn layer plan needs \"MM.x+BSpMM.x\", got \"" + plan[i] + "\"");
      LayerSpec l;
      l.kind = LayerKind::GcnConv;
      l.plan = std::move(chain);
      l.w1 = random_weight(rng, dims[i].first, dims[i].second);
      l.relu = i + 1 < plan.size();
      bm.spec.layers.push_back(std::move(l));
    }
  } else if (cfg.model == "sage" || cfg.model == "saint") {
    size_t conv_count = plan.size();
    bool fc_tail = false;
    if (cfg.model == "saint") {
      if (plan.size() < 2) fail("saint needs at least one conv plan and one fc plan");
      conv_count = plan.size() - 1;
      fc_tail = true;
    }
    auto dims = conv_dims(conv_count + (fc_tail ? 1 : 0));
    for (size_t i = 0; i < conv_count; ++i) {
      std::vector<KernelVariant> chain = parse_plan_chain(plan[i]);
      if (chain.size() != 4) {
        fail("conv layer plan needs \"MM.x+MM.x+BSpMM.x+ADD.x\", got \"" + plan[i] + "\"");
      }
      LayerSpec l;
      l.kind = cfg.model == "sage" ? LayerKind::SageConv : LayerKind::GraphConv;
      l.plan = std::move(chain);
      l.w1 = random_weight(rng, dims[i].first, dims[i].second);
      l.w2 = random_weight(rng, dims[i].first, dims[i].second);
      l.relu = true;
      bm.spec.layers.push_back(std::move(l));
    }
    if (fc_tail) {
      std::vector<KernelVariant> chain = parse_plan_chain(plan.back());
      if (chain.size() != 1) fail("fc plan needs a single MM variant, got \"" + plan.back() + "\"");
      LayerSpec l;
      l.kind = LayerKind::FullyConnected;
      l.plan = std::move(chain);
      l.w1 = random_weight(rng, dims.back().first, dims.back().second);
      bm.spec.layers.push_back(std::move(l));
    } else {
      bm.spec.layers.back().relu = false;
    }
  }

  LayerSpec sm;
  sm.kind = LayerKind::Softmax;
  bm.spec.layers.push_back(std::move(sm));
  return bm;
}

}  // namespace bitgnn
