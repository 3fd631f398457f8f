// JSON model configuration and construction of runnable models from it.
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bitgnn/graphops.hpp"
#include "bitgnn/rng.hpp"

namespace bitgnn {

struct ModelConfig {
  std::string model = "gcn";  // gcn | sage | saint
  int64_t features = 64;
  int64_t hidden = 16;
  int64_t classes = 7;
  std::vector<std::string> plan;  // one '+'-joined variant chain per layer
  uint64_t seed = 1;
  std::optional<TrinaryStrategy> strategy;
  int word_bits = 32;
};

ModelConfig parse_model_config(const std::string& json_text);
ModelConfig load_model_config(const std::string& path);

// The plan a model falls back to when the config lists none.
std::vector<std::string> default_plan(const std::string& model);

std::vector<KernelVariant> parse_plan_chain(const std::string& chain);
std::optional<TrinaryStrategy> parse_strategy(const std::string& name);

struct BuiltModel {
  ModelSpec spec;
  DenseMatrix features;  // seeded uniform(-1, 1) node features
};

// Weights and features are drawn from the seeded stream in a fixed order, so
// a (config, graph) pair always produces the same model.
BuiltModel build_model(const ModelConfig& cfg, std::shared_ptr<const GraphBundle> graph,
                       int64_t nodes);

}  // namespace bitgnn
