// Exhaustive variant substitution: enumerate every tag-consistent plan for a
// model skeleton, verify each against the reference, keep the fastest.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bitgnn/modelconfig.hpp"

namespace bitgnn {

// All kernel variants of one op that pass valid() and match the fixed tags
// (nullopt leaves a position free).
std::vector<KernelVariant> legal_variants(KernelOp op, std::optional<Precision> in1,
                                          std::optional<Precision> in2,
                                          std::optional<Precision> out);

// Every per-layer chain assignment for the given layer kinds such that each
// producer/consumer tag pair matches, the first input is `in` and the final
// output is F. Chains come back as '+'-joined variant strings per layer.
std::vector<std::vector<std::string>> enumerate_plans(const std::vector<LayerKind>& kinds,
                                                      Precision in);

struct TuneCandidate {
  std::vector<std::string> plan;
  TrinaryStrategy strategy = TrinaryStrategy::TwoAndMinusPopc;
  bool verified = false;
  double median_ms = 0.0;
  double max_rel_logit_error = 0.0;
  int64_t bin_mismatches = 0;
};

struct TuneResult {
  TuneCandidate best;
  size_t candidates = 0;
  std::vector<TuneCandidate> evaluated;

  std::string to_json() const;
};

// Builds one model per (plan, strategy) candidate on the same seeded weights,
// verifies it, times the verified ones and returns the fastest. A config
// carrying an explicit plan restricts the search to that chain; an explicit
// strategy pins the strategy.
TuneResult tune_model(const ModelConfig& cfg, const EdgeList& e, int reps = 3,
                      double tolerance = 1e-6);

}  // namespace bitgnn
