#pragma once

#include <span>
#include <vector>

#include "promptrl/policy.hpp"
#include "promptrl/provider.hpp"
#include "promptrl/task.hpp"

namespace promptrl {

struct WeightedAction {
  int action = 0;
  double weight = 0.0;
};

/// k distinct indices with the highest probability, descending; ties broken
/// by the lower index. Weights are the raw probability values.
std::vector<WeightedAction> top_k_actions(std::span<const double> dist, int k);

/// softmax over per-class sums of weight_j * log p_j(c); probabilities are
/// floored at 1e-12 before the log.
LabelDistribution combine_weighted_log(const std::vector<LabelDistribution>& dists,
                                       std::span<const double> weights);

struct EnsemblePrediction {
  LabelDistribution probs;
  int predicted_label = 0;
  std::vector<WeightedAction> selected;        // top-k actions with policy weights
  std::vector<LabelDistribution> per_prompt;   // aligned with selected
};

struct EnsembleOptions {
  int k = 1;
  bool renormalize_weights = false;  // off by default: raw top-k policy values
  int jobs = 1;
};

/// Embeds the input, normalizes with the frozen training statistics, runs the
/// policy, scores the top-k prompts on the input and combines them.
EnsemblePrediction ensemble_predict(Provider& provider, const PolicyParams& params,
                                    const RunningNormalizer& state_norm,
                                    const std::vector<Prompt>& prompts,
                                    const LabeledExample& input, const TaskSpec& task,
                                    const EnsembleOptions& options);

struct EvalRecord {
  int gold = 0;
  int predicted = 0;
  LabelDistribution probs;
  std::vector<WeightedAction> selected;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<int64_t>> confusion;  // [gold][predicted]
  std::vector<EvalRecord> records;              // in test-set order
};

EvalResult evaluate(Provider& provider, const PolicyParams& params,
                    const RunningNormalizer& state_norm, const std::vector<Prompt>& prompts,
                    const std::vector<LabeledExample>& test_set, const TaskSpec& task,
                    const EnsembleOptions& options);

}  // namespace promptrl
