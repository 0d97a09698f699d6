#include "promptrl/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "promptrl/errors.hpp"
#include "promptrl/util.hpp"

namespace promptrl {

namespace {

constexpr double kLogFloor = 1e-12;

int argmax_low_index(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[static_cast<size_t>(i)] > values[static_cast<size_t>(best)]) best = i;
  }
  return best;
}

}  // namespace

std::vector<WeightedAction> top_k_actions(std::span<const double> dist, int k) {
  const int n = static_cast<int>(dist.size());
  if (k < 1 || k > n) {
    throw ConfigError("top-k " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<int> indices(static_cast<size_t>(n));
  std::iota(indices.begin(), indices.end(), 0);
  std::stable_sort(indices.begin(), indices.end(), [&](int a, int b) {
    return dist[static_cast<size_t>(a)] > dist[static_cast<size_t>(b)];
  });
  std::vector<WeightedAction> out;
  out.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    out.push_back({indices[static_cast<size_t>(i)], dist[static_cast<size_t>(indices[static_cast<size_t>(i)])]});
  }
  return out;
}

LabelDistribution combine_weighted_log(const std::vector<LabelDistribution>& dists,
                                       std::span<const double> weights) {
  if (dists.empty() || dists.size() != weights.size()) {
    throw ConfigError("ensemble needs one weight per distribution");
  }
  const size_t num_labels = dists.front().probs.size();
  std::vector<double> combined(num_labels, 0.0);
  for (size_t j = 0; j < dists.size(); ++j) {
    if (dists[j].probs.size() != num_labels) {
      throw InvariantError("ensemble distributions disagree on the label count");
    }
    for (size_t c = 0; c < num_labels; ++c) {
      combined[c] += weights[j] * std::log(std::max(dists[j].probs[c], kLogFloor));
    }
  }
  const double max_z = *std::max_element(combined.begin(), combined.end());
  LabelDistribution out;
  out.probs.resize(num_labels);
  double sum = 0.0;
  for (size_t c = 0; c < num_labels; ++c) {
    out.probs[c] = std::exp(combined[c] - max_z);
    sum += out.probs[c];
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

EnsemblePrediction ensemble_predict(Provider& provider, const PolicyParams& params,
                                    const RunningNormalizer& state_norm,
                                    const std::vector<Prompt>& prompts,
                                    const LabeledExample& input, const TaskSpec& task,
                                    const EnsembleOptions& options) {
  if (static_cast<int>(prompts.size()) != params.action_dim) {
    throw ConfigError("prompt-set size " + std::to_string(prompts.size()) +
                      " does not match the policy action dimension " +
                      std::to_string(params.action_dim));
  }
  const StateVector raw = provider.embed(embed_text(input));
  if (raw.dim() != params.state_dim) {
    throw ConfigError("embedding dimension does not match the policy state dimension");
  }
  const std::vector<double> state = state_norm.normalize(raw.values);
  const PolicyForward fwd = policy_forward(params, state);

  EnsemblePrediction prediction;
  prediction.selected = top_k_actions(fwd.probs, options.k);
  std::vector<double> weights;
  weights.reserve(prediction.selected.size());
  for (const auto& wa : prediction.selected) weights.push_back(wa.weight);
  if (options.renormalize_weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (total > 0.0) {
      for (double& w : weights) w /= total;
    }
    for (size_t i = 0; i < weights.size(); ++i) prediction.selected[i].weight = weights[i];
  }

  prediction.per_prompt.resize(prediction.selected.size());
  for (size_t j = 0; j < prediction.selected.size(); ++j) {
    const int action = prediction.selected[j].action;
    try {
      const std::string query =
          render_query(prompts[static_cast<size_t>(action)], input, task);
      prediction.per_prompt[j] = provider.score_labels(query, task);
    } catch (const ProviderError& e) {
      throw ProviderError("scoring prompt " + std::to_string(action) + ": " + e.what());
    }
  }
  prediction.probs = combine_weighted_log(prediction.per_prompt, weights);
  prediction.predicted_label = argmax_low_index(prediction.probs.probs);
  return prediction;
}

EvalResult evaluate(Provider& provider, const PolicyParams& params,
                    const RunningNormalizer& state_norm, const std::vector<Prompt>& prompts,
                    const std::vector<LabeledExample>& test_set, const TaskSpec& task,
                    const EnsembleOptions& options) {
  if (test_set.empty()) throw ConfigError("evaluation requires a non-empty test set");
  EvalResult result;
  result.records.resize(test_set.size());
  parallel_for(test_set.size(), options.jobs, [&](size_t i) {
    EnsembleOptions per_input = options;
    per_input.jobs = 1;
    const EnsemblePrediction prediction =
        ensemble_predict(provider, params, state_norm, prompts, test_set[i], task, per_input);
    EvalRecord record;
    record.gold = test_set[i].label;
    record.predicted = prediction.predicted_label;
    record.probs = prediction.probs;
    record.selected = prediction.selected;
    result.records[i] = std::move(record);
  });

  const size_t num_labels = static_cast<size_t>(task.num_labels());
  result.confusion.assign(num_labels, std::vector<int64_t>(num_labels, 0));
  int64_t correct = 0;
  for (const auto& record : result.records) {
    result.confusion[static_cast<size_t>(record.gold)][static_cast<size_t>(record.predicted)]++;
    if (record.gold == record.predicted) ++correct;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(test_set.size());
  return result;
}

}  // namespace promptrl
