#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "promptrl/provider.hpp"
#include "promptrl/task.hpp"

namespace promptrl {

/// Supervised & Unsupervised Entropy score of one prompt over an input set:
/// sue = lambda1 * s_sup + lambda2 * s_uns, where s_sup sums per-input
/// supervision margins and s_uns sums per-input prediction entropies.
struct SueBreakdown {
  double s_sup = 0.0;
  double s_uns = 0.0;
  double sue = 0.0;
  int n_inputs = 0;
};

/// Margin p(gold) - max over wrong labels of p(c). For binary tasks this is
/// the plain difference of the two probabilities.
double supervision_term(const LabelDistribution& dist, int gold);

/// Shannon entropy in nats; zero-probability terms contribute 0.
double entropy(const LabelDistribution& dist);

/// The one place the lambda combination is evaluated, so every caller gets
/// the identical floating-point result.
double combine_sue(double s_sup, double s_uns, const TaskSpec& task);

/// Scores each (prompt, input) pair once; exactly |inputs| scoring calls when
/// no cache is in front of the provider. Per-input terms are reduced in input
/// order regardless of scoring concurrency.
SueBreakdown sue_score(Provider& provider, const Prompt& prompt,
                       std::span<const LabeledExample> inputs, const TaskSpec& task,
                       int jobs = 1);

struct RankedPrompt {
  Prompt prompt;  // sue_score cached
  SueBreakdown breakdown;
  size_t source_index = 0;  // position in the candidate list passed in
};

/// Candidates ordered by descending sue, ties broken by rendered text. With
/// exclude_self set, reference records whose rendering equals a candidate's
/// text are dropped from that candidate's reference set.
std::vector<RankedPrompt> rank_by_sue(Provider& provider, const std::vector<Prompt>& candidates,
                                      const std::vector<LabeledExample>& reference,
                                      const TaskSpec& task, bool exclude_self, int jobs = 1);

/// Per-candidate breakdown table for audit.
void write_sue_report(const std::filesystem::path& path, const std::vector<RankedPrompt>& ranked);

}  // namespace promptrl
