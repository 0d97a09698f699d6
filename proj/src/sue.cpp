#include "promptrl/sue.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "promptrl/errors.hpp"
#include "promptrl/util.hpp"

namespace promptrl {

double supervision_term(const LabelDistribution& dist, int gold) {
  if (gold < 0 || gold >= dist.size()) {
    throw ConfigError("gold label " + std::to_string(gold) + " outside the distribution");
  }
  double max_wrong = -1.0;
  for (int c = 0; c < dist.size(); ++c) {
    if (c == gold) continue;
    max_wrong = std::max(max_wrong, dist.probs[static_cast<size_t>(c)]);
  }
  return dist.probs[static_cast<size_t>(gold)] - max_wrong;
}

double entropy(const LabelDistribution& dist) {
  double h = 0.0;
  for (const double p : dist.probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double combine_sue(double s_sup, double s_uns, const TaskSpec& task) {
  return task.lambda1 * s_sup + task.lambda2 * s_uns;
}

SueBreakdown sue_score(Provider& provider, const Prompt& prompt,
                       std::span<const LabeledExample> inputs, const TaskSpec& task, int jobs) {
  if (inputs.empty()) throw ConfigError("sue_score requires at least one input");
  std::vector<double> margins(inputs.size());
  std::vector<double> entropies(inputs.size());
  parallel_for(inputs.size(), jobs, [&](size_t i) {
    try {
      const std::string query = render_query(prompt, inputs[i], task);
      const LabelDistribution dist = provider.score_labels(query, task);
      margins[i] = supervision_term(dist, inputs[i].label);
      entropies[i] = entropy(dist);
    } catch (const ProviderError& e) {
      throw ProviderError("scoring input " + std::to_string(i) + ": " + e.what());
    }
  });
  SueBreakdown out;
  out.n_inputs = static_cast<int>(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    out.s_sup += margins[i];
    out.s_uns += entropies[i];
  }
  out.sue = combine_sue(out.s_sup, out.s_uns, task);
  return out;
}

std::vector<RankedPrompt> rank_by_sue(Provider& provider, const std::vector<Prompt>& candidates,
                                      const std::vector<LabeledExample>& reference,
                                      const TaskSpec& task, bool exclude_self, int jobs) {
  if (candidates.empty()) throw ConfigError("rank_by_sue requires candidates");
  if (reference.empty()) throw ConfigError("rank_by_sue requires a reference set");

  // Self-matching is by rendered text: a candidate that came from the
  // reference set renders identically to its source record.
  std::vector<std::string> reference_rendering;
  if (exclude_self) {
    reference_rendering.reserve(reference.size());
    for (const auto& ex : reference) {
      reference_rendering.push_back(render_prompt(ex, task).rendered_text);
    }
  }

  std::vector<RankedPrompt> ranked(candidates.size());
  parallel_for(candidates.size(), jobs, [&](size_t i) {
    const Prompt& candidate = candidates[i];
    std::vector<LabeledExample> filtered;
    std::span<const LabeledExample> inputs(reference);
    if (exclude_self) {
      bool self_present = false;
      for (const auto& rendering : reference_rendering) {
        if (rendering == candidate.rendered_text) {
          self_present = true;
          break;
        }
      }
      if (self_present) {
        for (size_t j = 0; j < reference.size(); ++j) {
          if (reference_rendering[j] != candidate.rendered_text) {
            filtered.push_back(reference[j]);
          }
        }
        if (filtered.empty()) {
          throw ConfigError("reference set empty after self-exclusion for candidate '" +
                            candidate.rendered_text + "'");
        }
        inputs = filtered;
      }
    }
    RankedPrompt entry;
    entry.breakdown = sue_score(provider, candidate, inputs, task);
    entry.prompt = candidate;
    entry.prompt.sue_score = entry.breakdown.sue;
    entry.source_index = i;
    ranked[i] = std::move(entry);
  });

  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedPrompt& a, const RankedPrompt& b) {
    if (a.breakdown.sue != b.breakdown.sue) return a.breakdown.sue > b.breakdown.sue;
    return a.prompt.rendered_text < b.prompt.rendered_text;
  });
  return ranked;
}

void write_sue_report(const std::filesystem::path& path, const std::vector<RankedPrompt>& ranked) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : ranked) {
    rows.push_back({{"rendered_text", r.prompt.rendered_text},
                    {"s_sup", r.breakdown.s_sup},
                    {"s_uns", r.breakdown.s_uns},
                    {"sue", r.breakdown.sue},
                    {"n_inputs", r.breakdown.n_inputs}});
  }
  write_file(path, rows.dump(2) + "\n");
}

}  // namespace promptrl
