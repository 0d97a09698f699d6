#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptrl/provider.hpp"
#include "promptrl/sue.hpp"
#include "promptrl/task.hpp"

namespace promptrl {

/// Full record of one dialogue round: the message history and the parsed
/// batch after every generation step.
struct DialogueTranscript {
  int round = 0;
  std::vector<ChatMessage> messages;
  std::vector<std::vector<LabeledExample>> batches;
};

struct PoolEntry {
  Prompt prompt;
  int round = 0;
  int slot = 0;
};

struct SeedSelection {
  std::vector<LabeledExample> examples;   // top-m, in rank order
  std::vector<RankedPrompt> ranked_train; // full ranking over the training set
};

/// Renders every training example, ranks by SUE against the training set with
/// self-exclusion, and returns the top-m underlying examples in rank order.
SeedSelection select_seed_set(Provider& provider, const std::vector<LabeledExample>& train,
                              const TaskSpec& task, int jobs = 1);

/// One user message: the task's initialization template with both rendered
/// seed examples in parentheses and the requested generation count.
std::vector<ChatMessage> build_initial_message(const LabeledExample& first,
                                               const LabeledExample& second, const TaskSpec& task);

/// One user message: the alignment template with the rendered seed example in
/// parentheses.
ChatMessage build_rewrite_message(const LabeledExample& seed, const TaskSpec& task);

/// Extracts up to n numbered items from a completion. Each item is split into
/// a body and a trailing label word mapped through the verbalizer (for pair
/// templates, around a standalone verbalizer token); items with no mappable
/// label word are dropped. Fewer than n results is the recoverable
/// short-batch condition, reported by the returned size.
std::vector<LabeledExample> parse_generation(const std::string& text, const TaskSpec& task, int n);

struct RoundResult {
  std::vector<Prompt> prompts;  // final batch, rendered
  DialogueTranscript transcript;
};

/// Executes one dialogue round over an already-shuffled seed list: one
/// initial generation from seeds[0..1], then one rewrite per remaining seed
/// with the full message history retained. A short batch is re-asked once and
/// then accepted.
RoundResult run_dialogue_round(Provider& provider, const std::vector<LabeledExample>& seeds,
                               const TaskSpec& task, int round_index);

struct ConstructOptions {
  uint64_t seed = 0;
  int jobs = 1;
  std::optional<std::filesystem::path> artifact_dir;
  nlohmann::json config_provenance = nlohmann::json::object();  // embedded in the artifact
};

struct ConstructionResult {
  std::vector<Prompt> prompts;             // top-h, descending SUE
  std::vector<SueBreakdown> breakdowns;    // aligned with prompts
  std::vector<PoolEntry> pool;             // every candidate with provenance
  std::vector<DialogueTranscript> transcripts;
};

/// The whole construction stage: seed selection, round_max dialogue rounds
/// with independent shuffles, SUE screening of the accumulated pool against
/// the full training set, and (optionally) artifact persistence.
ConstructionResult construct_prompt_set(Provider& provider,
                                        const std::vector<LabeledExample>& train,
                                        const TaskSpec& task, const ConstructOptions& options);

}  // namespace promptrl
