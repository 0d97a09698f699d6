#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace promptrl {

/// Ordered label identifiers; index in `labels` is the class id for a run.
struct LabelSpace {
  std::vector<std::string> labels;

  int size() const { return static_cast<int>(labels.size()); }
  const std::string& name(int id) const;
  std::optional<int> find(std::string_view label) const;
  void validate() const;
};

/// One vocabulary token per class; probabilities of these tokens at the mask
/// position define the label distribution.
struct Verbalizer {
  std::vector<std::string> tokens;  // index-aligned with LabelSpace

  const std::string& token_for(int label) const;
  std::optional<int> find_token(std::string_view word) const;  // case-insensitive
  void validate(int num_labels) const;
};

/// Text patterns with <S> (or <S1>/<S2>) input slots and a [MASK] label slot.
struct TemplateSpec {
  static constexpr std::string_view kTextSlot = "<S>";
  static constexpr std::string_view kText1Slot = "<S1>";
  static constexpr std::string_view kText2Slot = "<S2>";
  static constexpr std::string_view kMaskSlot = "[MASK]";

  std::string pattern;
  std::optional<std::string> pair_pattern;

  void validate() const;
};

struct LabeledExample {
  std::string text;
  std::string text2;  // non-empty only for sentence-pair tasks
  int label = 0;
  bool pseudo = false;  // generator-produced label, accepted unverified

  bool is_pair() const { return !text2.empty(); }
};

enum class PromptSource { kTrainingExample, kDialogueGenerated };

std::string prompt_source_name(PromptSource source);
PromptSource prompt_source_from_name(std::string_view name);

/// A rendered demonstration (template with the label word filled in).
struct Prompt {
  std::string rendered_text;
  PromptSource source = PromptSource::kTrainingExample;
  int pseudo_label = 0;
  std::optional<double> sue_score;
};

/// Chat templates driving prompt-set generation. `init` takes {n} and
/// {examples}; `rewrite` takes {example}.
struct DialogueTemplates {
  std::string init =
      "As a movie enthusiast, please generate {n} similar samples as shown in "
      "the parentheses.({examples})";
  std::string rewrite =
      "Now imitate the example in parentheses, randomly changing the three "
      "samples generated by the previous dialogue, and the other samples "
      "remain unchanged.({example})";
};

struct TaskSpec {
  std::string name = "custom";
  LabelSpace label_space;
  Verbalizer verbalizer;
  TemplateSpec tmpl;

  double lambda1 = 10.0;      // weight of the supervision margin
  double lambda2 = 7.0;       // weight of the entropy term
  int top_k = 10;             // prompts combined at inference
  double entropy_coef = 0.06; // entropy bonus in the policy loss

  int seed_set_size = 8;           // m
  int generations_per_round = 20;  // n
  int round_max = 3;
  int prompt_set_size = 15;        // h

  std::string separator = " ";  // between demonstration and query
  DialogueTemplates dialogue;

  int num_labels() const { return label_space.size(); }
  void validate() const;
};

/// Built-in task configurations: sst-2, yelp, mr, cr, rte, qnli, mrpc.
TaskSpec task_preset(const std::string& name);
std::vector<std::string> task_preset_names();

/// Fill the task template with the example text, resolving the mask slot to
/// the verbalizer token of the example's label.
Prompt render_prompt(const LabeledExample& example, const TaskSpec& task);

/// Fill the task template with the example text, leaving [MASK] unresolved.
std::string render_masked(const LabeledExample& example, const TaskSpec& task);

/// Demonstration text, separator, then the masked query for `input`.
std::string render_query(const Prompt& prompt, const LabeledExample& input,
                         const TaskSpec& task);

/// Text fed to the embedder for an input (pair texts joined with one space).
std::string embed_text(const LabeledExample& example);

/// Line-delimited records with "text" (or "text1"/"text2") and "label" fields;
/// labels are strings mapped through the task label space.
std::vector<LabeledExample> load_dataset(const std::filesystem::path& path,
                                         const TaskSpec& task);
void write_dataset(const std::filesystem::path& path,
                   const std::vector<LabeledExample>& examples,
                   const TaskSpec& task);

/// Exactly per_class examples of every class, deterministic for a given seed;
/// output preserves dataset order.
std::vector<LabeledExample> sample_few_shot(const std::vector<LabeledExample>& dataset,
                                            int per_class, uint64_t seed,
                                            const TaskSpec& task);

/// Prompt-set artifact: prompts ordered by descending SUE score, with the
/// run seed and effective configuration embedded for provenance.
void write_prompt_set(const std::filesystem::path& path,
                      const std::vector<Prompt>& prompts, uint64_t seed,
                      const nlohmann::json& config);
std::vector<Prompt> load_prompt_set(const std::filesystem::path& path);

}  // namespace promptrl
