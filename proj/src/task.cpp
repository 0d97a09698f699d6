#include "promptrl/task.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "promptrl/errors.hpp"
#include "promptrl/util.hpp"

namespace promptrl {

using nlohmann::json;

const std::string& LabelSpace::name(int id) const {
  if (id < 0 || id >= size()) throw ConfigError("label id out of range: " + std::to_string(id));
  return labels[static_cast<size_t>(id)];
}

std::optional<int> LabelSpace::find(std::string_view label) const {
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return static_cast<int>(i);
  }
  return std::nullopt;
}

void LabelSpace::validate() const {
  if (labels.size() < 2) throw ConfigError("label space needs at least two labels");
  std::set<std::string> seen(labels.begin(), labels.end());
  if (seen.size() != labels.size()) throw ConfigError("label space contains duplicates");
}

const std::string& Verbalizer::token_for(int label) const {
  if (label < 0 || label >= static_cast<int>(tokens.size())) {
    throw ConfigError("no verbalizer token for label " + std::to_string(label));
  }
  return tokens[static_cast<size_t>(label)];
}

std::optional<int> Verbalizer::find_token(std::string_view word) const {
  const std::string lowered = to_lower(std::string(word));
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (to_lower(tokens[i]) == lowered) return static_cast<int>(i);
  }
  return std::nullopt;
}

void Verbalizer::validate(int num_labels) const {
  if (static_cast<int>(tokens.size()) != num_labels) {
    throw ConfigError("verbalizer must define exactly one token per label");
  }
  std::set<std::string> seen;
  for (const auto& t : tokens) {
    if (t.empty()) throw ConfigError("verbalizer token must be non-empty");
    if (!seen.insert(to_lower(t)).second) throw ConfigError("verbalizer tokens must be distinct");
  }
}

namespace {

void require_slot_once(const std::string& pattern, std::string_view slot) {
  const size_t n = count_occurrences(pattern, slot);
  if (n != 1) {
    throw ConfigError("template must contain " + std::string(slot) + " exactly once, found " +
                      std::to_string(n) + " in: " + pattern);
  }
}

}  // namespace

void TemplateSpec::validate() const {
  if (pattern.empty()) throw ConfigError("template pattern is empty");
  require_slot_once(pattern, kTextSlot);
  require_slot_once(pattern, kMaskSlot);
  if (pair_pattern) {
    require_slot_once(*pair_pattern, kText1Slot);
    require_slot_once(*pair_pattern, kText2Slot);
    require_slot_once(*pair_pattern, kMaskSlot);
  }
}

std::string prompt_source_name(PromptSource source) {
  return source == PromptSource::kTrainingExample ? "training-example" : "dialogue-generated";
}

PromptSource prompt_source_from_name(std::string_view name) {
  if (name == "training-example") return PromptSource::kTrainingExample;
  if (name == "dialogue-generated") return PromptSource::kDialogueGenerated;
  throw ConfigError("unknown prompt source: " + std::string(name));
}

void TaskSpec::validate() const {
  label_space.validate();
  verbalizer.validate(label_space.size());
  tmpl.validate();
  if (lambda1 < 0 || lambda2 < 0) throw ConfigError("lambda weights must be non-negative");
  if (top_k < 1) throw ConfigError("top_k must be positive");
  if (seed_set_size < 3) {
    throw ConfigError("seed_set_size must be at least 3 (one rewrite step per round)");
  }
  if (generations_per_round < 1) throw ConfigError("generations_per_round must be positive");
  if (round_max < 1) throw ConfigError("round_max must be positive");
  if (prompt_set_size < 1) throw ConfigError("prompt_set_size must be positive");
  if (top_k > prompt_set_size) throw ConfigError("top_k must not exceed prompt_set_size");
  if (prompt_set_size > generations_per_round * round_max) {
    throw ConfigError("prompt_set_size exceeds the number of generated candidates");
  }
  if (dialogue.init.find("{examples}") == std::string::npos) {
    throw ConfigError("dialogue init template is missing the {examples} slot");
  }
  if (dialogue.rewrite.find("{example}") == std::string::npos) {
    throw ConfigError("dialogue rewrite template is missing the {example} slot");
  }
}

namespace {

std::string fill_template(const LabeledExample& example, const TaskSpec& task,
                          std::optional<std::string_view> mask_value) {
  const TemplateSpec& tmpl = task.tmpl;
  std::string out;
  if (example.is_pair()) {
    if (!tmpl.pair_pattern) {
      throw ConfigError("task '" + task.name + "' has no pair template but got a pair example");
    }
    out = *tmpl.pair_pattern;
    replace_first(out, TemplateSpec::kText1Slot, example.text);
    replace_first(out, TemplateSpec::kText2Slot, example.text2);
  } else {
    out = tmpl.pattern;
    replace_first(out, TemplateSpec::kTextSlot, example.text);
  }
  if (mask_value) replace_first(out, TemplateSpec::kMaskSlot, *mask_value);
  return out;
}

}  // namespace

Prompt render_prompt(const LabeledExample& example, const TaskSpec& task) {
  if (example.text.empty()) throw ConfigError("cannot render a prompt from an empty text");
  if (example.label < 0 || example.label >= task.num_labels()) {
    throw ConfigError("example label " + std::to_string(example.label) +
                      " outside the task label space");
  }
  Prompt prompt;
  prompt.rendered_text = fill_template(example, task, task.verbalizer.token_for(example.label));
  prompt.source =
      example.pseudo ? PromptSource::kDialogueGenerated : PromptSource::kTrainingExample;
  prompt.pseudo_label = example.label;
  return prompt;
}

std::string render_masked(const LabeledExample& example, const TaskSpec& task) {
  if (example.text.empty()) throw ConfigError("cannot render an empty input");
  return fill_template(example, task, std::nullopt);
}

std::string render_query(const Prompt& prompt, const LabeledExample& input, const TaskSpec& task) {
  const std::string masked = render_masked(input, task);
  if (prompt.rendered_text.empty()) return masked;
  return prompt.rendered_text + task.separator + masked;
}

std::string embed_text(const LabeledExample& example) {
  if (!example.is_pair()) return example.text;
  return example.text + " " + example.text2;
}

std::vector<LabeledExample> load_dataset(const std::filesystem::path& path, const TaskSpec& task) {
  std::ifstream in(path);
  if (!in) throw ConfigError("dataset file not found: " + path.string());
  std::vector<LabeledExample> examples;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError("malformed record at " + path.string() + ":" + std::to_string(line_no) +
                        ": " + e.what());
    }
    LabeledExample ex;
    try {
      if (record.contains("text1")) {
        ex.text = record.at("text1").get<std::string>();
        ex.text2 = record.at("text2").get<std::string>();
      } else {
        ex.text = record.at("text").get<std::string>();
      }
      const std::string label = record.at("label").get<std::string>();
      const auto id = task.label_space.find(label);
      if (!id) {
        throw ConfigError("unknown label '" + label + "' at " + path.string() + ":" +
                          std::to_string(line_no));
      }
      ex.label = *id;
      ex.pseudo = record.value("pseudo", false);
    } catch (const json::exception& e) {
      throw ConfigError("malformed record at " + path.string() + ":" + std::to_string(line_no) +
                        ": " + e.what());
    }
    if (ex.text.empty()) {
      throw ConfigError("empty text at " + path.string() + ":" + std::to_string(line_no));
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

void write_dataset(const std::filesystem::path& path, const std::vector<LabeledExample>& examples,
                   const TaskSpec& task) {
  std::ostringstream out;
  for (const auto& ex : examples) {
    json record;
    if (ex.is_pair()) {
      record["text1"] = ex.text;
      record["text2"] = ex.text2;
    } else {
      record["text"] = ex.text;
    }
    record["label"] = task.label_space.name(ex.label);
    if (ex.pseudo) record["pseudo"] = true;
    out << record.dump() << "\n";
  }
  write_file(path, out.str());
}

std::vector<LabeledExample> sample_few_shot(const std::vector<LabeledExample>& dataset,
                                            int per_class, uint64_t seed, const TaskSpec& task) {
  if (per_class < 0) throw ConfigError("per_class must be non-negative");
  if (per_class == 0) return {};
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(task.num_labels()));
  for (size_t i = 0; i < dataset.size(); ++i) {
    const int label = dataset[i].label;
    if (label < 0 || label >= task.num_labels()) {
      throw ConfigError("dataset label outside the task label space");
    }
    by_class[static_cast<size_t>(label)].push_back(i);
  }
  std::mt19937_64 rng(mix64(seed));
  std::vector<size_t> chosen;
  for (int c = 0; c < task.num_labels(); ++c) {
    auto& pool = by_class[static_cast<size_t>(c)];
    if (static_cast<int>(pool.size()) < per_class) {
      throw ConfigError("class '" + task.label_space.name(c) + "' has only " +
                        std::to_string(pool.size()) + " examples, need " +
                        std::to_string(per_class));
    }
    seeded_shuffle(pool, rng);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + per_class);
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<LabeledExample> out;
  out.reserve(chosen.size());
  for (const size_t i : chosen) out.push_back(dataset[i]);
  return out;
}

void write_prompt_set(const std::filesystem::path& path, const std::vector<Prompt>& prompts,
                      uint64_t seed, const json& config) {
  json doc;
  doc["seed"] = seed;
  doc["config"] = config;
  json list = json::array();
  for (const auto& p : prompts) {
    json item;
    item["rendered_text"] = p.rendered_text;
    item["source"] = prompt_source_name(p.source);
    item["pseudo_label"] = p.pseudo_label;
    if (p.sue_score) item["sue_score"] = *p.sue_score;
    list.push_back(std::move(item));
  }
  doc["prompts"] = std::move(list);
  write_file(path, doc.dump(2) + "\n");
}

std::vector<Prompt> load_prompt_set(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("invalid prompt-set file " + path.string() + ": " + e.what());
  }
  if (!doc.contains("prompts") || !doc["prompts"].is_array()) {
    throw ConfigError("prompt-set file " + path.string() + " has no prompts array");
  }
  std::vector<Prompt> prompts;
  for (const auto& item : doc["prompts"]) {
    Prompt p;
    p.rendered_text = item.at("rendered_text").get<std::string>();
    p.source = prompt_source_from_name(item.at("source").get<std::string>());
    p.pseudo_label = item.at("pseudo_label").get<int>();
    if (item.contains("sue_score")) p.sue_score = item["sue_score"].get<double>();
    if (p.rendered_text.empty()) throw ConfigError("prompt-set contains an empty prompt");
    prompts.push_back(std::move(p));
  }
  return prompts;
}

namespace {

TaskSpec sentiment_base(const std::string& name, const std::string& persona) {
  TaskSpec task;
  task.name = name;
  task.label_space.labels = {"negative", "positive"};
  task.verbalizer.tokens = {"negative", "positive"};
  task.tmpl.pattern = "Reviews:<S> Sentiment:[MASK]";
  task.dialogue.init = "As a " + persona +
                       ", please generate {n} similar samples as shown in the "
                       "parentheses.({examples})";
  return task;
}

TaskSpec pair_base(const std::string& name, const std::string& form) {
  TaskSpec task;
  task.name = name;
  task.tmpl.pattern = "Input:<S> Answer:[MASK]";  // single-text fallback
  task.dialogue.init =
      "As a prompt engineer, please generate {n} similar samples as shown in "
      "the parentheses. The form of prompt is " +
      form + ".({examples})";
  return task;
}

}  // namespace

TaskSpec task_preset(const std::string& name) {
  const std::string key = to_lower(name);
  if (key == "sst-2" || key == "sst2") {
    TaskSpec t = sentiment_base("sst-2", "movie enthusiast");
    t.lambda2 = 7.00;
    t.top_k = 10;
    t.entropy_coef = 0.059;
    return t;
  }
  if (key == "yelp") {
    TaskSpec t = sentiment_base("yelp", "critic");
    t.lambda2 = 6.50;
    t.top_k = 15;
    t.entropy_coef = 0.065;
    return t;
  }
  if (key == "mr") {
    TaskSpec t = sentiment_base("mr", "movie enthusiast");
    t.lambda2 = 6.75;
    t.top_k = 7;
    t.entropy_coef = 0.060;
    return t;
  }
  if (key == "cr") {
    TaskSpec t = sentiment_base("cr", "customer");
    t.lambda2 = 6.75;
    t.top_k = 3;
    t.entropy_coef = 0.068;
    return t;
  }
  if (key == "rte") {
    TaskSpec t = pair_base("rte", "Sentence1+Answer+Sentence2");
    t.label_space.labels = {"entailment", "not_entailment"};
    t.verbalizer.tokens = {"Clearly", "Yet"};
    t.tmpl.pair_pattern = "<S1>. [MASK], I believe <S2>";
    t.lambda2 = 6.00;
    t.top_k = 15;
    t.entropy_coef = 0.050;
    return t;
  }
  if (key == "qnli") {
    TaskSpec t = pair_base("qnli", "Question+Answer+Sentence");
    t.label_space.labels = {"entailment", "not_entailment"};
    t.verbalizer.tokens = {"Okay", "Nonetheless"};
    t.tmpl.pair_pattern = "<S1>? [MASK]. Yes, <S2>";
    t.lambda2 = 6.50;
    t.top_k = 15;
    t.entropy_coef = 0.055;
    return t;
  }
  if (key == "mrpc") {
    TaskSpec t = pair_base("mrpc",
                           "Sentence1+Answer+Sentence2 and the answer there are only two "
                           "answers: 'Alas' or 'Rather'");
    t.label_space.labels = {"not_equivalent", "equivalent"};
    t.verbalizer.tokens = {"Rather", "Alas"};
    t.tmpl.pair_pattern = "<S1>. [MASK]! <S2>";
    t.lambda2 = 6.50;
    t.top_k = 5;
    t.entropy_coef = 0.059;
    return t;
  }
  throw ConfigError("unknown task preset: " + name);
}

std::vector<std::string> task_preset_names() {
  return {"sst-2", "yelp", "mr", "cr", "rte", "qnli", "mrpc"};
}

}  // namespace promptrl
