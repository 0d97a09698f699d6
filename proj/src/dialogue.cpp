#include "promptrl/dialogue.hpp"

#include <cctype>
#include <iostream>

#include "promptrl/errors.hpp"
#include "promptrl/util.hpp"

namespace promptrl {

using nlohmann::json;

SeedSelection select_seed_set(Provider& provider, const std::vector<LabeledExample>& train,
                              const TaskSpec& task, int jobs) {
  const int m = task.seed_set_size;
  if (static_cast<int>(train.size()) < m) {
    throw ConfigError("training set has " + std::to_string(train.size()) +
                      " examples, seed selection needs at least " + std::to_string(m));
  }
  std::vector<Prompt> candidates;
  candidates.reserve(train.size());
  for (const auto& ex : train) candidates.push_back(render_prompt(ex, task));

  SeedSelection out;
  out.ranked_train = rank_by_sue(provider, candidates, train, task, /*exclude_self=*/true, jobs);
  out.examples.reserve(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    out.examples.push_back(train[out.ranked_train[static_cast<size_t>(i)].source_index]);
  }
  return out;
}

std::vector<ChatMessage> build_initial_message(const LabeledExample& first,
                                               const LabeledExample& second,
                                               const TaskSpec& task) {
  const std::string examples =
      render_prompt(first, task).rendered_text + " " + render_prompt(second, task).rendered_text;
  std::string content = task.dialogue.init;
  replace_all(content, "{n}", std::to_string(task.generations_per_round));
  replace_all(content, "{examples}", examples);
  return {ChatMessage{Role::kUser, std::move(content)}};
}

ChatMessage build_rewrite_message(const LabeledExample& seed, const TaskSpec& task) {
  std::string content = task.dialogue.rewrite;
  replace_all(content, "{example}", render_prompt(seed, task).rendered_text);
  return ChatMessage{Role::kUser, std::move(content)};
}

namespace {

std::string strip_edge_punct(std::string_view text) {
  size_t begin = 0;
  size_t end = text.size();
  const auto is_edge = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) ||
           std::ispunct(static_cast<unsigned char>(c));
  };
  while (begin < end && is_edge(text[begin])) ++begin;
  while (end > begin && is_edge(text[end - 1])) --end;
  return std::string(text.substr(begin, end - begin));
}

// True when [pos, pos+len) is not embedded in a longer alphanumeric token.
bool standalone_at(std::string_view text, size_t pos, size_t len) {
  if (pos > 0 && std::isalnum(static_cast<unsigned char>(text[pos - 1]))) return false;
  const size_t after = pos + len;
  if (after < text.size() && std::isalnum(static_cast<unsigned char>(text[after]))) return false;
  return true;
}

// Single-text grammar: the label word follows the last occurrence of the
// template's label-field keyword (the literal between <S> and [MASK], e.g.
// "Sentiment:"); the body is everything before it, with a leading field tag
// such as "Review:" stripped.
std::optional<LabeledExample> parse_single_item(const std::string& item, const TaskSpec& task) {
  const std::string& pattern = task.tmpl.pattern;
  const size_t text_at = pattern.find(TemplateSpec::kTextSlot);
  const size_t mask_at = pattern.find(TemplateSpec::kMaskSlot);
  if (text_at == std::string::npos || mask_at == std::string::npos) return std::nullopt;
  if (mask_at < text_at) return std::nullopt;  // mask-first templates are not parseable
  const std::string keyword =
      trim(pattern.substr(text_at + TemplateSpec::kTextSlot.size(),
                          mask_at - text_at - TemplateSpec::kTextSlot.size()));
  if (keyword.empty()) return std::nullopt;

  size_t key_pos = std::string::npos;
  size_t search = 0;
  while (true) {
    const size_t at = ifind(item, keyword, search);
    if (at == std::string::npos) break;
    key_pos = at;
    search = at + 1;
  }
  if (key_pos == std::string::npos) return std::nullopt;

  size_t word_begin = key_pos + keyword.size();
  while (word_begin < item.size() && std::isspace(static_cast<unsigned char>(item[word_begin]))) {
    ++word_begin;
  }
  size_t word_end = word_begin;
  while (word_end < item.size() && !std::isspace(static_cast<unsigned char>(item[word_end]))) {
    ++word_end;
  }
  const std::string label_word = strip_edge_punct(item.substr(word_begin, word_end - word_begin));
  const auto label = task.verbalizer.find_token(label_word);
  if (!label) return std::nullopt;

  std::string body = trim(item.substr(0, key_pos));
  const std::string prefix = trim(pattern.substr(0, text_at));
  if (!prefix.empty() && ifind(body, prefix) == 0) {
    body = trim(body.substr(prefix.size()));
  } else {
    // Tolerate a near-miss field tag ("Review:" for a "Reviews:" template).
    size_t colon = 0;
    while (colon < body.size() && std::isalpha(static_cast<unsigned char>(body[colon]))) ++colon;
    if (colon > 0 && colon < body.size() && body[colon] == ':') body = trim(body.substr(colon + 1));
  }
  if (body.empty()) return std::nullopt;

  LabeledExample ex;
  ex.text = body;
  ex.label = *label;
  ex.pseudo = true;
  return ex;
}

// Pair grammar: split the item around the earliest standalone verbalizer
// token; the template literals around the mask slot are stripped from the two
// halves.
std::optional<LabeledExample> parse_pair_item(const std::string& item, const TaskSpec& task) {
  const std::string& pattern = *task.tmpl.pair_pattern;
  const size_t mask_at = pattern.find(TemplateSpec::kMaskSlot);
  const size_t s2_at = pattern.find(TemplateSpec::kText2Slot);
  const std::string after_mask =
      mask_at != std::string::npos && s2_at != std::string::npos && s2_at > mask_at
          ? pattern.substr(mask_at + TemplateSpec::kMaskSlot.size(),
                           s2_at - mask_at - TemplateSpec::kMaskSlot.size())
          : std::string();

  size_t best_pos = std::string::npos;
  int best_label = -1;
  size_t best_len = 0;
  for (size_t c = 0; c < task.verbalizer.tokens.size(); ++c) {
    const std::string& token = task.verbalizer.tokens[c];
    size_t search = 0;
    while (true) {
      const size_t at = ifind(item, token, search);
      if (at == std::string::npos) break;
      if (standalone_at(item, at, token.size()) && at < best_pos) {
        best_pos = at;
        best_label = static_cast<int>(c);
        best_len = token.size();
        break;
      }
      search = at + 1;
    }
  }
  if (best_label < 0) return std::nullopt;

  LabeledExample ex;
  ex.text = strip_edge_punct(item.substr(0, best_pos));
  std::string rest = item.substr(best_pos + best_len);
  // Consume the template words between the mask and the second sentence
  // ("I believe", "Yes", ...).
  size_t cursor = 0;
  const auto skip_separators = [&]() {
    while (cursor < rest.size() && (std::isspace(static_cast<unsigned char>(rest[cursor])) ||
                                    std::ispunct(static_cast<unsigned char>(rest[cursor])))) {
      ++cursor;
    }
  };
  skip_separators();
  for (const auto& word : split_words(after_mask)) {
    if (ifind(rest, word, cursor) == cursor &&
        standalone_at(rest, cursor, word.size())) {
      cursor += word.size();
      skip_separators();
    }
  }
  ex.text2 = strip_edge_punct(rest.substr(cursor));
  if (ex.text.empty() || ex.text2.empty()) return std::nullopt;
  ex.label = best_label;
  ex.pseudo = true;
  return ex;
}

}  // namespace

std::vector<LabeledExample> parse_generation(const std::string& text, const TaskSpec& task,
                                             int n) {
  std::vector<LabeledExample> out;
  const bool pair = task.tmpl.pair_pattern.has_value();
  for (const auto& item : split_numbered_items(text)) {
    if (static_cast<int>(out.size()) >= n) break;
    const auto parsed = pair ? parse_pair_item(item, task) : parse_single_item(item, task);
    if (parsed) out.push_back(*parsed);
  }
  return out;
}

namespace {

std::vector<LabeledExample> generate_step(Provider& provider, std::vector<ChatMessage>& messages,
                                          const TaskSpec& task, DialogueTranscript& transcript) {
  const int n = task.generations_per_round;
  std::string reply = provider.chat(messages);
  messages.push_back(ChatMessage{Role::kAssistant, reply});
  std::vector<LabeledExample> batch = parse_generation(reply, task, n);
  if (static_cast<int>(batch.size()) < n) {
    // One re-ask on a short batch, then accept whatever parses best.
    messages.push_back(ChatMessage{
        Role::kUser, "Please resend exactly " + std::to_string(n) +
                         " numbered samples in the same format as before."});
    reply = provider.chat(messages);
    messages.push_back(ChatMessage{Role::kAssistant, reply});
    std::vector<LabeledExample> retry = parse_generation(reply, task, n);
    if (retry.size() > batch.size()) batch = std::move(retry);
  }
  transcript.batches.push_back(batch);
  return batch;
}

}  // namespace

RoundResult run_dialogue_round(Provider& provider, const std::vector<LabeledExample>& seeds,
                               const TaskSpec& task, int round_index) {
  if (static_cast<int>(seeds.size()) != task.seed_set_size) {
    throw ConfigError("dialogue round expects " + std::to_string(task.seed_set_size) +
                      " seeds, got " + std::to_string(seeds.size()));
  }
  RoundResult result;
  result.transcript.round = round_index;
  std::vector<ChatMessage>& messages = result.transcript.messages;
  messages = build_initial_message(seeds[0], seeds[1], task);

  std::vector<LabeledExample> batch =
      generate_step(provider, messages, task, result.transcript);
  for (size_t num = 2; num < seeds.size(); ++num) {
    messages.push_back(build_rewrite_message(seeds[num], task));
    batch = generate_step(provider, messages, task, result.transcript);
  }

  result.prompts.reserve(batch.size());
  for (const auto& ex : batch) result.prompts.push_back(render_prompt(ex, task));
  return result;
}

namespace {

json transcript_to_json(const DialogueTranscript& transcript, const TaskSpec& task) {
  json doc;
  doc["round"] = transcript.round;
  json messages = json::array();
  for (const auto& m : transcript.messages) {
    messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  doc["messages"] = std::move(messages);
  json batches = json::array();
  for (const auto& batch : transcript.batches) {
    json items = json::array();
    for (const auto& ex : batch) {
      json item;
      if (ex.is_pair()) {
        item["text1"] = ex.text;
        item["text2"] = ex.text2;
      } else {
        item["text"] = ex.text;
      }
      item["label"] = task.label_space.name(ex.label);
      item["pseudo"] = ex.pseudo;
      items.push_back(std::move(item));
    }
    batches.push_back(std::move(items));
  }
  doc["batches"] = std::move(batches);
  return doc;
}

}  // namespace

ConstructionResult construct_prompt_set(Provider& provider,
                                        const std::vector<LabeledExample>& train,
                                        const TaskSpec& task, const ConstructOptions& options) {
  task.validate();
  const SeedSelection seeds = select_seed_set(provider, train, task, options.jobs);

  ConstructionResult result;
  std::mt19937_64 rng(mix64(options.seed ^ 0x6469616c6f67ull));
  for (int round = 0; round < task.round_max; ++round) {
    std::vector<LabeledExample> shuffled = seeds.examples;
    seeded_shuffle(shuffled, rng);
    RoundResult round_result;
    try {
      round_result = run_dialogue_round(provider, shuffled, task, round);
    } catch (const ProviderError& e) {
      throw PipelineError("prompt construction failed in round " + std::to_string(round) + " (" +
                              std::to_string(round) + " rounds completed): " + e.what(),
                          round);
    }
    for (size_t slot = 0; slot < round_result.prompts.size(); ++slot) {
      result.pool.push_back({round_result.prompts[slot], round, static_cast<int>(slot)});
    }
    if (static_cast<int>(round_result.prompts.size()) < task.generations_per_round) {
      std::cerr << "round " << round << " produced "
                << round_result.prompts.size() << "/" << task.generations_per_round
                << " candidates\n";
    }
    result.transcripts.push_back(std::move(round_result.transcript));
  }

  std::vector<Prompt> pool_prompts;
  pool_prompts.reserve(result.pool.size());
  for (const auto& entry : result.pool) pool_prompts.push_back(entry.prompt);
  const std::vector<RankedPrompt> ranked =
      rank_by_sue(provider, pool_prompts, train, task, /*exclude_self=*/false, options.jobs);

  const size_t take = std::min(static_cast<size_t>(task.prompt_set_size), ranked.size());
  if (take < static_cast<size_t>(task.prompt_set_size)) {
    std::cerr << "candidate pool below prompt_set_size: keeping " << take << " prompts\n";
  }
  for (size_t i = 0; i < take; ++i) {
    result.prompts.push_back(ranked[i].prompt);
    result.breakdowns.push_back(ranked[i].breakdown);
  }

  if (options.artifact_dir) {
    const std::filesystem::path dir = *options.artifact_dir;
    write_prompt_set(dir / "prompt_set.json", result.prompts, options.seed,
                     options.config_provenance);
    write_sue_report(dir / "sue_report.json", ranked);
    for (const auto& transcript : result.transcripts) {
      write_file(dir / "transcripts" / ("round_" + std::to_string(transcript.round) + ".json"),
                 transcript_to_json(transcript, task).dump(2) + "\n");
    }
  }
  return result;
}

}  // namespace promptrl
