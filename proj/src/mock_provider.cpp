#include "promptrl/mock_provider.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "promptrl/errors.hpp"
#include "promptrl/util.hpp"

namespace promptrl {

namespace {

// Signed unit value in [-1, 1) derived from a hash.
double hash_to_signed_unit(uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

// Small review-flavored lexicon for synthesized generation bodies.
constexpr const char* kLexicon[] = {
    "plot",      "pacing",    "script",   "acting",    "visuals",  "score",
    "dialogue",  "ending",    "humor",    "tension",   "casting",  "editing",
    "bland",     "vivid",     "tedious",  "gripping",  "shallow",  "earnest",
    "clumsy",    "polished",  "hollow",   "charming",  "absurd",   "sincere",
    "drags",     "shines",    "falters",  "delights",  "bores",    "surprises",
    "wanders",   "resonates", "overall",  "somewhat",  "truly",    "barely",
    "service",   "battery",   "design",   "interface", "quality",  "texture",
    "flavour",   "portions",  "staff",    "value",     "comfort",  "finish",
};
constexpr size_t kLexiconSize = sizeof(kLexicon) / sizeof(kLexicon[0]);

std::optional<int> requested_count(const std::string& message) {
  const size_t at = ifind(message, "generate");
  if (at == std::string::npos) return std::nullopt;
  size_t i = at + 8;
  while (i < message.size() && !std::isdigit(static_cast<unsigned char>(message[i]))) {
    if (std::isalpha(static_cast<unsigned char>(message[i]))) return std::nullopt;
    ++i;
  }
  if (i >= message.size()) return std::nullopt;
  int value = 0;
  while (i < message.size() && std::isdigit(static_cast<unsigned char>(message[i]))) {
    value = value * 10 + (message[i] - '0');
    ++i;
  }
  return value > 0 ? std::optional<int>(value) : std::nullopt;
}

}  // namespace

MockProvider::MockProvider(uint64_t seed, int state_dim) : seed_(seed), state_dim_(state_dim) {
  if (state_dim_ < 1) throw ConfigError("mock state_dim must be positive");
}

MockProvider::MockProvider(uint64_t seed, int state_dim, TaskSpec generation_task)
    : MockProvider(seed, state_dim) {
  generation_task_ = std::move(generation_task);
}

void MockProvider::script_chat_reply(std::string reply) {
  std::lock_guard<std::mutex> lock(script_mutex_);
  scripted_.push_back(std::move(reply));
}

std::string MockProvider::identity() const {
  return "mock:" + std::to_string(seed_) + ":" + std::to_string(state_dim_);
}

LabelDistribution MockProvider::score_labels_impl(const std::string& query_text,
                                                  const TaskSpec& task) {
  std::string stripped = query_text;
  replace_all(stripped, TemplateSpec::kMaskSlot, " ");
  const std::vector<std::string> words = split_words(stripped);
  std::vector<double> masses;
  masses.reserve(task.verbalizer.tokens.size());
  for (const auto& token : task.verbalizer.tokens) {
    const uint64_t label_key = fnv1a64(token, mix64(seed_ ^ 0x73636f7265ull));
    double affinity = 0.0;
    for (const auto& w : words) {
      affinity += hash_to_signed_unit(mix64(fnv1a64(w, label_key)));
    }
    masses.push_back(1.0 / (1.0 + std::exp(-affinity)));
  }
  LabelDistribution dist = normalize_masses(masses);
  count_scoring_call();
  return dist;
}

StateVector MockProvider::embed_impl(const std::string& input_text) {
  StateVector state;
  state.values.assign(static_cast<size_t>(state_dim_), 0.0);
  const uint64_t base = mix64(seed_ ^ 0x656d626564ull);
  for (const auto& w : split_words(input_text)) {
    const uint64_t h = mix64(fnv1a64(w, base));
    const size_t slot = static_cast<size_t>(h % static_cast<uint64_t>(state_dim_));
    const double sign = (h >> 63) ? 1.0 : -1.0;
    state.values[slot] += sign;
  }
  double norm = 0.0;
  for (const double v : state.values) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& v : state.values) v /= norm;
  } else {
    state.values[0] = 1.0;
  }
  return state;
}

std::string MockProvider::chat_impl(const std::vector<ChatMessage>& messages) {
  chat_calls_.fetch_add(1);
  {
    std::lock_guard<std::mutex> lock(script_mutex_);
    if (!scripted_.empty()) {
      std::string reply = std::move(scripted_.front());
      scripted_.pop_front();
      return reply;
    }
  }
  uint64_t stream = mix64(seed_ ^ 0x63686174ull);
  for (const auto& m : messages) {
    stream = fnv1a64(role_name(m.role), stream);
    stream = fnv1a64("\x1f", stream);
    stream = fnv1a64(m.content, stream);
    stream = fnv1a64("\x1e", stream);
  }
  stream = mix64(stream);
  if (!generation_task_) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "mock-reply-%016llx",
                  static_cast<unsigned long long>(stream));
    return buf;
  }
  return synthesize_generation(messages, stream);
}

std::string MockProvider::synthesize_generation(const std::vector<ChatMessage>& messages,
                                                uint64_t stream) const {
  const TaskSpec& task = *generation_task_;
  std::mt19937_64 rng(stream);

  const auto fresh_item = [&]() {
    LabeledExample ex;
    const size_t len = 4 + bounded_rand(rng, 4);
    for (size_t i = 0; i < len; ++i) {
      if (i > 0) ex.text += " ";
      ex.text += kLexicon[bounded_rand(rng, kLexiconSize)];
    }
    if (task.tmpl.pair_pattern) {
      ex.text2 = ex.text;
      ex.text = "the " + std::string(kLexicon[bounded_rand(rng, kLexiconSize)]) + " holds";
    }
    ex.label = static_cast<int>(bounded_rand(rng, static_cast<uint64_t>(task.num_labels())));
    ex.pseudo = true;
    return render_prompt(ex, task).rendered_text + ".";
  };

  int n = task.generations_per_round;
  if (const auto req = requested_count(messages.back().content)) n = *req;

  // Rewrite turns keep the previous batch and replace three samples, matching
  // the alignment instruction; the previous batch is read from the history.
  std::vector<std::string> items;
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::kAssistant) {
      items = split_numbered_items(it->content);
      break;
    }
  }
  if (items.empty()) {
    items.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) items.push_back(fresh_item());
  } else {
    while (static_cast<int>(items.size()) < n) items.push_back(fresh_item());
    if (static_cast<int>(items.size()) > n) items.resize(static_cast<size_t>(n));
    const size_t replacements = std::min<size_t>(3, items.size());
    for (size_t i = 0; i < replacements; ++i) {
      items[bounded_rand(rng, items.size())] = fresh_item();
    }
  }

  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    out += std::to_string(i + 1) + ". " + items[i] + "\n";
  }
  return out;
}

}  // namespace promptrl
