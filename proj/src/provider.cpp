#include "promptrl/provider.hpp"

#include <atomic>
#include <cmath>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "promptrl/errors.hpp"
#include "promptrl/util.hpp"

namespace promptrl {

namespace {

std::atomic<uint64_t> g_scoring_calls{0};

constexpr double kDistributionTolerance = 1e-9;

}  // namespace

void validate_distribution(const LabelDistribution& dist, int num_labels) {
  if (dist.size() != num_labels) {
    throw InvariantError("label distribution has " + std::to_string(dist.size()) +
                         " entries, expected " + std::to_string(num_labels));
  }
  double sum = 0.0;
  for (const double p : dist.probs) {
    if (!std::isfinite(p) || p < 0.0) {
      throw InvariantError("label distribution entry out of range");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kDistributionTolerance) {
    throw InvariantError("label distribution sums to " + std::to_string(sum));
  }
}

LabelDistribution normalize_masses(const std::vector<double>& masses) {
  double total = 0.0;
  for (const double m : masses) {
    if (!std::isfinite(m) || m < 0.0) {
      throw ProviderError("degenerate response: invalid verbalizer token mass");
    }
    total += m;
  }
  if (!(total > 0.0)) {
    throw ProviderError("degenerate response: zero mass on all verbalizer tokens");
  }
  LabelDistribution dist;
  dist.probs.reserve(masses.size());
  for (const double m : masses) dist.probs.push_back(m / total);
  return dist;
}

std::string role_name(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  throw InvariantError("unreachable chat role");
}

Role role_from_name(std::string_view name) {
  if (name == "system") return Role::kSystem;
  if (name == "user") return Role::kUser;
  if (name == "assistant") return Role::kAssistant;
  throw ConfigError("unknown chat role: " + std::string(name));
}

void ProviderConfig::validate() const {
  if (kind != "mock" && kind != "http") throw ConfigError("provider kind must be mock or http");
  if (timeout_ms <= 0) throw ConfigError("provider timeout must be positive");
  if (max_retries < 0) throw ConfigError("provider max_retries must be non-negative");
  if (state_dim < 1) throw ConfigError("provider state_dim must be positive");
  if (cache_enabled && cache_dir.empty()) {
    throw ConfigError("cache is enabled but cache_dir is empty");
  }
  if (kind == "http" && (chat_endpoint.empty() || score_endpoint.empty() || embed_endpoint.empty())) {
    throw ConfigError("http provider requires chat, score and embed endpoints");
  }
}

LabelDistribution Provider::score_labels(const std::string& query_text, const TaskSpec& task) {
  if (query_text.empty()) throw ConfigError("scoring query must be non-empty");
  const size_t masks = count_occurrences(query_text, TemplateSpec::kMaskSlot);
  if (masks > 1) {
    throw ConfigError("scoring query must contain at most one unresolved mask slot");
  }
  LabelDistribution dist = score_labels_impl(query_text, task);
  validate_distribution(dist, task.num_labels());
  return dist;
}

StateVector Provider::embed(const std::string& input_text) {
  if (input_text.empty()) throw ConfigError("embedding input must be non-empty");
  StateVector state = embed_impl(input_text);
  for (const double v : state.values) {
    if (!std::isfinite(v)) throw ProviderError("embedding contains non-finite values");
  }
  return state;
}

std::string Provider::chat(const std::vector<ChatMessage>& messages) {
  if (messages.empty()) throw ConfigError("chat requires at least one message");
  if (messages.back().role != Role::kUser) {
    throw ConfigError("last chat message must come from the user");
  }
  for (const auto& m : messages) {
    if (m.role != Role::kSystem && m.content.empty()) {
      throw ConfigError("chat messages must be non-empty");
    }
  }
  std::string reply = chat_impl(messages);
  if (trim(reply).empty()) throw ProviderError("degenerate response: empty completion");
  return reply;
}

uint64_t scoring_call_count() { return g_scoring_calls.load(); }

void reset_scoring_call_count() { g_scoring_calls.store(0); }

void count_scoring_call() { g_scoring_calls.fetch_add(1); }

std::string cache_key(std::string_view kind, const nlohmann::json& payload) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  const std::string body = std::string(kind) + "\n" + payload.dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  if (EVP_Digest(body.data(), body.size(), digest, &digest_len, EVP_sha256(), nullptr) != 1) {
    throw InvariantError("sha256 digest failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(digest_len * 2);
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace promptrl
