#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "promptrl/task.hpp"

namespace promptrl {

/// Probabilities over class ids; entries sum to 1 within 1e-9.
struct LabelDistribution {
  std::vector<double> probs;

  int size() const { return static_cast<int>(probs.size()); }
};

void validate_distribution(const LabelDistribution& dist, int num_labels);

/// Renormalizes raw verbalizer-token masses into a LabelDistribution.
/// Throws ProviderError if the total mass is not positive and finite.
LabelDistribution normalize_masses(const std::vector<double>& masses);

struct StateVector {
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }
};

enum class Role { kSystem, kUser, kAssistant };

std::string role_name(Role role);
Role role_from_name(std::string_view name);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;
};

struct ProviderConfig {
  std::string kind = "mock";  // mock | http

  std::string chat_endpoint;
  std::string score_endpoint;
  std::string embed_endpoint;
  std::string scorer_model = "scorer";
  std::string embedder_model = "embedder";
  std::string generator_model = "generator";
  std::string api_key_env = "PROMPTRL_API_KEY";
  int timeout_ms = 30000;
  int max_retries = 3;
  std::string cache_dir;
  bool cache_enabled = false;
  int state_dim = 1024;
  // Hints forwarded to the scoring sidecar.
  std::string scoring_position = "mask";    // mask | mean
  std::string embedding_pooling = "final";  // final | mean
  uint64_t mock_seed = 0;                   // 0 = derive from the run seed

  void validate() const;
};

/// Uniform access to the three LM capabilities. Stateless per request: chat
/// callers pass the full message history. Implementations must be callable
/// from multiple threads concurrently.
class Provider {
 public:
  virtual ~Provider() = default;

  /// Probabilities of the verbalizer tokens at the query's label slot,
  /// renormalized over the verbalizer set. Counts one scoring call unless the
  /// response was served from a cache.
  LabelDistribution score_labels(const std::string& query_text, const TaskSpec& task);

  /// Fixed-dimension embedding, deterministic per provider and text.
  StateVector embed(const std::string& input_text);

  /// Assistant completion for the given history; last message must be a
  /// non-empty user message.
  std::string chat(const std::vector<ChatMessage>& messages);

  /// Stable identifier mixed into cache keys so responses from different
  /// backends or model settings never collide.
  virtual std::string identity() const = 0;

 protected:
  virtual LabelDistribution score_labels_impl(const std::string& query_text,
                                              const TaskSpec& task) = 0;
  virtual StateVector embed_impl(const std::string& input_text) = 0;
  virtual std::string chat_impl(const std::vector<ChatMessage>& messages) = 0;
};

// Process-global scoring-call counter; cache hits do not increment it.
uint64_t scoring_call_count();
void reset_scoring_call_count();
void count_scoring_call();

/// Content hash of a canonically serialized request payload. Identical
/// logical requests map to identical keys across runs; object key order in
/// the payload does not matter.
std::string cache_key(std::string_view kind, const nlohmann::json& payload);

}  // namespace promptrl
