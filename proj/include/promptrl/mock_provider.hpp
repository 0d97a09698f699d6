#pragma once

#include <atomic>
#include <deque>
#include <mutex>
#include <optional>

#include "promptrl/provider.hpp"

namespace promptrl {

/// Deterministic offline stand-in for a real LM stack. Every response is a
/// pure function of (seed, request):
///   - scoring: seeded-hash bag-of-words affinity between the query and a key
///     vector per verbalizer token, squashed through a logistic and
///     renormalized;
///   - embedding: seeded feature hashing of unigrams into state_dim, scaled
///     to unit norm;
///   - chat: synthesizes numbered pseudo-labeled samples shaped by the
///     configured generation task (scripted replies, when queued, take
///     precedence and are consumed FIFO).
class MockProvider : public Provider {
 public:
  explicit MockProvider(uint64_t seed, int state_dim = 1024);
  MockProvider(uint64_t seed, int state_dim, TaskSpec generation_task);

  /// Queue a fixed reply returned by the next chat call.
  void script_chat_reply(std::string reply);

  uint64_t chat_calls() const { return chat_calls_.load(); }
  uint64_t seed() const { return seed_; }

  std::string identity() const override;

 protected:
  LabelDistribution score_labels_impl(const std::string& query_text,
                                      const TaskSpec& task) override;
  StateVector embed_impl(const std::string& input_text) override;
  std::string chat_impl(const std::vector<ChatMessage>& messages) override;

 private:
  std::string synthesize_generation(const std::vector<ChatMessage>& messages,
                                    uint64_t stream) const;

  uint64_t seed_;
  int state_dim_;
  std::optional<TaskSpec> generation_task_;
  std::atomic<uint64_t> chat_calls_{0};
  mutable std::mutex script_mutex_;
  std::deque<std::string> scripted_;
};

}  // namespace promptrl
