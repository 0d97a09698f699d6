#pragma once

#include "promptrl/provider.hpp"

namespace promptrl {

/// HTTP-backed provider speaking three JSON-over-POST routes:
///   chat:  {model, messages:[{role, content}]} -> {choices:[{message:{content}}]}
///   score: {model, query, verbalizer_tokens, position} -> {token_probs:[...]}
///   embed: {model, text, pooling} -> {vector:[...]}
/// The chat route is the de-facto open chat-completions shape; score/embed are
/// the contract a thin sidecar adapts a real PLM to. Requests are retried with
/// exponential backoff on transport errors and 5xx responses. The API key is
/// read from the environment variable named in the config and never logged.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(ProviderConfig config);

  std::string identity() const override;

 protected:
  LabelDistribution score_labels_impl(const std::string& query_text,
                                      const TaskSpec& task) override;
  StateVector embed_impl(const std::string& input_text) override;
  std::string chat_impl(const std::vector<ChatMessage>& messages) override;

 private:
  std::string post_json(const std::string& endpoint, const std::string& body);

  ProviderConfig config_;
  std::string api_key_;
};

}  // namespace promptrl
