#include "promptrl/http_provider.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "promptrl/errors.hpp"

namespace promptrl {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string base;  // scheme://host:port
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const size_t scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint is not a URL: " + url);
  const size_t path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, "/"};
  return {url.substr(0, path), url.substr(path)};
}

}  // namespace

HttpProvider::HttpProvider(ProviderConfig config) : config_(std::move(config)) {
  config_.validate();
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
  }
}

std::string HttpProvider::identity() const {
  return "http:" + config_.score_endpoint + ":" + config_.embed_endpoint + ":" +
         config_.chat_endpoint + ":" + config_.scorer_model + ":" + config_.embedder_model +
         ":" + config_.generator_model + ":" + config_.scoring_position + ":" +
         config_.embedding_pooling;
}

std::string HttpProvider::post_json(const std::string& endpoint, const std::string& body) {
  const SplitUrl url = split_url(endpoint);
  httplib::Client client(url.base);
  client.set_connection_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
  client.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
  client.set_write_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const int backoff_ms = std::min(100 << (attempt - 1), 2000);
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
    }
    auto res = client.Post(url.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server error " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProviderError("request to " + endpoint + " failed with status " +
                          std::to_string(res->status));
    }
    return res->body;
  }
  throw ProviderError("request to " + endpoint + " failed after " +
                      std::to_string(config_.max_retries + 1) + " attempts (" + last_error + ")");
}

LabelDistribution HttpProvider::score_labels_impl(const std::string& query_text,
                                                  const TaskSpec& task) {
  json request;
  request["model"] = config_.scorer_model;
  request["query"] = query_text;
  request["verbalizer_tokens"] = task.verbalizer.tokens;
  request["position"] = config_.scoring_position;
  const std::string body = post_json(config_.score_endpoint, request.dump());
  json response;
  try {
    response = json::parse(body);
    const auto masses = response.at("token_probs").get<std::vector<double>>();
    if (static_cast<int>(masses.size()) != task.num_labels()) {
      throw ProviderError("scorer returned " + std::to_string(masses.size()) +
                          " token probabilities, expected " + std::to_string(task.num_labels()));
    }
    LabelDistribution dist = normalize_masses(masses);
    count_scoring_call();
    return dist;
  } catch (const json::exception& e) {
    throw ProviderError("invalid scorer response: " + std::string(e.what()));
  }
}

StateVector HttpProvider::embed_impl(const std::string& input_text) {
  json request;
  request["model"] = config_.embedder_model;
  request["text"] = input_text;
  request["pooling"] = config_.embedding_pooling;
  const std::string body = post_json(config_.embed_endpoint, request.dump());
  try {
    const json response = json::parse(body);
    StateVector state;
    state.values = response.at("vector").get<std::vector<double>>();
    if (state.dim() != config_.state_dim) {
      throw ConfigError("embedder returned dimension " + std::to_string(state.dim()) +
                        ", configured state_dim is " + std::to_string(config_.state_dim));
    }
    return state;
  } catch (const json::exception& e) {
    throw ProviderError("invalid embedder response: " + std::string(e.what()));
  }
}

std::string HttpProvider::chat_impl(const std::vector<ChatMessage>& messages) {
  json request;
  request["model"] = config_.generator_model;
  json msgs = json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  request["messages"] = std::move(msgs);
  const std::string body = post_json(config_.chat_endpoint, request.dump());
  try {
    const json response = json::parse(body);
    return response.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError("invalid chat response: " + std::string(e.what()));
  }
}

}  // namespace promptrl
