#include "promptrl/cache.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "promptrl/errors.hpp"
#include "promptrl/util.hpp"

namespace promptrl {

using nlohmann::json;

CachedProvider::CachedProvider(std::unique_ptr<Provider> inner, std::filesystem::path cache_dir)
    : inner_(std::move(inner)), dir_(std::move(cache_dir)) {
  if (!inner_) throw ConfigError("cache requires an inner provider");
  if (dir_.empty()) throw ConfigError("cache directory must not be empty");
  std::filesystem::create_directories(dir_);
}

std::string CachedProvider::identity() const { return inner_->identity(); }

std::optional<std::string> CachedProvider::lookup(const std::string& key) const {
  const std::filesystem::path path = dir_ / (key + ".json");
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

void CachedProvider::store(const std::string& key, const std::string& content) {
  std::lock_guard<std::mutex> lock(write_mutex_);
  write_file_atomic(dir_ / (key + ".json"), content);
}

LabelDistribution CachedProvider::score_labels_impl(const std::string& query_text,
                                                    const TaskSpec& task) {
  json payload;
  payload["identity"] = inner_->identity();
  payload["query"] = query_text;
  payload["verbalizer_tokens"] = task.verbalizer.tokens;
  const std::string key = cache_key("score_labels", payload);
  if (const auto hit = lookup(key)) {
    hits_.fetch_add(1);
    LabelDistribution dist;
    dist.probs = json::parse(*hit).at("probs").get<std::vector<double>>();
    return dist;
  }
  misses_.fetch_add(1);
  LabelDistribution dist = inner_->score_labels(query_text, task);
  json entry;
  entry["probs"] = dist.probs;
  store(key, entry.dump());
  return dist;
}

StateVector CachedProvider::embed_impl(const std::string& input_text) {
  json payload;
  payload["identity"] = inner_->identity();
  payload["text"] = input_text;
  const std::string key = cache_key("embed", payload);
  if (const auto hit = lookup(key)) {
    hits_.fetch_add(1);
    StateVector state;
    state.values = json::parse(*hit).at("vector").get<std::vector<double>>();
    return state;
  }
  misses_.fetch_add(1);
  StateVector state = inner_->embed(input_text);
  json entry;
  entry["vector"] = state.values;
  store(key, entry.dump());
  return state;
}

std::string CachedProvider::chat_impl(const std::vector<ChatMessage>& messages) {
  json payload;
  payload["identity"] = inner_->identity();
  json msgs = json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  payload["messages"] = std::move(msgs);
  const std::string key = cache_key("chat", payload);
  if (const auto hit = lookup(key)) {
    hits_.fetch_add(1);
    return json::parse(*hit).at("content").get<std::string>();
  }
  misses_.fetch_add(1);
  const std::string reply = inner_->chat(messages);
  json entry;
  entry["content"] = reply;
  store(key, entry.dump());
  return reply;
}

}  // namespace promptrl
