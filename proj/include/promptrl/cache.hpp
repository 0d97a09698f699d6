#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>

#include "promptrl/provider.hpp"

namespace promptrl {

/// On-disk response cache wrapping another provider. One file per key under
/// the cache directory, holding the canonical serialized response. Writes go
/// to a temp file and are renamed into place, so concurrent readers only ever
/// see complete entries. Cache hits bypass the inner provider entirely and do
/// not touch the scoring-call counter.
class CachedProvider : public Provider {
 public:
  CachedProvider(std::unique_ptr<Provider> inner, std::filesystem::path cache_dir);

  Provider& inner() { return *inner_; }
  uint64_t hits() const { return hits_; }
  uint64_t misses() const { return misses_; }

  std::string identity() const override;

 protected:
  LabelDistribution score_labels_impl(const std::string& query_text,
                                      const TaskSpec& task) override;
  StateVector embed_impl(const std::string& input_text) override;
  std::string chat_impl(const std::vector<ChatMessage>& messages) override;

 private:
  std::optional<std::string> lookup(const std::string& key) const;
  void store(const std::string& key, const std::string& content);

  std::unique_ptr<Provider> inner_;
  std::filesystem::path dir_;
  std::mutex write_mutex_;
  std::atomic<uint64_t> hits_{0};
  std::atomic<uint64_t> misses_{0};
};

}  // namespace promptrl
