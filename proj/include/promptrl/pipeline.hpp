#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "promptrl/ensemble.hpp"
#include "promptrl/policy.hpp"
#include "promptrl/provider.hpp"
#include "promptrl/task.hpp"

namespace promptrl {

/// Everything a pipeline stage needs: task, provider and training settings,
/// where to put artifacts and the global seed. The seed and the effective
/// task/provider/train settings are embedded in every emitted artifact.
struct RunConfig {
  TaskSpec task;
  ProviderConfig provider;
  TrainConfig train;
  std::string artifact_dir = "out";
  uint64_t seed = 42;
  int jobs = 1;  // provider fan-out bound for SUE scoring and evaluation

  void validate() const;
};

RunConfig default_run_config(const std::string& task_name = "sst-2");

/// Human-editable JSON config. A "task" object may name a {"preset": ...}
/// and override individual fields.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json run_config_to_json(const RunConfig& config);

/// Effective settings embedded in artifacts: excludes volatile paths and
/// cache switches so reruns in different directories stay byte-identical.
nlohmann::json provenance_json(const RunConfig& config);

/// Builds the configured provider; mock providers synthesize dialogue shaped
/// by the task, and caching wraps the result when enabled.
std::unique_ptr<Provider> make_provider(const RunConfig& config);

// Stage entry points: the CLI subcommands call these, and so do the
// integration tests.

void run_seed_select(const RunConfig& config, const std::filesystem::path& train_path);

void run_generate(const RunConfig& config, const std::filesystem::path& train_path);

void run_train(const RunConfig& config, const std::filesystem::path& train_path,
               const std::filesystem::path& prompt_set_path,
               const std::optional<std::filesystem::path>& resume_checkpoint = std::nullopt);

EvalResult run_eval(const RunConfig& config, const std::filesystem::path& checkpoint_path,
                    const std::filesystem::path& prompt_set_path,
                    const std::filesystem::path& test_path, std::optional<int> k = std::nullopt);

nlohmann::json run_predict(const RunConfig& config, const std::filesystem::path& checkpoint_path,
                           const std::filesystem::path& prompt_set_path, const std::string& text,
                           const std::string& text2 = "", std::optional<int> k = std::nullopt);

}  // namespace promptrl
