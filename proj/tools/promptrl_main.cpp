#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "promptrl/errors.hpp"
#include "promptrl/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitProvider = 3;
constexpr int kExitInternal = 4;

struct CommonArgs {
  std::string config_path;
  std::string task_name;
  std::optional<std::string> provider_kind;
  std::optional<uint64_t> seed;
  std::optional<std::string> cache;  // on | off
  std::optional<std::string> cache_dir;
  std::optional<std::string> out_dir;
  std::optional<int> state_dim;
  std::optional<int> hidden_dim;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr;
  std::optional<double> entropy_coef;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<int> m;
  std::optional<int> n;
  std::optional<int> h;
  std::optional<int> round_max;
  std::optional<int> top_k;
  std::optional<int> jobs;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->set_help_flag("--help", "print this help message and exit");
  cmd->add_option("--config", args.config_path, "JSON run configuration file");
  cmd->add_option("--task", args.task_name, "task preset (sst-2, yelp, mr, cr, rte, qnli, mrpc)");
  cmd->add_option("--provider", args.provider_kind, "provider kind: http or mock")
      ->check(CLI::IsMember({"http", "mock"}));
  cmd->add_option("--seed", args.seed, "global run seed");
  cmd->add_option("--cache", args.cache, "response cache: on or off")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--cache-dir", args.cache_dir, "response cache directory");
  cmd->add_option("--out", args.out_dir, "artifact directory");
  cmd->add_option("--state-dim", args.state_dim, "embedding/state dimension");
  cmd->add_option("--hidden-dim", args.hidden_dim, "policy hidden dimension");
  cmd->add_option("--epochs", args.epochs, "training epochs");
  cmd->add_option("--batch-size", args.batch_size, "training minibatch size");
  cmd->add_option("--lr", args.lr, "initial learning rate");
  cmd->add_option("--entropy-coef", args.entropy_coef, "entropy bonus coefficient");
  cmd->add_option("--lambda1", args.lambda1, "supervision weight in the SUE score");
  cmd->add_option("--lambda2", args.lambda2, "entropy weight in the SUE score");
  cmd->add_option("--m", args.m, "seed-set size");
  cmd->add_option("--n", args.n, "generations per dialogue round");
  cmd->add_option("--h", args.h, "final prompt-set size");
  cmd->add_option("--round-max", args.round_max, "number of dialogue rounds");
  cmd->add_option("--top-k", args.top_k, "default ensemble size stored in the task");
  cmd->add_option("--jobs", args.jobs, "provider fan-out bound")->check(CLI::PositiveNumber);
}

promptrl::RunConfig resolve_config(const CommonArgs& args) {
  promptrl::RunConfig config;
  if (!args.config_path.empty()) {
    config = promptrl::load_run_config(args.config_path);
  } else {
    config = promptrl::default_run_config(args.task_name.empty() ? "sst-2" : args.task_name);
  }
  if (!args.config_path.empty() && !args.task_name.empty()) {
    config.task = promptrl::task_preset(args.task_name);
  }
  if (args.provider_kind) config.provider.kind = *args.provider_kind;
  if (args.seed) config.seed = *args.seed;
  if (args.cache) config.provider.cache_enabled = (*args.cache == "on");
  if (args.cache_dir) config.provider.cache_dir = *args.cache_dir;
  if (config.provider.cache_enabled && config.provider.cache_dir.empty()) {
    config.provider.cache_dir = (std::filesystem::path(config.artifact_dir) / "cache").string();
  }
  if (args.out_dir) config.artifact_dir = *args.out_dir;
  if (args.state_dim) config.provider.state_dim = *args.state_dim;
  if (args.hidden_dim) config.train.hidden_dim = *args.hidden_dim;
  if (args.epochs) config.train.epochs = *args.epochs;
  if (args.batch_size) config.train.batch_size = *args.batch_size;
  if (args.lr) config.train.lr0 = *args.lr;
  if (args.entropy_coef) config.train.entropy_coef = *args.entropy_coef;
  if (args.lambda1) config.task.lambda1 = *args.lambda1;
  if (args.lambda2) config.task.lambda2 = *args.lambda2;
  if (args.m) config.task.seed_set_size = *args.m;
  if (args.n) config.task.generations_per_round = *args.n;
  if (args.h) config.task.prompt_set_size = *args.h;
  if (args.round_max) config.task.round_max = *args.round_max;
  if (args.top_k) config.task.top_k = *args.top_k;
  if (args.jobs) config.jobs = *args.jobs;
  // A shrunken prompt set caps the preset's default ensemble size.
  if (args.h && !args.top_k) {
    config.task.top_k = std::min(config.task.top_k, config.task.prompt_set_size);
  }
  config.train.seed = config.seed;
  config.train.state_dim = config.provider.state_dim;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discrete prompt optimization pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string train_path;
  std::string test_path;
  std::string prompts_path;
  std::string checkpoint_path;
  std::string resume_path;
  std::string input_text;
  std::string input_text2;
  std::optional<int> top_k;

  CLI::App* seed_select = app.add_subcommand(
      "seed-select", "rank training examples by SUE and keep the top-m seed set");
  add_common_flags(seed_select, args);
  seed_select->add_option("--train", train_path, "training dataset (jsonl)")->required();

  CLI::App* generate = app.add_subcommand(
      "generate", "construct the prompt set via multi-round dialogue and SUE screening");
  add_common_flags(generate, args);
  generate->add_option("--train", train_path, "training dataset (jsonl)")->required();

  CLI::App* train_cmd =
      app.add_subcommand("train", "train the prompt-matching policy network");
  add_common_flags(train_cmd, args);
  train_cmd->add_option("--train", train_path, "training dataset (jsonl)")->required();
  train_cmd->add_option("--prompts", prompts_path, "prompt-set artifact")->required();
  train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate ensemble predictions on a test set");
  add_common_flags(eval_cmd, args);
  eval_cmd->add_option("--test", test_path, "test dataset (jsonl)")->required();
  eval_cmd->add_option("--prompts", prompts_path, "prompt-set artifact")->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  eval_cmd->add_option("--k", top_k, "how many prompts to ensemble");

  CLI::App* predict = app.add_subcommand("predict", "predict one input");
  add_common_flags(predict, args);
  predict->add_option("--prompts", prompts_path, "prompt-set artifact")->required();
  predict->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  predict->add_option("--text", input_text, "input text")->required();
  predict->add_option("--text2", input_text2, "second sentence for pair tasks");
  predict->add_option("--k", top_k, "how many prompts to ensemble");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    const promptrl::RunConfig config = resolve_config(args);
    if (seed_select->parsed()) {
      promptrl::run_seed_select(config, train_path);
    } else if (generate->parsed()) {
      promptrl::run_generate(config, train_path);
    } else if (train_cmd->parsed()) {
      std::optional<std::filesystem::path> resume;
      if (!resume_path.empty()) resume = resume_path;
      promptrl::run_train(config, train_path, prompts_path, resume);
    } else if (eval_cmd->parsed()) {
      promptrl::run_eval(config, checkpoint_path, prompts_path, test_path, top_k);
    } else if (predict->parsed()) {
      const auto record =
          promptrl::run_predict(config, checkpoint_path, prompts_path, input_text, input_text2,
                                top_k);
      std::cout << record.dump(2) << "\n";
    }
    return kExitOk;
  } catch (const promptrl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const promptrl::ProviderError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return kExitProvider;
  } catch (const promptrl::InvariantError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
