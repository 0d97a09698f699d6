#include "promptrl/pipeline.hpp"

#include <iostream>

#include "promptrl/cache.hpp"
#include "promptrl/dialogue.hpp"
#include "promptrl/errors.hpp"
#include "promptrl/http_provider.hpp"
#include "promptrl/mock_provider.hpp"
#include "promptrl/util.hpp"

namespace promptrl {

using nlohmann::json;

void RunConfig::validate() const {
  task.validate();
  provider.validate();
  train.validate();
  if (provider.state_dim != train.state_dim) {
    throw ConfigError("provider state_dim and train state_dim must match");
  }
  if (artifact_dir.empty()) throw ConfigError("artifact_dir must not be empty");
  if (jobs < 1) throw ConfigError("jobs must be positive");
}

RunConfig default_run_config(const std::string& task_name) {
  RunConfig config;
  config.task = task_preset(task_name);
  config.train.entropy_coef = std::nullopt;  // defer to the task value
  return config;
}

namespace {

json task_to_json(const TaskSpec& task) {
  json doc;
  doc["name"] = task.name;
  doc["labels"] = task.label_space.labels;
  doc["verbalizer"] = task.verbalizer.tokens;
  doc["template"] = task.tmpl.pattern;
  if (task.tmpl.pair_pattern) doc["pair_template"] = *task.tmpl.pair_pattern;
  doc["lambda1"] = task.lambda1;
  doc["lambda2"] = task.lambda2;
  doc["top_k"] = task.top_k;
  doc["entropy_coef"] = task.entropy_coef;
  doc["seed_set_size"] = task.seed_set_size;
  doc["generations_per_round"] = task.generations_per_round;
  doc["round_max"] = task.round_max;
  doc["prompt_set_size"] = task.prompt_set_size;
  doc["separator"] = task.separator;
  doc["dialogue"] = {{"init", task.dialogue.init}, {"rewrite", task.dialogue.rewrite}};
  return doc;
}

TaskSpec task_from_json(const json& doc) {
  TaskSpec task;
  if (doc.contains("preset")) task = task_preset(doc["preset"].get<std::string>());
  if (doc.contains("name")) task.name = doc["name"].get<std::string>();
  if (doc.contains("labels")) task.label_space.labels = doc["labels"].get<std::vector<std::string>>();
  if (doc.contains("verbalizer")) task.verbalizer.tokens = doc["verbalizer"].get<std::vector<std::string>>();
  if (doc.contains("template")) task.tmpl.pattern = doc["template"].get<std::string>();
  if (doc.contains("pair_template")) {
    if (doc["pair_template"].is_null()) {
      task.tmpl.pair_pattern = std::nullopt;
    } else {
      task.tmpl.pair_pattern = doc["pair_template"].get<std::string>();
    }
  }
  if (doc.contains("lambda1")) task.lambda1 = doc["lambda1"].get<double>();
  if (doc.contains("lambda2")) task.lambda2 = doc["lambda2"].get<double>();
  if (doc.contains("top_k")) task.top_k = doc["top_k"].get<int>();
  if (doc.contains("entropy_coef")) task.entropy_coef = doc["entropy_coef"].get<double>();
  if (doc.contains("seed_set_size")) task.seed_set_size = doc["seed_set_size"].get<int>();
  if (doc.contains("generations_per_round")) {
    task.generations_per_round = doc["generations_per_round"].get<int>();
  }
  if (doc.contains("round_max")) task.round_max = doc["round_max"].get<int>();
  if (doc.contains("prompt_set_size")) task.prompt_set_size = doc["prompt_set_size"].get<int>();
  if (doc.contains("separator")) task.separator = doc["separator"].get<std::string>();
  if (doc.contains("dialogue")) {
    const json& d = doc["dialogue"];
    if (d.contains("init")) task.dialogue.init = d["init"].get<std::string>();
    if (d.contains("rewrite")) task.dialogue.rewrite = d["rewrite"].get<std::string>();
  }
  return task;
}

json provider_to_json(const ProviderConfig& p) {
  json doc;
  doc["kind"] = p.kind;
  doc["chat_endpoint"] = p.chat_endpoint;
  doc["score_endpoint"] = p.score_endpoint;
  doc["embed_endpoint"] = p.embed_endpoint;
  doc["scorer_model"] = p.scorer_model;
  doc["embedder_model"] = p.embedder_model;
  doc["generator_model"] = p.generator_model;
  doc["api_key_env"] = p.api_key_env;
  doc["timeout_ms"] = p.timeout_ms;
  doc["max_retries"] = p.max_retries;
  doc["cache_dir"] = p.cache_dir;
  doc["cache_enabled"] = p.cache_enabled;
  doc["state_dim"] = p.state_dim;
  doc["scoring_position"] = p.scoring_position;
  doc["embedding_pooling"] = p.embedding_pooling;
  doc["mock_seed"] = p.mock_seed;
  return doc;
}

ProviderConfig provider_from_json(const json& doc) {
  ProviderConfig p;
  if (doc.contains("kind")) p.kind = doc["kind"].get<std::string>();
  if (doc.contains("chat_endpoint")) p.chat_endpoint = doc["chat_endpoint"].get<std::string>();
  if (doc.contains("score_endpoint")) p.score_endpoint = doc["score_endpoint"].get<std::string>();
  if (doc.contains("embed_endpoint")) p.embed_endpoint = doc["embed_endpoint"].get<std::string>();
  if (doc.contains("scorer_model")) p.scorer_model = doc["scorer_model"].get<std::string>();
  if (doc.contains("embedder_model")) p.embedder_model = doc["embedder_model"].get<std::string>();
  if (doc.contains("generator_model")) {
    p.generator_model = doc["generator_model"].get<std::string>();
  }
  if (doc.contains("api_key_env")) p.api_key_env = doc["api_key_env"].get<std::string>();
  if (doc.contains("timeout_ms")) p.timeout_ms = doc["timeout_ms"].get<int>();
  if (doc.contains("max_retries")) p.max_retries = doc["max_retries"].get<int>();
  if (doc.contains("cache_dir")) p.cache_dir = doc["cache_dir"].get<std::string>();
  if (doc.contains("cache_enabled")) p.cache_enabled = doc["cache_enabled"].get<bool>();
  if (doc.contains("state_dim")) p.state_dim = doc["state_dim"].get<int>();
  if (doc.contains("scoring_position")) {
    p.scoring_position = doc["scoring_position"].get<std::string>();
  }
  if (doc.contains("embedding_pooling")) {
    p.embedding_pooling = doc["embedding_pooling"].get<std::string>();
  }
  if (doc.contains("mock_seed")) p.mock_seed = doc["mock_seed"].get<uint64_t>();
  return p;
}

json train_to_json(const TrainConfig& t) {
  json doc;
  doc["epochs"] = t.epochs;
  doc["batch_size"] = t.batch_size;
  doc["lr0"] = t.lr0;
  doc["adam_eps"] = t.adam_eps;
  doc["beta1"] = t.beta1;
  doc["beta2"] = t.beta2;
  doc["weight_decay"] = t.weight_decay;
  if (t.entropy_coef) {
    doc["entropy_coef"] = *t.entropy_coef;
  } else {
    doc["entropy_coef"] = nullptr;
  }
  doc["gamma"] = t.gamma;
  doc["lr_floor"] = t.lr_floor;
  doc["hidden_dim"] = t.hidden_dim;
  doc["state_dim"] = t.state_dim;
  return doc;
}

TrainConfig train_from_json(const json& doc) {
  TrainConfig t;
  t.entropy_coef = std::nullopt;
  if (doc.contains("epochs")) t.epochs = doc["epochs"].get<int>();
  if (doc.contains("batch_size")) t.batch_size = doc["batch_size"].get<int>();
  if (doc.contains("lr0")) t.lr0 = doc["lr0"].get<double>();
  if (doc.contains("adam_eps")) t.adam_eps = doc["adam_eps"].get<double>();
  if (doc.contains("beta1")) t.beta1 = doc["beta1"].get<double>();
  if (doc.contains("beta2")) t.beta2 = doc["beta2"].get<double>();
  if (doc.contains("weight_decay")) t.weight_decay = doc["weight_decay"].get<double>();
  if (doc.contains("entropy_coef") && !doc["entropy_coef"].is_null()) {
    t.entropy_coef = doc["entropy_coef"].get<double>();
  }
  if (doc.contains("gamma")) t.gamma = doc["gamma"].get<double>();
  if (doc.contains("lr_floor")) t.lr_floor = doc["lr_floor"].get<double>();
  if (doc.contains("hidden_dim")) t.hidden_dim = doc["hidden_dim"].get<int>();
  if (doc.contains("state_dim")) t.state_dim = doc["state_dim"].get<int>();
  return t;
}

}  // namespace

RunConfig run_config_from_json(const json& doc) {
  RunConfig config;
  if (doc.contains("task")) {
    if (doc["task"].is_string()) {
      config.task = task_preset(doc["task"].get<std::string>());
    } else {
      config.task = task_from_json(doc["task"]);
    }
  }
  if (doc.contains("provider")) config.provider = provider_from_json(doc["provider"]);
  if (doc.contains("train")) config.train = train_from_json(doc["train"]);
  if (doc.contains("artifact_dir")) config.artifact_dir = doc["artifact_dir"].get<std::string>();
  if (doc.contains("seed")) config.seed = doc["seed"].get<uint64_t>();
  if (doc.contains("jobs")) config.jobs = doc["jobs"].get<int>();
  config.train.seed = config.seed;
  config.train.state_dim = config.provider.state_dim;
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("invalid config file " + path.string() + ": " + e.what());
  }
  return run_config_from_json(doc);
}

json run_config_to_json(const RunConfig& config) {
  json doc;
  doc["seed"] = config.seed;
  doc["artifact_dir"] = config.artifact_dir;
  doc["jobs"] = config.jobs;
  doc["task"] = task_to_json(config.task);
  doc["provider"] = provider_to_json(config.provider);
  doc["train"] = train_to_json(config.train);
  return doc;
}

json provenance_json(const RunConfig& config) {
  json doc;
  doc["seed"] = config.seed;
  doc["task"] = task_to_json(config.task);
  json provider = provider_to_json(config.provider);
  provider.erase("cache_dir");
  provider.erase("cache_enabled");
  doc["provider"] = provider;
  doc["train"] = train_to_json(config.train);
  return doc;
}

std::unique_ptr<Provider> make_provider(const RunConfig& config) {
  config.provider.validate();
  std::unique_ptr<Provider> provider;
  if (config.provider.kind == "mock") {
    const uint64_t seed =
        config.provider.mock_seed != 0 ? config.provider.mock_seed : config.seed;
    provider = std::make_unique<MockProvider>(seed, config.provider.state_dim, config.task);
  } else {
    provider = std::make_unique<HttpProvider>(config.provider);
  }
  if (config.provider.cache_enabled) {
    provider = std::make_unique<CachedProvider>(std::move(provider), config.provider.cache_dir);
  }
  return provider;
}

namespace {

std::filesystem::path artifact_path(const RunConfig& config, const std::string& name) {
  return std::filesystem::path(config.artifact_dir) / name;
}

// Prints the scoring calls issued by one command, not the process total.
class ScoringCallReport {
 public:
  ScoringCallReport() : start_(scoring_call_count()) {}
  void print() const {
    std::cout << "scoring calls: " << scoring_call_count() - start_ << "\n";
  }

 private:
  uint64_t start_;
};

}  // namespace

void run_seed_select(const RunConfig& config, const std::filesystem::path& train_path) {
  config.validate();
  const ScoringCallReport calls;
  const auto train_set = load_dataset(train_path, config.task);
  const auto provider = make_provider(config);
  const SeedSelection selection =
      select_seed_set(*provider, train_set, config.task, config.jobs);

  json doc;
  doc["seed"] = config.seed;
  doc["config"] = provenance_json(config);
  json items = json::array();
  for (size_t i = 0; i < selection.examples.size(); ++i) {
    const auto& ex = selection.examples[i];
    const auto& ranked = selection.ranked_train[i];
    json item;
    if (ex.is_pair()) {
      item["text1"] = ex.text;
      item["text2"] = ex.text2;
    } else {
      item["text"] = ex.text;
    }
    item["label"] = config.task.label_space.name(ex.label);
    item["pseudo"] = ex.pseudo;
    item["s_sup"] = ranked.breakdown.s_sup;
    item["s_uns"] = ranked.breakdown.s_uns;
    item["sue"] = ranked.breakdown.sue;
    items.push_back(std::move(item));
  }
  doc["examples"] = std::move(items);
  write_file(artifact_path(config, "seed_set.json"), doc.dump(2) + "\n");
  write_sue_report(artifact_path(config, "sue_report.json"), selection.ranked_train);
  std::cout << "seed set: " << selection.examples.size() << " examples -> "
            << artifact_path(config, "seed_set.json").string() << "\n";
  calls.print();
}

void run_generate(const RunConfig& config, const std::filesystem::path& train_path) {
  config.validate();
  const ScoringCallReport calls;
  const auto train_set = load_dataset(train_path, config.task);
  const auto provider = make_provider(config);
  ConstructOptions options;
  options.seed = config.seed;
  options.jobs = config.jobs;
  options.artifact_dir = std::filesystem::path(config.artifact_dir);
  options.config_provenance = provenance_json(config);
  const ConstructionResult result =
      construct_prompt_set(*provider, train_set, config.task, options);
  std::cout << "candidates: " << result.pool.size() << ", prompts kept: "
            << result.prompts.size() << " -> "
            << artifact_path(config, "prompt_set.json").string() << "\n";
  calls.print();
}

void run_train(const RunConfig& config, const std::filesystem::path& train_path,
               const std::filesystem::path& prompt_set_path,
               const std::optional<std::filesystem::path>& resume_checkpoint) {
  config.validate();
  const auto train_set = load_dataset(train_path, config.task);
  const auto prompts = load_prompt_set(prompt_set_path);
  const auto provider = make_provider(config);

  TrainState resume_state;
  const TrainState* resume = nullptr;
  if (resume_checkpoint) {
    resume_state = load_checkpoint(*resume_checkpoint);
    validate_checkpoint_dims(resume_state, config.train.state_dim,
                             static_cast<int>(prompts.size()));
    resume = &resume_state;
  }

  const auto write_report = [&](const std::vector<EpochStats>& report) {
    json doc;
    doc["seed"] = config.seed;
    doc["config"] = provenance_json(config);
    json rows = json::array();
    for (const auto& row : report) {
      rows.push_back({{"epoch", row.epoch},
                      {"mean_reward", row.mean_reward_raw},
                      {"loss", row.loss},
                      {"entropy", row.mean_entropy},
                      {"lr", row.lr}});
    }
    doc["epochs"] = std::move(rows);
    write_file(artifact_path(config, "train_report.json"), doc.dump(2) + "\n");
  };

  try {
    const TrainResult result = train(*provider, train_set, prompts, config.task, config.train, resume);
    save_checkpoint(result.state, artifact_path(config, "checkpoint.bin"));
    write_report(result.report);
    std::cout << "trained " << result.report.size() << " epochs -> "
              << artifact_path(config, "checkpoint.bin").string() << "\n";
  } catch (const TrainAborted& aborted) {
    const auto path = artifact_path(config, "checkpoint.bin");
    save_checkpoint(aborted.snapshot, path);
    throw ProviderError(std::string(aborted.what()) + "; resumable checkpoint written to " +
                        path.string() + " (epoch " + std::to_string(aborted.snapshot.next_epoch) +
                        ")");
  }
}

namespace {

struct LoadedModel {
  TrainState state;
  std::vector<Prompt> prompts;
};

LoadedModel load_model(const RunConfig& config, const std::filesystem::path& checkpoint_path,
                       const std::filesystem::path& prompt_set_path) {
  LoadedModel model;
  model.prompts = load_prompt_set(prompt_set_path);
  model.state = load_checkpoint(checkpoint_path);
  validate_checkpoint_dims(model.state, config.provider.state_dim,
                           static_cast<int>(model.prompts.size()));
  return model;
}

EnsembleOptions ensemble_options(const RunConfig& config, std::optional<int> k, int action_dim) {
  EnsembleOptions options;
  options.k = k.value_or(config.task.top_k);
  options.jobs = config.jobs;
  if (options.k < 1 || options.k > action_dim) {
    throw ConfigError("top-k " + std::to_string(options.k) + " outside [1, " +
                      std::to_string(action_dim) + "]");
  }
  return options;
}

}  // namespace

EvalResult run_eval(const RunConfig& config, const std::filesystem::path& checkpoint_path,
                    const std::filesystem::path& prompt_set_path,
                    const std::filesystem::path& test_path, std::optional<int> k) {
  config.validate();
  const ScoringCallReport calls;
  const auto test_set = load_dataset(test_path, config.task);
  const auto model = load_model(config, checkpoint_path, prompt_set_path);
  const auto options = ensemble_options(config, k, static_cast<int>(model.prompts.size()));
  const auto provider = make_provider(config);
  const EvalResult result = evaluate(*provider, model.state.params, model.state.state_norm,
                                     model.prompts, test_set, config.task, options);

  json metrics;
  metrics["seed"] = config.seed;
  metrics["config"] = provenance_json(config);
  metrics["k"] = options.k;
  metrics["accuracy"] = result.accuracy;
  metrics["confusion"] = result.confusion;
  metrics["n_inputs"] = result.records.size();
  write_file(artifact_path(config, "metrics.json"), metrics.dump(2) + "\n");

  std::string lines;
  for (const auto& record : result.records) {
    json row;
    row["gold"] = config.task.label_space.name(record.gold);
    row["predicted"] = config.task.label_space.name(record.predicted);
    row["probs"] = record.probs.probs;
    json selected = json::array();
    for (const auto& wa : record.selected) {
      selected.push_back({{"action", wa.action}, {"weight", wa.weight}});
    }
    row["selected"] = std::move(selected);
    lines += row.dump() + "\n";
  }
  write_file(artifact_path(config, "predictions.jsonl"), lines);

  std::cout << "accuracy: " << result.accuracy << " over " << result.records.size()
            << " inputs -> " << artifact_path(config, "metrics.json").string() << "\n";
  calls.print();
  return result;
}

json run_predict(const RunConfig& config, const std::filesystem::path& checkpoint_path,
                 const std::filesystem::path& prompt_set_path, const std::string& text,
                 const std::string& text2, std::optional<int> k) {
  config.validate();
  const auto model = load_model(config, checkpoint_path, prompt_set_path);
  const auto options = ensemble_options(config, k, static_cast<int>(model.prompts.size()));
  const auto provider = make_provider(config);

  LabeledExample input;
  input.text = text;
  input.text2 = text2;
  const EnsemblePrediction prediction =
      ensemble_predict(*provider, model.state.params, model.state.state_norm, model.prompts,
                       input, config.task, options);
  json record;
  record["predicted"] = config.task.label_space.name(prediction.predicted_label);
  record["probs"] = prediction.probs.probs;
  json selected = json::array();
  for (const auto& wa : prediction.selected) {
    selected.push_back({{"action", wa.action}, {"weight", wa.weight}});
  }
  record["selected"] = std::move(selected);
  return record;
}

}  // namespace promptrl
