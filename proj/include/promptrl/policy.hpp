#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "promptrl/errors.hpp"
#include "promptrl/provider.hpp"
#include "promptrl/sue.hpp"
#include "promptrl/task.hpp"

namespace promptrl {

/// Two-layer softmax policy: probs = softmax(w2 * tanh(w1 * state)).
/// No bias vectors, so the parameter count is exactly
/// state_dim*hidden_dim + hidden_dim*action_dim.
struct PolicyParams {
  int state_dim = 0;
  int hidden_dim = 0;
  int action_dim = 0;
  std::vector<double> w1;  // hidden_dim x state_dim, row-major
  std::vector<double> w2;  // action_dim x hidden_dim, row-major

  size_t parameter_count() const { return w1.size() + w2.size(); }
};

/// Seeded symmetric-uniform init scaled by 1/sqrt(fan-in).
PolicyParams init_policy(int state_dim, int hidden_dim, int action_dim, uint64_t seed);

struct PolicyForward {
  std::vector<double> hidden_pre;  // w1 * state
  std::vector<double> hidden;      // tanh(hidden_pre)
  std::vector<double> logits;      // w2 * hidden
  std::vector<double> probs;       // softmax(logits), max-subtracted
};

PolicyForward policy_forward(const PolicyParams& params, std::span<const double> state);

double policy_entropy(std::span<const double> probs);

/// Categorical draw; consumes exactly one generator output sequence position.
int sample_action(std::span<const double> probs, std::mt19937_64& rng);

/// Single-pass running mean/variance (per-dimension for states, dim=1 for
/// rewards). Normalizing with fewer than two observations centers only.
class RunningNormalizer {
 public:
  explicit RunningNormalizer(int dim = 1, double epsilon = 1e-8);

  void update(std::span<const double> value);
  void update(double value);
  std::vector<double> normalize(std::span<const double> value) const;
  double normalize(double value) const;

  int dim() const { return static_cast<int>(mean_.size()); }
  int64_t count() const { return count_; }
  double epsilon() const { return epsilon_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& m2() const { return m2_; }
  std::vector<double> variance() const;  // population variance

  /// Rebuild from serialized statistics (checkpoint loading).
  static RunningNormalizer from_stats(int64_t count, std::vector<double> mean,
                                      std::vector<double> m2, double epsilon = 1e-8);

 private:
  int64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
  double epsilon_;
};

struct Transition {
  std::vector<double> state;  // normalized
  int action = 0;
  double reward_raw = 0.0;
  double reward_norm = 0.0;
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double lr0 = 1e-3;
  double adam_eps = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  std::optional<double> entropy_coef;  // falls back to the task value
  double gamma = 0.99;  // recorded only; episodes are single-step
  uint64_t seed = 0;
  double lr_floor = 1e-4;
  int state_dim = 1024;
  int hidden_dim = 600;

  void validate() const;
};

/// Linear decay from lr0 to the floor: max(floor, lr0 * (1 - epoch/epoch_max)).
double lr_schedule(double lr0, int epoch, int epoch_max, double floor);

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t step = 0;
};

struct LossGrads {
  double loss = 0.0;
  double mean_entropy = 0.0;
  std::vector<double> grad_w1;
  std::vector<double> grad_w2;
};

/// loss = -mean(log pi(a|s) * reward_norm) - entropy_coef * mean policy
/// entropy, with gradients taken analytically through softmax and tanh.
LossGrads policy_loss_and_grads(const PolicyParams& params, std::span<const Transition> batch,
                                double entropy_coef);

struct UpdateResult {
  double loss = 0.0;
  double mean_entropy = 0.0;
};

/// One AdamW step (decoupled weight decay) over both weight matrices.
/// Aborts with a diagnostic if any gradient entry is non-finite.
UpdateResult policy_gradient_update(PolicyParams& params, std::span<const Transition> batch,
                                    double lr, double entropy_coef, AdamWState& opt,
                                    const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double mean_reward_raw = 0.0;
  double loss = 0.0;
  double mean_entropy = 0.0;
  double lr = 0.0;
};

/// Everything needed to continue or evaluate a training run.
struct TrainState {
  PolicyParams params;
  RunningNormalizer state_norm{1};
  RunningNormalizer reward_norm{1};
  AdamWState opt;
  int next_epoch = 0;
  std::string rng_state;  // serialized mt19937_64
};

struct TrainResult {
  TrainState state;
  std::vector<EpochStats> report;
};

/// Provider failure mid-training; `snapshot` holds the state as of the last
/// completed epoch and can be checkpointed and resumed.
class TrainAborted : public ProviderError {
 public:
  TrainAborted(const std::string& message, TrainState snapshot)
      : ProviderError(message), snapshot(std::move(snapshot)) {}

  TrainState snapshot;
};

/// One pass per epoch over the training set in a seeded shuffled order:
/// embed, state-normalize, sample an action, take the SUE of the selected
/// prompt on that single input as the reward, reward-normalize, buffer; then
/// update on shuffled minibatches and clear the buffer.
TrainResult train(Provider& provider, const std::vector<LabeledExample>& train_set,
                  const std::vector<Prompt>& prompts, const TaskSpec& task,
                  const TrainConfig& cfg, const TrainState* resume = nullptr);

/// Checkpoint layout: magic, dims and normalizer counts, then row-major
/// little-endian doubles for w1, w2 and the normalizer statistics, followed
/// by a resume trailer (epoch, optimizer moments, RNG state).
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);
void validate_checkpoint_dims(const TrainState& state, int state_dim, int action_dim);

}  // namespace promptrl
