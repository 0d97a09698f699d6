#include "promptrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "promptrl/errors.hpp"
#include "promptrl/util.hpp"

namespace promptrl {

PolicyParams init_policy(int state_dim, int hidden_dim, int action_dim, uint64_t seed) {
  if (state_dim < 1 || hidden_dim < 1 || action_dim < 1) {
    throw ConfigError("policy dimensions must be positive");
  }
  PolicyParams params;
  params.state_dim = state_dim;
  params.hidden_dim = hidden_dim;
  params.action_dim = action_dim;
  params.w1.resize(static_cast<size_t>(hidden_dim) * static_cast<size_t>(state_dim));
  params.w2.resize(static_cast<size_t>(action_dim) * static_cast<size_t>(hidden_dim));
  std::mt19937_64 rng(mix64(seed));
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(state_dim));
  for (double& w : params.w1) w = (uniform01(rng) * 2.0 - 1.0) * bound1;
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (double& w : params.w2) w = (uniform01(rng) * 2.0 - 1.0) * bound2;
  return params;
}

PolicyForward policy_forward(const PolicyParams& params, std::span<const double> state) {
  if (static_cast<int>(state.size()) != params.state_dim) {
    throw ConfigError("state has dimension " + std::to_string(state.size()) + ", policy expects " +
                      std::to_string(params.state_dim));
  }
  PolicyForward out;
  out.hidden_pre.assign(static_cast<size_t>(params.hidden_dim), 0.0);
  for (int h = 0; h < params.hidden_dim; ++h) {
    const double* row = params.w1.data() + static_cast<size_t>(h) * params.state_dim;
    double acc = 0.0;
    for (int s = 0; s < params.state_dim; ++s) acc += row[s] * state[static_cast<size_t>(s)];
    out.hidden_pre[static_cast<size_t>(h)] = acc;
  }
  out.hidden.resize(out.hidden_pre.size());
  for (size_t i = 0; i < out.hidden.size(); ++i) out.hidden[i] = std::tanh(out.hidden_pre[i]);
  out.logits.assign(static_cast<size_t>(params.action_dim), 0.0);
  for (int a = 0; a < params.action_dim; ++a) {
    const double* row = params.w2.data() + static_cast<size_t>(a) * params.hidden_dim;
    double acc = 0.0;
    for (int h = 0; h < params.hidden_dim; ++h) acc += row[h] * out.hidden[static_cast<size_t>(h)];
    out.logits[static_cast<size_t>(a)] = acc;
  }
  const double max_logit = *std::max_element(out.logits.begin(), out.logits.end());
  out.probs.resize(out.logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < out.logits.size(); ++i) {
    out.probs[i] = std::exp(out.logits[i] - max_logit);
    sum += out.probs[i];
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

double policy_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (const double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

int sample_action(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

RunningNormalizer::RunningNormalizer(int dim, double epsilon) : epsilon_(epsilon) {
  if (dim < 1) throw ConfigError("normalizer dimension must be positive");
  mean_.assign(static_cast<size_t>(dim), 0.0);
  m2_.assign(static_cast<size_t>(dim), 0.0);
}

void RunningNormalizer::update(std::span<const double> value) {
  if (value.size() != mean_.size()) throw ConfigError("normalizer dimension mismatch");
  ++count_;
  for (size_t d = 0; d < mean_.size(); ++d) {
    const double delta = value[d] - mean_[d];
    mean_[d] += delta / static_cast<double>(count_);
    m2_[d] += delta * (value[d] - mean_[d]);
  }
}

void RunningNormalizer::update(double value) { update(std::span<const double>(&value, 1)); }

std::vector<double> RunningNormalizer::normalize(std::span<const double> value) const {
  if (value.size() != mean_.size()) throw ConfigError("normalizer dimension mismatch");
  std::vector<double> out(value.size());
  for (size_t d = 0; d < value.size(); ++d) {
    const double centered = value[d] - mean_[d];
    if (count_ < 2) {
      out[d] = centered;
    } else {
      const double stddev = std::sqrt(m2_[d] / static_cast<double>(count_));
      out[d] = centered / std::max(stddev, epsilon_);
    }
  }
  return out;
}

double RunningNormalizer::normalize(double value) const {
  return normalize(std::span<const double>(&value, 1))[0];
}

std::vector<double> RunningNormalizer::variance() const {
  std::vector<double> out(m2_.size(), 0.0);
  if (count_ > 0) {
    for (size_t d = 0; d < m2_.size(); ++d) out[d] = m2_[d] / static_cast<double>(count_);
  }
  return out;
}

RunningNormalizer RunningNormalizer::from_stats(int64_t count, std::vector<double> mean,
                                                std::vector<double> m2, double epsilon) {
  if (mean.size() != m2.size() || mean.empty()) {
    throw ConfigError("normalizer statistics are inconsistent");
  }
  RunningNormalizer out(static_cast<int>(mean.size()), epsilon);
  out.count_ = count;
  out.mean_ = std::move(mean);
  out.m2_ = std::move(m2);
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (lr0 <= 0.0) throw ConfigError("lr0 must be positive");
  if (adam_eps <= 0.0) throw ConfigError("adam_eps must be positive");
  if (lr_floor < 0.0) throw ConfigError("lr_floor must be non-negative");
  if (state_dim < 1 || hidden_dim < 1) throw ConfigError("policy dimensions must be positive");
}

double lr_schedule(double lr0, int epoch, int epoch_max, double floor) {
  if (epoch < 0 || epoch >= epoch_max) throw ConfigError("epoch outside the schedule range");
  const double lr = lr0 * (1.0 - static_cast<double>(epoch) / static_cast<double>(epoch_max));
  return std::max(floor, lr);
}

LossGrads policy_loss_and_grads(const PolicyParams& params, std::span<const Transition> batch,
                                double entropy_coef) {
  if (batch.empty()) throw ConfigError("policy update requires a non-empty batch");
  LossGrads out;
  out.grad_w1.assign(params.w1.size(), 0.0);
  out.grad_w2.assign(params.w2.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  std::vector<double> grad_logits(static_cast<size_t>(params.action_dim));
  std::vector<double> grad_hidden(static_cast<size_t>(params.hidden_dim));
  for (const Transition& t : batch) {
    if (t.action < 0 || t.action >= params.action_dim) {
      throw InvariantError("transition action outside the action space");
    }
    const PolicyForward fwd = policy_forward(params, t.state);
    const double h_pi = policy_entropy(fwd.probs);
    const double p_a = fwd.probs[static_cast<size_t>(t.action)];
    out.loss += (-std::log(p_a) * t.reward_norm - entropy_coef * h_pi) * inv_b;
    out.mean_entropy += h_pi * inv_b;

    // d/d logits of the per-sample loss:
    //   reward term: r * (p - onehot(a)); entropy term: coef * p * (log p + H)
    for (int j = 0; j < params.action_dim; ++j) {
      const double p_j = fwd.probs[static_cast<size_t>(j)];
      double g = t.reward_norm * (p_j - (j == t.action ? 1.0 : 0.0));
      if (p_j > 0.0) g += entropy_coef * p_j * (std::log(p_j) + h_pi);
      grad_logits[static_cast<size_t>(j)] = g * inv_b;
    }
    for (int j = 0; j < params.action_dim; ++j) {
      const double g = grad_logits[static_cast<size_t>(j)];
      double* grow = out.grad_w2.data() + static_cast<size_t>(j) * params.hidden_dim;
      for (int h = 0; h < params.hidden_dim; ++h) grow[h] += g * fwd.hidden[static_cast<size_t>(h)];
    }
    for (int h = 0; h < params.hidden_dim; ++h) {
      double acc = 0.0;
      for (int j = 0; j < params.action_dim; ++j) {
        acc += params.w2[static_cast<size_t>(j) * params.hidden_dim + static_cast<size_t>(h)] *
               grad_logits[static_cast<size_t>(j)];
      }
      grad_hidden[static_cast<size_t>(h)] = acc;
    }
    for (int h = 0; h < params.hidden_dim; ++h) {
      const double hv = fwd.hidden[static_cast<size_t>(h)];
      const double g_pre = grad_hidden[static_cast<size_t>(h)] * (1.0 - hv * hv);
      double* grow = out.grad_w1.data() + static_cast<size_t>(h) * params.state_dim;
      for (int s = 0; s < params.state_dim; ++s) grow[s] += g_pre * t.state[static_cast<size_t>(s)];
    }
  }
  return out;
}

namespace {

void adamw_step(std::vector<double>& w, const std::vector<double>& grad, AdamWState& opt,
                size_t offset, double lr, double bias1, double bias2, const TrainConfig& cfg) {
  for (size_t i = 0; i < w.size(); ++i) {
    const double g = grad[i];
    double& m = opt.m[offset + i];
    double& v = opt.v[offset + i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    w[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * w[i]);
  }
}

}  // namespace

UpdateResult policy_gradient_update(PolicyParams& params, std::span<const Transition> batch,
                                    double lr, double entropy_coef, AdamWState& opt,
                                    const TrainConfig& cfg) {
  const size_t count = params.parameter_count();
  if (opt.m.empty()) {
    opt.m.assign(count, 0.0);
    opt.v.assign(count, 0.0);
  }
  if (opt.m.size() != count || opt.v.size() != count) {
    throw InvariantError("optimizer state size does not match the parameter count");
  }
  const LossGrads grads = policy_loss_and_grads(params, batch, entropy_coef);
  if (!std::isfinite(grads.loss)) {
    throw InvariantError("policy loss is non-finite (batch of " + std::to_string(batch.size()) +
                         ")");
  }
  for (const double g : grads.grad_w1) {
    if (!std::isfinite(g)) throw InvariantError("non-finite gradient in w1");
  }
  for (const double g : grads.grad_w2) {
    if (!std::isfinite(g)) throw InvariantError("non-finite gradient in w2");
  }
  ++opt.step;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
  adamw_step(params.w1, grads.grad_w1, opt, 0, lr, bias1, bias2, cfg);
  adamw_step(params.w2, grads.grad_w2, opt, params.w1.size(), lr, bias1, bias2, cfg);
  return {grads.loss, grads.mean_entropy};
}

namespace {

std::string serialize_rng(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::mt19937_64 deserialize_rng(const std::string& text) {
  std::mt19937_64 rng;
  std::istringstream in(text);
  in >> rng;
  if (in.fail()) throw ConfigError("corrupt RNG state in checkpoint");
  return rng;
}

}  // namespace

TrainResult train(Provider& provider, const std::vector<LabeledExample>& train_set,
                  const std::vector<Prompt>& prompts, const TaskSpec& task,
                  const TrainConfig& cfg, const TrainState* resume) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (prompts.empty()) throw ConfigError("prompt set is empty");
  const int action_dim = static_cast<int>(prompts.size());
  const double entropy_coef = cfg.entropy_coef.value_or(task.entropy_coef);

  TrainState st;
  if (resume != nullptr) {
    st = *resume;
    if (st.params.state_dim != cfg.state_dim || st.params.hidden_dim != cfg.hidden_dim ||
        st.params.action_dim != action_dim) {
      throw ConfigError("resume state dimensions do not match the current configuration");
    }
  } else {
    st.params = init_policy(cfg.state_dim, cfg.hidden_dim, action_dim, cfg.seed);
    st.state_norm = RunningNormalizer(cfg.state_dim);
    st.reward_norm = RunningNormalizer(1);
    st.opt.m.assign(st.params.parameter_count(), 0.0);
    st.opt.v.assign(st.params.parameter_count(), 0.0);
    st.next_epoch = 0;
    std::mt19937_64 rng(mix64(cfg.seed ^ 0x747261696eull));
    st.rng_state = serialize_rng(rng);
  }

  std::mt19937_64 rng = deserialize_rng(st.rng_state);
  TrainResult result;

  std::vector<size_t> order(train_set.size());
  for (int epoch = st.next_epoch; epoch < cfg.epochs; ++epoch) {
    const TrainState snapshot = st;  // state at the epoch boundary
    try {
      const double lr = lr_schedule(cfg.lr0, epoch, cfg.epochs, cfg.lr_floor);
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      seeded_shuffle(order, rng);

      std::vector<Transition> buffer;
      buffer.reserve(train_set.size());
      double reward_sum = 0.0;
      for (const size_t idx : order) {
        const LabeledExample& ex = train_set[idx];
        const StateVector raw = provider.embed(embed_text(ex));
        if (raw.dim() != cfg.state_dim) {
          throw ConfigError("embedding dimension " + std::to_string(raw.dim()) +
                            " does not match configured state_dim " +
                            std::to_string(cfg.state_dim));
        }
        st.state_norm.update(raw.values);
        Transition t;
        t.state = st.state_norm.normalize(raw.values);
        const PolicyForward fwd = policy_forward(st.params, t.state);
        t.action = sample_action(fwd.probs, rng);
        const std::span<const LabeledExample> single(&ex, 1);
        t.reward_raw =
            sue_score(provider, prompts[static_cast<size_t>(t.action)], single, task).sue;
        st.reward_norm.update(t.reward_raw);
        t.reward_norm = st.reward_norm.normalize(t.reward_raw);
        reward_sum += t.reward_raw;
        buffer.push_back(std::move(t));
      }

      seeded_shuffle(buffer, rng);
      double loss_sum = 0.0;
      double entropy_sum = 0.0;
      int updates = 0;
      for (size_t begin = 0; begin < buffer.size(); begin += static_cast<size_t>(cfg.batch_size)) {
        const size_t end = std::min(buffer.size(), begin + static_cast<size_t>(cfg.batch_size));
        const std::span<const Transition> minibatch(buffer.data() + begin, end - begin);
        const UpdateResult update =
            policy_gradient_update(st.params, minibatch, lr, entropy_coef, st.opt, cfg);
        loss_sum += update.loss;
        entropy_sum += update.mean_entropy;
        ++updates;
      }

      EpochStats stats;
      stats.epoch = epoch;
      stats.mean_reward_raw = reward_sum / static_cast<double>(train_set.size());
      stats.loss = updates > 0 ? loss_sum / updates : 0.0;
      stats.mean_entropy = updates > 0 ? entropy_sum / updates : 0.0;
      stats.lr = lr;
      result.report.push_back(stats);

      st.next_epoch = epoch + 1;
      st.rng_state = serialize_rng(rng);
    } catch (const ProviderError& e) {
      throw TrainAborted("training aborted in epoch " + std::to_string(epoch) + ": " + e.what(),
                         snapshot);
    }
  }

  result.state = std::move(st);
  return result;
}

namespace {

constexpr char kCheckpointMagic[8] = {'P', 'R', 'L', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void write_doubles(std::ofstream& out, const std::vector<double>& values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in.good()) throw ConfigError("checkpoint truncated");
  return value;
}

std::vector<double> read_doubles(std::ifstream& in, size_t count) {
  std::vector<double> values(count);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in.good()) throw ConfigError("checkpoint truncated");
  return values;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<uint32_t>(out, static_cast<uint32_t>(state.params.state_dim));
  write_pod<uint32_t>(out, static_cast<uint32_t>(state.params.hidden_dim));
  write_pod<uint32_t>(out, static_cast<uint32_t>(state.params.action_dim));
  write_pod<uint64_t>(out, static_cast<uint64_t>(state.state_norm.count()));
  write_pod<uint64_t>(out, static_cast<uint64_t>(state.reward_norm.count()));
  write_doubles(out, state.params.w1);
  write_doubles(out, state.params.w2);
  write_doubles(out, state.state_norm.mean());
  write_doubles(out, state.state_norm.m2());
  write_doubles(out, state.reward_norm.mean());
  write_doubles(out, state.reward_norm.m2());
  write_pod<uint32_t>(out, static_cast<uint32_t>(state.next_epoch));
  write_pod<uint64_t>(out, static_cast<uint64_t>(state.opt.step));
  write_doubles(out, state.opt.m);
  write_doubles(out, state.opt.v);
  write_pod<uint64_t>(out, static_cast<uint64_t>(state.rng_state.size()));
  out.write(state.rng_state.data(), static_cast<std::streamsize>(state.rng_state.size()));
  if (!out.good()) throw ConfigError("checkpoint write failed: " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in.good() || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ConfigError("not a checkpoint file: " + path.string());
  }
  TrainState state;
  state.params.state_dim = static_cast<int>(read_pod<uint32_t>(in));
  state.params.hidden_dim = static_cast<int>(read_pod<uint32_t>(in));
  state.params.action_dim = static_cast<int>(read_pod<uint32_t>(in));
  if (state.params.state_dim < 1 || state.params.hidden_dim < 1 || state.params.action_dim < 1) {
    throw ConfigError("checkpoint has invalid dimensions");
  }
  const auto state_count = static_cast<int64_t>(read_pod<uint64_t>(in));
  const auto reward_count = static_cast<int64_t>(read_pod<uint64_t>(in));
  const size_t w1_size =
      static_cast<size_t>(state.params.hidden_dim) * static_cast<size_t>(state.params.state_dim);
  const size_t w2_size =
      static_cast<size_t>(state.params.action_dim) * static_cast<size_t>(state.params.hidden_dim);
  state.params.w1 = read_doubles(in, w1_size);
  state.params.w2 = read_doubles(in, w2_size);
  auto state_mean = read_doubles(in, static_cast<size_t>(state.params.state_dim));
  auto state_m2 = read_doubles(in, static_cast<size_t>(state.params.state_dim));
  auto reward_mean = read_doubles(in, 1);
  auto reward_m2 = read_doubles(in, 1);
  state.state_norm = RunningNormalizer::from_stats(state_count, std::move(state_mean),
                                                   std::move(state_m2));
  state.reward_norm = RunningNormalizer::from_stats(reward_count, std::move(reward_mean),
                                                    std::move(reward_m2));
  state.next_epoch = static_cast<int>(read_pod<uint32_t>(in));
  state.opt.step = static_cast<int64_t>(read_pod<uint64_t>(in));
  state.opt.m = read_doubles(in, w1_size + w2_size);
  state.opt.v = read_doubles(in, w1_size + w2_size);
  const auto rng_len = read_pod<uint64_t>(in);
  if (rng_len > (1u << 20)) throw ConfigError("checkpoint RNG state is implausibly large");
  state.rng_state.resize(rng_len);
  in.read(state.rng_state.data(), static_cast<std::streamsize>(rng_len));
  if (!in.good()) throw ConfigError("checkpoint truncated");
  return state;
}

void validate_checkpoint_dims(const TrainState& state, int state_dim, int action_dim) {
  if (state.params.state_dim != state_dim) {
    throw ConfigError("checkpoint state_dim " + std::to_string(state.params.state_dim) +
                      " does not match task state_dim " + std::to_string(state_dim));
  }
  if (state.params.action_dim != action_dim) {
    throw ConfigError("checkpoint action_dim " + std::to_string(state.params.action_dim) +
                      " does not match the prompt-set size " + std::to_string(action_dim));
  }
}

}  // namespace promptrl
