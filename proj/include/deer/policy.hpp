#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deer/data.hpp"
#include "deer/dmoe.hpp"
#include "deer/nn.hpp"
#include "deer/params.hpp"

namespace deer {

// Welford running mean and variance of routing states.
class StateNormalizer {
 public:
  explicit StateNormalizer(std::size_t dim = 0, double eps = 1e-8);

  // No-op while frozen.
  void update(const Vector& s);
  // (s - mean) / sqrt(var + eps). With fewer than two observations the
  // variance falls back to 1, and with none the mean is 0.
  Vector normalize(const Vector& s) const;
  Matrix normalize(const Matrix& states) const;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean_.size()); }
  std::uint64_t count() const noexcept { return count_; }
  const Vector& mean() const noexcept { return mean_; }
  // Sample variance M2 / (count - 1).
  Vector variance() const;
  double eps() const noexcept { return eps_; }
  bool frozen() const noexcept { return frozen_; }
  void set_frozen(bool frozen) noexcept { frozen_ = frozen; }

  nlohmann::json to_json() const;
  static StateNormalizer from_json(const nlohmann::json& j);

 private:
  std::uint64_t count_ = 0;
  Vector mean_;
  Vector m2_;
  double eps_;
  bool frozen_ = false;
};

// pi(a | s) = softmax(w2 tanh(w1 s)), with s already normalized.
class PolicyNetwork {
 public:
  PolicyNetwork(std::size_t dim, std::size_t hidden, std::size_t n_actions, std::uint64_t seed);

  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  std::size_t dim() const noexcept { return net_.in(); }
  std::size_t hidden() const noexcept { return net_.first.out; }
  std::size_t n_actions() const noexcept { return net_.out(); }
  const TwoLayerNet& net() const noexcept { return net_; }

  Vector probs(const Vector& normalized_state) const;
  Matrix probs(const Matrix& normalized_states) const;

  // -mean[log pi(a|s) * adv] - beta * mean[H(pi(.|s))], with exact gradients into grads.
  double surrogate_loss(const Matrix& normalized_states, std::span<const std::size_t> actions,
                        std::span<const double> advantages, double beta, Gradients* grads) const;

 private:
  ParamStore params_;
  TwoLayerNet net_;
};

enum class RewardKind { neg_loss, accuracy };

RewardKind parse_reward_kind(std::string_view name);
std::string_view to_string(RewardKind kind) noexcept;

struct PolicyConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double entropy_coef = 0.01;
  double entropy_decay_fraction = 0.2;  // beta decays linearly to 0 over this tail of epochs
  RewardKind reward = RewardKind::neg_loss;
  std::size_t hidden = 512;
  std::uint64_t seed = 0;

  void validate() const;
  double entropy_at(std::size_t epoch) const noexcept;
};

void to_json(nlohmann::json& j, const PolicyConfig& cfg);
void from_json(const nlohmann::json& j, PolicyConfig& cfg);

// Policy, its state statistics and the domain names its actions refer to.
struct PolicyRouter {
  PolicyNetwork policy;
  StateNormalizer normalizer;
  std::vector<std::string> domain_names;

  PolicyRouter(std::size_t dim, std::vector<std::string> domains, std::size_t hidden, std::uint64_t seed);

  std::size_t n_domains() const noexcept { return domain_names.size(); }

  void save(const std::filesystem::path& path, const PolicyConfig& cfg) const;
  static PolicyRouter load(const std::filesystem::path& path);
};

// softmax(w2 tanh(w1 normalize(s))).
Vector policy_forward(const PolicyNetwork& policy, const StateNormalizer& norm, const Vector& s);

double reward_from_logits(const Vector& logits, int label, RewardKind kind);
double pathway_reward(const DmoeModel& model, std::size_t k, std::string_view text, int label,
                      RewardKind kind = RewardKind::neg_loss);
// r_a minus the mean reward over all n pathways.
double relative_reward(const DmoeModel& model, std::string_view text, int label, std::size_t action,
                       RewardKind kind = RewardKind::neg_loss);
std::vector<double> relative_rewards(std::span<const double> pathway_rewards);

// Batch standardization with the population standard deviation. When the std
// is below 1e-8 the values are only mean-centered. DataError on empty input.
std::vector<double> normalize_rewards(std::span<const double> rewards);

struct PolicyHistory {
  std::vector<double> mean_reward;      // mean relative reward of the sampled actions
  std::vector<double> routed_accuracy;  // fraction of samples whose sampled pathway was correct
  std::vector<double> mean_entropy;
};

nlohmann::json to_json(const PolicyHistory& h);

// rewards and correct are n_domains x N; states is D x N (un-normalized).
PolicyHistory train_policy_on_rewards(PolicyRouter& router, const Matrix& states, const Matrix& rewards,
                                      const Matrix& correct, const PolicyConfig& cfg);

// ContractError unless every model parameter is frozen. The normalizer is
// frozen when training finishes.
PolicyHistory train_policy(PolicyRouter& router, const DmoeModel& model, std::span<const Sample> train,
                           const PolicyConfig& cfg);

}  // namespace deer
