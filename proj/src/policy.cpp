#include "deer/policy.hpp"

#include <algorithm>
#include <cmath>

#include "deer/checkpoint.hpp"
#include "deer/errors.hpp"
#include "deer/optim.hpp"
#include "deer/rng.hpp"

namespace deer {

StateNormalizer::StateNormalizer(std::size_t dim, double eps)
    : mean_(Vector::Zero(static_cast<Eigen::Index>(dim))),
      m2_(Vector::Zero(static_cast<Eigen::Index>(dim))),
      eps_(eps) {}

void StateNormalizer::update(const Vector& s) {
  if (frozen_) return;
  if (s.size() != mean_.size()) throw ShapeError("state dimension does not match the normalizer");
  ++count_;
  const Vector delta = s - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_.array() += delta.array() * (s - mean_).array();
}

Vector StateNormalizer::variance() const {
  if (count_ < 2) return Vector::Ones(mean_.size());
  return m2_ / static_cast<double>(count_ - 1);
}

Vector StateNormalizer::normalize(const Vector& s) const {
  if (s.size() != mean_.size()) throw ShapeError("state dimension does not match the normalizer");
  if (count_ == 0) return s;
  return ((s - mean_).array() / (variance().array() + eps_).sqrt()).matrix();
}

Matrix StateNormalizer::normalize(const Matrix& states) const {
  if (states.rows() != mean_.size()) throw ShapeError("state dimension does not match the normalizer");
  if (count_ == 0) return states;
  const Eigen::ArrayXd inv_std = (variance().array() + eps_).sqrt().inverse();
  return ((states.colwise() - mean_).array().colwise() * inv_std).matrix();
}

nlohmann::json StateNormalizer::to_json() const {
  return {{"count", count_},
          {"mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
          {"m2", std::vector<double>(m2_.data(), m2_.data() + m2_.size())},
          {"eps", eps_},
          {"frozen", frozen_}};
}

StateNormalizer StateNormalizer::from_json(const nlohmann::json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto m2 = j.at("m2").get<std::vector<double>>();
  if (mean.size() != m2.size()) throw CompatError("normalizer statistics have mismatched sizes");
  StateNormalizer n(mean.size(), j.value("eps", 1e-8));
  n.count_ = j.at("count").get<std::uint64_t>();
  n.mean_ = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  n.m2_ = Eigen::Map<const Vector>(m2.data(), static_cast<Eigen::Index>(m2.size()));
  n.frozen_ = j.value("frozen", true);
  return n;
}

PolicyNetwork::PolicyNetwork(std::size_t dim, std::size_t hidden, std::size_t n_actions, std::uint64_t seed) {
  if (dim == 0 || hidden == 0 || n_actions == 0) throw ConfigError("policy dimensions must be positive");
  net_ = TwoLayerNet::create(params_, "policy", dim, hidden, n_actions, Activation::tanh, seed);
}

Vector PolicyNetwork::probs(const Vector& normalized_state) const {
  return softmax(net_.forward(params_, normalized_state));
}

Matrix PolicyNetwork::probs(const Matrix& normalized_states) const {
  return softmax_columns(net_.forward(params_, normalized_states));
}

double PolicyNetwork::surrogate_loss(const Matrix& states, std::span<const std::size_t> actions,
                                     std::span<const double> advantages, double beta,
                                     Gradients* grads) const {
  const auto b = static_cast<std::size_t>(states.cols());
  if (actions.size() != b || advantages.size() != b) {
    throw ShapeError("one action and one advantage per state are required");
  }
  if (b == 0) throw DataError("empty policy batch");
  TwoLayerNet::Cache cache;
  const Matrix logits = net_.forward(params_, states, &cache);
  const double inv_b = 1.0 / static_cast<double>(b);
  Matrix grad_logits(logits.rows(), logits.cols());
  double loss = 0.0;
  for (std::size_t c = 0; c < b; ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    const Vector u = logits.col(col);
    const double shift = u.maxCoeff();
    const double lse = shift + std::log((u.array() - shift).exp().sum());
    const Vector log_pi = (u.array() - lse).matrix();
    const Vector pi = log_pi.array().exp().matrix();
    const double h = -(pi.array() * log_pi.array()).sum();
    if (actions[c] >= n_actions()) throw IndexError("action out of range");
    const auto a = static_cast<Eigen::Index>(actions[c]);
    loss += (-log_pi[a] * advantages[c] - beta * h) * inv_b;
    Vector g = advantages[c] * pi;  // -adv * (e_a - pi)
    g[a] -= advantages[c];
    g += beta * (pi.array() * (log_pi.array() + h)).matrix();
    grad_logits.col(col) = g * inv_b;
  }
  if (grads != nullptr) net_.backward(params_, states, cache, grad_logits, *grads, nullptr);
  return loss;
}

RewardKind parse_reward_kind(std::string_view name) {
  if (name == "neg_loss") return RewardKind::neg_loss;
  if (name == "accuracy") return RewardKind::accuracy;
  throw ArgumentError("unknown reward kind '" + std::string(name) + "'");
}

std::string_view to_string(RewardKind kind) noexcept {
  return kind == RewardKind::neg_loss ? "neg_loss" : "accuracy";
}

void PolicyConfig::validate() const {
  if (entropy_coef < 0.0) throw ConfigError("entropy coefficient must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (entropy_decay_fraction < 0.0 || entropy_decay_fraction > 1.0) {
    throw ConfigError("entropy decay fraction must lie in [0, 1]");
  }
}

double PolicyConfig::entropy_at(std::size_t epoch) const noexcept {
  const auto tail = static_cast<std::size_t>(std::floor(entropy_decay_fraction * static_cast<double>(epochs)));
  const std::size_t start = epochs - tail;
  if (tail == 0 || epoch < start) return entropy_coef;
  const double progress = static_cast<double>(epoch - start + 1) / static_cast<double>(tail);
  return entropy_coef * std::max(0.0, 1.0 - progress);
}

void to_json(nlohmann::json& j, const PolicyConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"entropy_coef", c.entropy_coef},
                     {"entropy_decay_fraction", c.entropy_decay_fraction},
                     {"reward", to_string(c.reward)},
                     {"hidden", c.hidden},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PolicyConfig& c) {
  const PolicyConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.entropy_coef = j.value("entropy_coef", d.entropy_coef);
  c.entropy_decay_fraction = j.value("entropy_decay_fraction", d.entropy_decay_fraction);
  c.reward = parse_reward_kind(j.value("reward", std::string("neg_loss")));
  c.hidden = j.value("hidden", d.hidden);
  c.seed = j.value("seed", d.seed);
}

PolicyRouter::PolicyRouter(std::size_t dim, std::vector<std::string> domains, std::size_t hidden,
                           std::uint64_t seed)
    : policy(dim, hidden, domains.size(), seed), normalizer(dim), domain_names(std::move(domains)) {}

void PolicyRouter::save(const std::filesystem::path& path, const PolicyConfig& cfg) const {
  save_checkpoint(path, policy.params());
  write_json(sidecar_path(path), {{"kind", "policy"},
                                  {"format_version", 1},
                                  {"n", n_domains()},
                                  {"D", policy.dim()},
                                  {"hidden", policy.hidden()},
                                  {"domain_names", domain_names},
                                  {"cfg", cfg},
                                  {"normalizer", normalizer.to_json()}});
}

PolicyRouter PolicyRouter::load(const std::filesystem::path& path) {
  const nlohmann::json side = read_json(sidecar_path(path));
  if (side.value("kind", std::string()) != "policy") {
    throw CompatError(path.string() + " is not a policy checkpoint");
  }
  PolicyRouter router(side.at("D").get<std::size_t>(), side.at("domain_names").get<std::vector<std::string>>(),
                      side.at("hidden").get<std::size_t>(), 0);
  if (router.n_domains() != side.at("n").get<std::size_t>()) {
    throw CompatError("policy sidecar lists a different number of domains than n");
  }
  restore_params(router.policy.params(), load_checkpoint(path).params);
  router.normalizer = StateNormalizer::from_json(side.at("normalizer"));
  if (router.normalizer.dim() != router.policy.dim()) {
    throw CompatError("normalizer dimension does not match the policy input");
  }
  return router;
}

Vector policy_forward(const PolicyNetwork& policy, const StateNormalizer& norm, const Vector& s) {
  return policy.probs(norm.normalize(s));
}

double reward_from_logits(const Vector& logits, int label, RewardKind kind) {
  const ClassPrediction p = classify_logits(logits);
  if (kind == RewardKind::accuracy) return p.label == label ? 1.0 : 0.0;
  return -cross_entropy(p.probs, static_cast<std::size_t>(label));
}

double pathway_reward(const DmoeModel& model, std::size_t k, std::string_view text, int label, RewardKind kind) {
  return reward_from_logits(model.pathway_logits(k, text), label, kind);
}

std::vector<double> relative_rewards(std::span<const double> r) {
  if (r.empty()) throw DataError("relative reward needs at least one pathway");
  double mean = 0.0;
  for (double x : r) mean += x;
  mean /= static_cast<double>(r.size());
  std::vector<double> out(r.begin(), r.end());
  for (double& x : out) x -= mean;
  return out;
}

double relative_reward(const DmoeModel& model, std::string_view text, int label, std::size_t action,
                       RewardKind kind) {
  if (action >= model.n_domains()) throw DomainError("action out of range");
  const Vector h = model.features(text);
  std::vector<double> r(model.n_domains());
  for (std::size_t k = 0; k < r.size(); ++k) {
    r[k] = reward_from_logits(model.pathway_logits_from_features(k, h), label, kind);
  }
  return relative_rewards(r)[action];
}

std::vector<double> normalize_rewards(std::span<const double> rewards) {
  if (rewards.empty()) throw DataError("cannot normalize an empty reward batch");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(rewards.begin(), rewards.end());
  for (double& r : out) {
    r -= mean;
    if (sd >= 1e-8) r /= sd + 1e-8;
  }
  return out;
}

nlohmann::json to_json(const PolicyHistory& h) {
  return {{"mean_reward", h.mean_reward}, {"routed_accuracy", h.routed_accuracy}, {"mean_entropy", h.mean_entropy}};
}

PolicyHistory train_policy_on_rewards(PolicyRouter& router, const Matrix& states, const Matrix& rewards,
                                      const Matrix& correct, const PolicyConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(states.cols());
  if (static_cast<std::size_t>(states.rows()) != router.policy.dim()) {
    throw ShapeError("state dimension does not match the policy input");
  }
  if (static_cast<std::size_t>(rewards.rows()) != router.n_domains() || rewards.cols() != states.cols() ||
      correct.rows() != rewards.rows() || correct.cols() != rewards.cols()) {
    throw ShapeError("reward tables must be n_domains x N");
  }
  if (n == 0) throw DataError("empty policy training set");

  PolicyHistory history;
  AdamWState state(router.policy.params(), AdamWHyper{.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  Gradients grads(router.policy.params());
  Rng order_rng(cfg.seed, "policy.order");
  Rng action_rng(cfg.seed, "policy.actions");
  router.normalizer.set_frozen(false);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double beta = cfg.entropy_at(epoch);
    order_rng.shuffle(order.begin(), order.end());
    double reward_sum = 0.0, correct_sum = 0.0, entropy_sum = 0.0;
    for (std::size_t s = 0; s < n; s += cfg.batch_size) {
      const std::vector<Eigen::Index> cols(order.begin() + static_cast<std::ptrdiff_t>(s),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + cfg.batch_size)));
      const Matrix batch = states(Eigen::all, cols);
      for (Eigen::Index c = 0; c < batch.cols(); ++c) router.normalizer.update(batch.col(c));
      const Matrix normalized = router.normalizer.normalize(batch);
      const Matrix pi = router.policy.probs(normalized);
      std::vector<std::size_t> actions(cols.size());
      std::vector<double> raw(cols.size());
      for (std::size_t c = 0; c < cols.size(); ++c) {
        const auto col = static_cast<Eigen::Index>(c);
        const Vector p = pi.col(col);
        actions[c] = action_rng.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
        const Vector r = rewards.col(cols[c]);
        const auto rel = relative_rewards(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
        raw[c] = rel[actions[c]];
        reward_sum += raw[c];
        correct_sum += correct(static_cast<Eigen::Index>(actions[c]), cols[c]);
        entropy_sum += entropy(p);
      }
      const std::vector<double> advantages = normalize_rewards(raw);
      grads.clear();
      router.policy.surrogate_loss(normalized, actions, advantages, beta, &grads);
      adamw_step(router.policy.params(), grads, state);
    }
    history.mean_reward.push_back(reward_sum / static_cast<double>(n));
    history.routed_accuracy.push_back(correct_sum / static_cast<double>(n));
    history.mean_entropy.push_back(entropy_sum / static_cast<double>(n));
  }
  router.normalizer.set_frozen(true);
  return history;
}

PolicyHistory train_policy(PolicyRouter& router, const DmoeModel& model, std::span<const Sample> train,
                           const PolicyConfig& cfg) {
  if (!model.params().all_frozen()) throw ContractError("policy training requires a fully frozen DMoE model");
  if (router.n_domains() != model.n_domains() || router.domain_names != model.domain_names()) {
    throw CompatError("policy actions do not match the model's domains");
  }
  if (router.policy.dim() != model.dim()) throw CompatError("policy input dimension does not match the model");
  if (train.empty()) throw DataError("empty policy training set");

  std::vector<std::string> texts;
  texts.reserve(train.size());
  for (const Sample& s : train) texts.push_back(s.text);
  const Matrix hashed = encode_batch(model.encoder(), texts);
  const Matrix states = model.adapt(hashed);
  const std::vector<Matrix> logits = model.all_pathway_logits(hashed);

  const auto n = static_cast<Eigen::Index>(train.size());
  const auto k_count = static_cast<Eigen::Index>(model.n_domains());
  Matrix rewards(k_count, n), correct(k_count, n);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector z = logits[static_cast<std::size_t>(k)].col(i);
      const int y = train[static_cast<std::size_t>(i)].label;
      rewards(k, i) = reward_from_logits(z, y, cfg.reward);
      correct(k, i) = classify_logits(z).label == y ? 1.0 : 0.0;
    }
  }
  return train_policy_on_rewards(router, states, rewards, correct, cfg);
}

}  // namespace deer
