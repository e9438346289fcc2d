#include "deer/dmoe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "deer/checkpoint.hpp"
#include "deer/errors.hpp"
#include "deer/metrics.hpp"
#include "deer/rng.hpp"

namespace deer {

void DmoeConfig::validate() const {
  if (expert_hidden == 0 || head_hidden == 0) throw ConfigError("hidden sizes must be positive");
  if (!base && m1 + m2 == 0) throw ConfigError("a gated model needs at least one expert");
}

void to_json(nlohmann::json& j, const DmoeConfig& c) {
  j = nlohmann::json{{"m1", c.m1},
                     {"m2", c.m2},
                     {"expert_hidden", c.expert_hidden},
                     {"head_hidden", c.head_hidden},
                     {"base", c.base},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DmoeConfig& c) {
  const DmoeConfig d;
  c.m1 = j.value("m1", d.m1);
  c.m2 = j.value("m2", d.m2);
  c.expert_hidden = j.value("expert_hidden", d.expert_hidden);
  c.head_hidden = j.value("head_hidden", d.head_hidden);
  c.base = j.value("base", d.base);
  c.seed = j.value("seed", d.seed);
  c.validate();
}

void to_json(nlohmann::json& j, const Stage1Config& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"domain_pure_batches", c.domain_pure_batches},
                     {"select_best", c.select_best},
                     {"seed", c.seed}};
}

ClassPrediction classify_logits(const Vector& logits) {
  ClassPrediction p;
  p.probs = softmax(logits);
  p.label = static_cast<int>(argmax(p.probs));
  return p;
}

std::string DmoeModel::domain_prefix(std::size_t k) { return "experts_ds." + std::to_string(k) + "."; }
std::string DmoeModel::gate_prefix(std::size_t k) { return "gates." + std::to_string(k) + "."; }

DmoeModel::DmoeModel(EncoderConfig encoder, DmoeConfig cfg, std::vector<std::string> domain_names)
    : encoder_(std::move(encoder)), cfg_(cfg), domains_(std::move(domain_names)) {
  encoder_.validate();
  cfg_.validate();
  if (domains_.empty()) throw ConfigError("a model needs at least one domain");
  std::set<std::string> unique(domains_.begin(), domains_.end());
  if (unique.size() != domains_.size()) throw ConfigError("domain names must be unique");

  const std::size_t d = encoder_.dim;
  if (encoder_.backend == EncoderBackend::adapter) {
    adapter_ = DenseLayer::create(params_, "adapter", d, d, cfg_.seed);
    params_.matrix(adapter_->weight).setIdentity();
  }
  if (!cfg_.base) {
    for (std::size_t j = 0; j < cfg_.m2; ++j) {
      experts_dc_.push_back(TwoLayerNet::create(params_, "experts_dc." + std::to_string(j), d,
                                                cfg_.expert_hidden, d, Activation::relu, cfg_.seed));
    }
    for (std::size_t k = 0; k < domains_.size(); ++k) build_domain(k);
  }
  head_ = TwoLayerNet::create(params_, "head", d, cfg_.head_hidden, 2, Activation::relu, cfg_.seed);
}

void DmoeModel::build_domain(std::size_t k) {
  const std::size_t d = encoder_.dim;
  std::vector<TwoLayerNet> group;
  for (std::size_t i = 0; i < cfg_.m1; ++i) {
    group.push_back(TwoLayerNet::create(params_, domain_prefix(k) + std::to_string(i), d,
                                        cfg_.expert_hidden, d, Activation::relu, cfg_.seed));
  }
  experts_ds_.push_back(std::move(group));
  gates_.push_back(DenseLayer::create(params_, "gates." + std::to_string(k), d, cfg_.gate_width(),
                                      cfg_.seed));
}

std::size_t DmoeModel::add_domain(const std::string& name) {
  if (domain_index(name)) throw ArgumentError("domain '" + name + "' already exists");
  domains_.push_back(name);
  if (!cfg_.base) build_domain(domains_.size() - 1);
  return domains_.size() - 1;
}

std::optional<std::size_t> DmoeModel::domain_index(std::string_view name) const {
  for (std::size_t k = 0; k < domains_.size(); ++k) {
    if (domains_[k] == name) return k;
  }
  return std::nullopt;
}

std::size_t DmoeModel::require_domain(std::string_view name) const {
  auto k = domain_index(name);
  if (!k) throw DomainError("unknown domain '" + std::string(name) + "'");
  return *k;
}

void DmoeModel::check_domain(std::size_t k) const {
  if (k >= domains_.size()) {
    throw DomainError("domain index " + std::to_string(k) + " out of range for " +
                      std::to_string(domains_.size()) + " domains");
  }
}

Matrix DmoeModel::adapt(const Matrix& hashed) const {
  if (static_cast<std::size_t>(hashed.rows()) != encoder_.dim) {
    throw ShapeError("feature dimension " + std::to_string(hashed.rows()) + " does not match encoder dim " +
                     std::to_string(encoder_.dim));
  }
  return adapter_ ? adapter_->forward(params_, hashed) : hashed;
}

Vector DmoeModel::features(std::string_view text) const {
  Vector h = encode(encoder_, text);
  return adapter_ ? adapter_->forward(params_, h) : h;
}

Vector DmoeModel::gate_weights(std::size_t k, const Vector& h) const {
  check_domain(k);
  if (cfg_.base) throw ConfigError("the base layout has no gates");
  return softmax(gates_[k].forward(params_, h));
}

Vector DmoeModel::fuse_with_weights(std::size_t k, const Vector& h, const Vector& weights) const {
  check_domain(k);
  if (cfg_.base) return h;
  if (static_cast<std::size_t>(weights.size()) != cfg_.gate_width()) {
    throw ShapeError("fusion weights must have length m1 + m2");
  }
  Vector fused = Vector::Zero(h.size());
  for (std::size_t i = 0; i < cfg_.m1; ++i) {
    fused += weights[static_cast<Eigen::Index>(i)] * experts_ds_[k][i].forward(params_, h);
  }
  for (std::size_t j = 0; j < cfg_.m2; ++j) {
    fused += weights[static_cast<Eigen::Index>(cfg_.m1 + j)] * experts_dc_[j].forward(params_, h);
  }
  return fused;
}

Vector DmoeModel::fuse(std::size_t k, const Vector& h) const {
  if (cfg_.base) {
    check_domain(k);
    return h;
  }
  return fuse_with_weights(k, h, gate_weights(k, h));
}

Vector DmoeModel::head_logits(const Vector& fused) const { return head_.forward(params_, fused); }

Vector DmoeModel::pathway_logits_from_features(std::size_t k, const Vector& h) const {
  return head_logits(fuse(k, h));
}

Vector DmoeModel::pathway_logits(std::size_t k, std::string_view text) const {
  check_domain(k);
  return pathway_logits_from_features(k, features(text));
}

ClassPrediction DmoeModel::classify_pathway(std::size_t k, std::string_view text) const {
  return classify_logits(pathway_logits(k, text));
}

Vector DmoeModel::shared_only_logits_from_features(const Vector& h) const {
  if (cfg_.base) return head_logits(h);
  if (cfg_.m2 == 0) throw ConfigError("shared-only prediction needs at least one shared expert");
  Vector mean = Vector::Zero(h.size());
  for (const auto& e : experts_dc_) mean += e.forward(params_, h);
  mean /= static_cast<double>(cfg_.m2);
  return head_logits(mean);
}

Vector DmoeModel::shared_only_logits(std::string_view text) const {
  return shared_only_logits_from_features(features(text));
}

struct DmoeModel::Forward {
  struct Group {
    std::size_t domain = 0;
    std::vector<Eigen::Index> cols;
    Matrix x;        // gathered inputs
    Matrix weights;  // (m1 + m2) x b
    std::vector<TwoLayerNet::Cache> caches;
    std::vector<Matrix> outputs;
  };
  Matrix h;
  std::vector<TwoLayerNet::Cache> shared_caches;
  std::vector<Matrix> shared_outputs;
  std::vector<Group> groups;
  Matrix fused;
  TwoLayerNet::Cache head_cache;
};

std::vector<Matrix> DmoeModel::shared_outputs(const Matrix& h) const {
  std::vector<Matrix> out;
  out.reserve(experts_dc_.size());
  for (const auto& e : experts_dc_) out.push_back(e.forward(params_, h));
  return out;
}

Matrix DmoeModel::forward(const Matrix& hashed, std::span<const std::size_t> domains, Forward* fwd,
                          const std::vector<Matrix>* precomputed) const {
  if (static_cast<std::size_t>(hashed.cols()) != domains.size()) {
    throw ShapeError("one domain index per feature column is required");
  }
  for (std::size_t k : domains) check_domain(k);

  Forward local;
  Forward& f = fwd != nullptr ? *fwd : local;
  f.h = adapt(hashed);
  if (cfg_.base) {
    f.fused = f.h;
    return head_.forward(params_, f.fused, &f.head_cache);
  }

  if (precomputed != nullptr) {
    f.shared_outputs = *precomputed;
  } else {
    f.shared_caches.resize(experts_dc_.size());
    f.shared_outputs.clear();
    for (std::size_t j = 0; j < experts_dc_.size(); ++j) {
      f.shared_outputs.push_back(experts_dc_[j].forward(params_, f.h, &f.shared_caches[j]));
    }
  }

  std::vector<std::vector<Eigen::Index>> by_domain(domains_.size());
  for (std::size_t c = 0; c < domains.size(); ++c) by_domain[domains[c]].push_back(static_cast<Eigen::Index>(c));

  f.fused = Matrix::Zero(f.h.rows(), f.h.cols());
  f.groups.clear();
  for (std::size_t k = 0; k < domains_.size(); ++k) {
    if (by_domain[k].empty()) continue;
    Forward::Group g;
    g.domain = k;
    g.cols = std::move(by_domain[k]);
    g.x = f.h(Eigen::all, g.cols);
    g.weights = softmax_columns(gates_[k].forward(params_, g.x));
    Matrix fused = Matrix::Zero(g.x.rows(), g.x.cols());
    g.caches.resize(cfg_.m1);
    for (std::size_t i = 0; i < cfg_.m1; ++i) {
      g.outputs.push_back(experts_ds_[k][i].forward(params_, g.x, &g.caches[i]));
      fused.array() += g.outputs.back().array().rowwise() * g.weights.row(static_cast<Eigen::Index>(i)).array();
    }
    for (std::size_t j = 0; j < cfg_.m2; ++j) {
      const Matrix s = f.shared_outputs[j](Eigen::all, g.cols);
      fused.array() += s.array().rowwise() * g.weights.row(static_cast<Eigen::Index>(cfg_.m1 + j)).array();
    }
    f.fused(Eigen::all, g.cols) = fused;
    f.groups.push_back(std::move(g));
  }
  return head_.forward(params_, f.fused, &f.head_cache);
}

double DmoeModel::loss_and_gradient(const Matrix& hashed, std::span<const int> labels,
                                    std::span<const std::size_t> domains, Gradients* grads) const {
  if (labels.size() != domains.size() || static_cast<std::size_t>(hashed.cols()) != labels.size()) {
    throw ShapeError("features, labels and domains must have the same length");
  }
  if (labels.empty()) throw DataError("empty batch");
  Forward f;
  const Matrix logits = forward(hashed, domains, &f, nullptr);
  const Matrix probs = softmax_columns(logits);
  const double batch = static_cast<double>(labels.size());
  double loss = 0.0;
  Matrix grad_logits = probs;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    const int y = labels[c];
    if (y != kHuman && y != kMachine) throw IndexError("label must be 0 or 1");
    loss += cross_entropy(probs.col(col), static_cast<std::size_t>(y));
    grad_logits(y, col) -= 1.0;
  }
  loss /= batch;
  if (grads == nullptr) return loss;
  grad_logits /= batch;

  const bool need_input_grad = adapter_ && !params_[adapter_->weight].frozen;
  Matrix grad_fused;
  head_.backward(params_, f.fused, f.head_cache, grad_logits, *grads, &grad_fused);

  Matrix grad_h;
  if (cfg_.base) {
    grad_h = std::move(grad_fused);
  } else {
    if (need_input_grad) grad_h = Matrix::Zero(f.h.rows(), f.h.cols());
    std::vector<Matrix> grad_shared(cfg_.m2, Matrix::Zero(f.h.rows(), f.h.cols()));
    for (const Forward::Group& g : f.groups) {
      const Matrix gf = grad_fused(Eigen::all, g.cols);
      const Eigen::Index b = gf.cols();
      Matrix grad_w(static_cast<Eigen::Index>(cfg_.gate_width()), b);
      Matrix grad_x;
      if (need_input_grad) grad_x = Matrix::Zero(g.x.rows(), b);
      for (std::size_t i = 0; i < cfg_.m1; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        grad_w.row(row) = (gf.array() * g.outputs[i].array()).colwise().sum();
        const Matrix grad_out = (gf.array().rowwise() * g.weights.row(row).array()).matrix();
        Matrix gx;
        experts_ds_[g.domain][i].backward(params_, g.x, g.caches[i], grad_out, *grads,
                                          need_input_grad ? &gx : nullptr);
        if (need_input_grad) grad_x += gx;
      }
      for (std::size_t j = 0; j < cfg_.m2; ++j) {
        const auto row = static_cast<Eigen::Index>(cfg_.m1 + j);
        const Matrix s = f.shared_outputs[j](Eigen::all, g.cols);
        grad_w.row(row) = (gf.array() * s.array()).colwise().sum();
        grad_shared[j](Eigen::all, g.cols) +=
            (gf.array().rowwise() * g.weights.row(row).array()).matrix();
      }
      // Softmax backward per column: dG = W * (dW - <W, dW>).
      const Eigen::RowVectorXd inner = (g.weights.array() * grad_w.array()).colwise().sum();
      const Matrix grad_gate =
          (g.weights.array() * (grad_w.array().rowwise() - inner.array())).matrix();
      Matrix gx;
      gates_[g.domain].backward(params_, g.x, grad_gate, *grads, need_input_grad ? &gx : nullptr);
      if (need_input_grad) {
        grad_x += gx;
        grad_h(Eigen::all, g.cols) += grad_x;
      }
    }
    for (std::size_t j = 0; j < cfg_.m2; ++j) {
      Matrix gx;
      experts_dc_[j].backward(params_, f.h, f.shared_caches[j], grad_shared[j], *grads,
                              need_input_grad ? &gx : nullptr);
      if (need_input_grad) grad_h += gx;
    }
  }
  if (adapter_) adapter_->backward(params_, hashed, grad_h, *grads, nullptr);
  return loss;
}

namespace {

constexpr Eigen::Index kEvalChunk = 512;

}  // namespace

Matrix DmoeModel::routed_logits(const Matrix& hashed, std::span<const std::size_t> domains) const {
  if (static_cast<std::size_t>(hashed.cols()) != domains.size()) {
    throw ShapeError("one domain index per feature column is required");
  }
  Matrix out(2, hashed.cols());
  for (Eigen::Index start = 0; start < hashed.cols(); start += kEvalChunk) {
    const Eigen::Index len = std::min(kEvalChunk, hashed.cols() - start);
    out.middleCols(start, len) =
        forward(hashed.middleCols(start, len), domains.subspan(static_cast<std::size_t>(start),
                                                               static_cast<std::size_t>(len)),
                nullptr, nullptr);
  }
  return out;
}

std::vector<Matrix> DmoeModel::all_pathway_logits(const Matrix& hashed) const {
  std::vector<Matrix> out(domains_.size(), Matrix(2, hashed.cols()));
  for (Eigen::Index start = 0; start < hashed.cols(); start += kEvalChunk) {
    const Eigen::Index len = std::min(kEvalChunk, hashed.cols() - start);
    const Matrix chunk = hashed.middleCols(start, len);
    const std::vector<Matrix> shared = cfg_.base ? std::vector<Matrix>{} : shared_outputs(adapt(chunk));
    for (std::size_t k = 0; k < domains_.size(); ++k) {
      const std::vector<std::size_t> ks(static_cast<std::size_t>(len), k);
      out[k].middleCols(start, len) = forward(chunk, ks, nullptr, cfg_.base ? nullptr : &shared);
    }
  }
  return out;
}

Matrix DmoeModel::shared_only_logits_batch(const Matrix& hashed) const {
  const Matrix h = adapt(hashed);
  if (cfg_.base) return head_.forward(params_, h);
  if (cfg_.m2 == 0) throw ConfigError("shared-only prediction needs at least one shared expert");
  Matrix mean = Matrix::Zero(h.rows(), h.cols());
  for (const auto& e : experts_dc_) mean += e.forward(params_, h);
  mean /= static_cast<double>(cfg_.m2);
  return head_.forward(params_, mean);
}

nlohmann::json DmoeModel::sidecar() const {
  return {{"kind", "dmoe"},
          {"format_version", 1},
          {"domain_names", domains_},
          {"encoder", encoder_},
          {"arch", cfg_}};
}

void DmoeModel::save(const std::filesystem::path& path, const AdamWState* optimizer) const {
  save_checkpoint(path, params_, optimizer);
  write_json(sidecar_path(path), sidecar());
}

DmoeModel DmoeModel::load(const std::filesystem::path& path) {
  const nlohmann::json side = read_json(sidecar_path(path));
  if (side.value("kind", std::string()) != "dmoe") {
    throw CompatError(path.string() + " is not a DMoE checkpoint");
  }
  DmoeModel model(side.at("encoder").get<EncoderConfig>(), side.at("arch").get<DmoeConfig>(),
                  side.at("domain_names").get<std::vector<std::string>>());
  const Checkpoint ck = load_checkpoint(path);
  restore_params(model.params_, ck.params);
  return model;
}

nlohmann::json to_json(const TrainHistory& h) {
  nlohmann::json j{{"train_loss", h.train_loss}, {"val_accuracy", h.val_accuracy}, {"val_f1", h.val_f1}};
  j["best_epoch"] = h.best_epoch ? nlohmann::json(*h.best_epoch) : nlohmann::json(nullptr);
  return j;
}

EncodedSet encode_for_model(const DmoeModel& model, std::span<const Sample> samples) {
  EncodedSet set;
  set.features.resize(static_cast<Eigen::Index>(model.dim()), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (!s.domain) throw DomainError("sample " + std::to_string(i) + " has no domain tag");
    set.domains.push_back(model.require_domain(*s.domain));
    set.labels.push_back(s.label);
    set.features.col(static_cast<Eigen::Index>(i)) = encode(model.encoder(), s.text);
  }
  return set;
}

namespace {

Metrics evaluate_routed(const DmoeModel& model, const EncodedSet& set) {
  const Matrix logits = model.routed_logits(set.features, set.domains);
  Metrics m;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    m.add(classify_logits(logits.col(c)).label, set.labels[static_cast<std::size_t>(c)]);
  }
  return m;
}

std::vector<std::vector<std::size_t>> make_batches(const EncodedSet& set, const Stage1Config& cfg,
                                                   std::size_t epoch) {
  Rng rng(cfg.seed, "stage1.epoch." + std::to_string(epoch));
  const std::size_t n = set.labels.size();
  std::vector<std::vector<std::size_t>> batches;
  if (!cfg.domain_pure_batches) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    for (std::size_t s = 0; s < n; s += cfg.batch_size) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + cfg.batch_size)));
    }
    return batches;
  }
  std::size_t max_domain = 0;
  for (std::size_t k : set.domains) max_domain = std::max(max_domain, k);
  std::vector<std::vector<std::size_t>> by_domain(max_domain + 1);
  for (std::size_t i = 0; i < n; ++i) by_domain[set.domains[i]].push_back(i);
  for (auto& members : by_domain) {
    rng.shuffle(members.begin(), members.end());
    for (std::size_t s = 0; s < members.size(); s += cfg.batch_size) {
      batches.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(s),
                           members.begin() + static_cast<std::ptrdiff_t>(std::min(members.size(), s + cfg.batch_size)));
    }
  }
  rng.shuffle(batches.begin(), batches.end());
  return batches;
}

}  // namespace

TrainHistory train_stage1(DmoeModel& model, std::span<const Sample> train, std::span<const Sample> val,
                          const Stage1Config& cfg, AdamWState* optimizer) {
  if (train.empty()) throw DataError("empty training set");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  const EncodedSet train_set = encode_for_model(model, train);
  const EncodedSet val_set = encode_for_model(model, val);
  TrainHistory history;
  if (cfg.epochs == 0) return history;

  AdamWState local(model.params(), AdamWHyper{.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  AdamWState& state = optimizer != nullptr ? *optimizer : local;
  if (optimizer != nullptr) {
    state.hyper.lr = cfg.lr;
    state.hyper.weight_decay = cfg.weight_decay;
    state.resize(model.params());
  }
  Gradients grads(model.params());
  std::optional<ParamStore> best;
  double best_f1 = -1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = make_batches(train_set, cfg, epoch);
    for (const auto& batch : batches) {
      std::vector<Eigen::Index> cols(batch.begin(), batch.end());
      std::vector<int> labels;
      std::vector<std::size_t> domains;
      for (std::size_t i : batch) {
        labels.push_back(train_set.labels[i]);
        domains.push_back(train_set.domains[i]);
      }
      const Matrix x = train_set.features(Eigen::all, cols);
      grads.clear();
      const double loss = model.loss_and_gradient(x, labels, domains, &grads);
      if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
      loss_sum += loss;
      adamw_step(model.params(), grads, state);
    }
    history.train_loss.push_back(loss_sum / static_cast<double>(batches.size()));
    if (val_set.labels.empty()) {
      history.val_accuracy.push_back(std::numeric_limits<double>::quiet_NaN());
      history.val_f1.push_back(std::numeric_limits<double>::quiet_NaN());
      history.best_epoch = epoch;
      continue;
    }
    const Metrics m = evaluate_routed(model, val_set);
    history.val_accuracy.push_back(m.accuracy());
    history.val_f1.push_back(m.f1());
    if (m.f1() > best_f1) {
      best_f1 = m.f1();
      history.best_epoch = epoch;
      if (cfg.select_best) best = model.params();
    }
  }
  if (cfg.select_best && best) model.params() = std::move(*best);
  return history;
}

}  // namespace deer
