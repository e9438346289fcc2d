#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deer/data.hpp"
#include "deer/encoder.hpp"
#include "deer/nn.hpp"
#include "deer/optim.hpp"
#include "deer/params.hpp"

namespace deer {

// Architecture of the disentangled mixture of experts.
//   m1 = 0          "w/o domain-specific": each gate mixes shared experts only
//   m2 = 0          "w/o domain-shared": each gate mixes its own domain's experts only
//   base = true     no experts or gates; the head reads the encoder output directly
struct DmoeConfig {
  std::size_t m1 = 5;
  std::size_t m2 = 6;
  std::size_t expert_hidden = 256;
  std::size_t head_hidden = 128;
  bool base = false;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t gate_width() const noexcept { return m1 + m2; }
};

void to_json(nlohmann::json& j, const DmoeConfig& cfg);
void from_json(const nlohmann::json& j, DmoeConfig& cfg);

struct ClassPrediction {
  Vector probs;  // [human, machine]
  int label = kHuman;
};

// argmax of softmax(logits) with ties going to class 0 (human).
ClassPrediction classify_logits(const Vector& logits);

class DmoeModel {
 public:
  DmoeModel(EncoderConfig encoder, DmoeConfig cfg, std::vector<std::string> domain_names);

  const EncoderConfig& encoder() const noexcept { return encoder_; }
  const DmoeConfig& config() const noexcept { return cfg_; }
  const std::vector<std::string>& domain_names() const noexcept { return domains_; }
  std::size_t n_domains() const noexcept { return domains_.size(); }
  std::size_t dim() const noexcept { return encoder_.dim; }

  std::optional<std::size_t> domain_index(std::string_view name) const;
  // Throws DomainError for unknown names.
  std::size_t require_domain(std::string_view name) const;

  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  // Hashed features passed through the adapter when one is enabled.
  Vector features(std::string_view text) const;
  Vector state(std::string_view text) const { return features(text); }
  // Adapter applied to already hashed features (columns are samples).
  Matrix adapt(const Matrix& hashed) const;

  // W_k = softmax(G_k h): first m1 entries weight domain k's experts, the rest the shared ones.
  Vector gate_weights(std::size_t k, const Vector& h) const;
  // H_k = sum_i W_k[i] e_ds^{k,i}(h) + sum_j W_k[m1+j] e_dc^j(h).
  Vector fuse(std::size_t k, const Vector& h) const;
  Vector fuse_with_weights(std::size_t k, const Vector& h, const Vector& weights) const;
  Vector head_logits(const Vector& fused) const;

  // head(fuse(k, features(x))), raw two-class logits. Base layout ignores k.
  Vector pathway_logits(std::size_t k, std::string_view text) const;
  Vector pathway_logits_from_features(std::size_t k, const Vector& h) const;
  ClassPrediction classify_pathway(std::size_t k, std::string_view text) const;

  // head(mean_j e_dc^j(h)). ConfigError when m2 == 0 (base returns head(h)).
  Vector shared_only_logits(std::string_view text) const;
  Vector shared_only_logits_from_features(const Vector& h) const;

  // Batched evaluation over hashed feature columns.
  // Logits of pathway domains[c] for column c, as a 2 x N matrix.
  Matrix routed_logits(const Matrix& hashed, std::span<const std::size_t> domains) const;
  // One 2 x N matrix per domain.
  std::vector<Matrix> all_pathway_logits(const Matrix& hashed) const;
  Matrix shared_only_logits_batch(const Matrix& hashed) const;

  // Mean cross-entropy of a batch where column c is routed through domain
  // domains[c]. Accumulates exact gradients into grads when given.
  double loss_and_gradient(const Matrix& hashed, std::span<const int> labels,
                           std::span<const std::size_t> domains, Gradients* grads) const;

  // Appends a fresh expert group and gate; returns the new domain index.
  std::size_t add_domain(const std::string& name);

  const TwoLayerNet& domain_expert(std::size_t k, std::size_t i) const { return experts_ds_.at(k).at(i); }
  const TwoLayerNet& shared_expert(std::size_t j) const { return experts_dc_.at(j); }
  const DenseLayer& gate(std::size_t k) const { return gates_.at(k); }
  const TwoLayerNet& head() const noexcept { return head_; }
  const std::optional<DenseLayer>& adapter() const noexcept { return adapter_; }

  static std::string domain_prefix(std::size_t k);  // "experts_ds.<k>."
  static std::string gate_prefix(std::size_t k);    // "gates.<k>."

  // Checkpoint plus "<path>.json" sidecar {kind, domain_names, encoder, arch}.
  void save(const std::filesystem::path& path, const AdamWState* optimizer = nullptr) const;
  static DmoeModel load(const std::filesystem::path& path);
  nlohmann::json sidecar() const;

 private:
  struct Forward;

  void build_domain(std::size_t k);
  void check_domain(std::size_t k) const;
  Matrix forward(const Matrix& hashed, std::span<const std::size_t> domains, Forward* fwd,
                 const std::vector<Matrix>* shared_outputs) const;
  std::vector<Matrix> shared_outputs(const Matrix& h) const;

  EncoderConfig encoder_;
  DmoeConfig cfg_;
  std::vector<std::string> domains_;
  ParamStore params_;
  std::optional<DenseLayer> adapter_;
  std::vector<std::vector<TwoLayerNet>> experts_ds_;
  std::vector<TwoLayerNet> experts_dc_;
  std::vector<DenseLayer> gates_;
  TwoLayerNet head_;
};

struct Stage1Config {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 2e-5;
  double weight_decay = 0.01;
  bool domain_pure_batches = false;
  bool select_best = true;  // restore the epoch with the best validation F1
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const Stage1Config& cfg);

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;
  std::vector<double> val_f1;
  std::optional<std::size_t> best_epoch;
};

nlohmann::json to_json(const TrainHistory& h);

// Hashed features of every sample plus the domain index each one routes through.
struct EncodedSet {
  Matrix features;  // D x N
  std::vector<int> labels;
  std::vector<std::size_t> domains;
};

// DomainError when a sample has no tag or a tag the model does not know.
EncodedSet encode_for_model(const DmoeModel& model, std::span<const Sample> samples);

// Supervised training where each sample passes through its own domain's gate
// and experts. Parameters of domains absent from a batch are not stepped.
TrainHistory train_stage1(DmoeModel& model, std::span<const Sample> train,
                          std::span<const Sample> val, const Stage1Config& cfg,
                          AdamWState* optimizer = nullptr);

}  // namespace deer
