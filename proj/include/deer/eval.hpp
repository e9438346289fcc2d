#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deer/data.hpp"
#include "deer/dmoe.hpp"
#include "deer/metrics.hpp"
#include "deer/pipeline.hpp"
#include "deer/policy.hpp"

namespace deer {

//   rl          top-m fusion of policy-selected pathways
//   oracle      the sample's own domain; unknown domains use the shared experts only
//   random      one uniformly drawn pathway per sample
//   classifier  argmax of a trained domain classifier
enum class RoutingStrategy { rl, oracle, random, classifier };

RoutingStrategy parse_strategy(std::string_view name);
std::string_view to_string(RoutingStrategy s) noexcept;

struct ClassifierConfig {
  std::size_t hidden = 64;
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const ClassifierConfig& cfg);

// Domain classifier over hashed encoder features.
class DomainClassifier {
 public:
  DomainClassifier(EncoderConfig encoder, std::vector<std::string> domains, std::size_t hidden,
                   std::uint64_t seed);

  const EncoderConfig& encoder() const noexcept { return encoder_; }
  const std::vector<std::string>& domain_names() const noexcept { return domains_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  const TwoLayerNet& net() const noexcept { return net_; }

  Vector probs(std::string_view text) const;
  Matrix probs(const Matrix& hashed) const;
  std::size_t predict(std::string_view text) const;

  double train_accuracy = 0.0;
  double val_accuracy = 0.0;

 private:
  EncoderConfig encoder_;
  std::vector<std::string> domains_;
  ParamStore params_;
  TwoLayerNet net_;
};

// Cross-entropy over domain labels. DataError with fewer than two domains or
// when a sample carries no tag or one outside `domains`. Returned frozen.
DomainClassifier train_domain_classifier(const EncoderConfig& encoder, const std::vector<std::string>& domains,
                                         std::span<const Sample> train, std::span<const Sample> val,
                                         const ClassifierConfig& cfg);

struct EvalOptions {
  RoutingStrategy strategy = RoutingStrategy::rl;
  std::size_t m = 3;
  bool renormalize = false;
  bool buckets = false;
  std::uint64_t seed = 0;
};

inline constexpr std::string_view kUntagged = "(untagged)";

struct EvalReport {
  RoutingStrategy strategy = RoutingStrategy::rl;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  Metrics pooled;
  std::map<std::string, Metrics> per_domain;
  std::map<std::string, Metrics> buckets;  // "<=100", "101-200", "201-300", ">300"
  std::vector<int> predictions;
};

nlohmann::json to_json(const EvalReport& r);

// Bucket name of a token count.
std::string length_bucket(std::size_t tokens);

// ConfigError when the strategy's artifact (router or classifier) is missing,
// DataError for untagged samples under oracle routing or an empty dataset.
// The base layout ignores routing.
EvalReport evaluate(const DmoeModel& model, const PolicyRouter* router, const DomainClassifier* classifier,
                    std::span<const Sample> samples, const EvalOptions& opts);

// Evaluates each domain's test split and returns the per-domain reports keyed by name.
std::map<std::string, EvalReport> evaluate_domains(const DmoeModel& model, const PolicyRouter* router,
                                                   const DomainClassifier* classifier,
                                                   const ExperimentData& data,
                                                   std::span<const std::string> domains, const EvalOptions& opts);

enum class AblationKind { expert_type, routing };

AblationKind parse_ablation_kind(std::string_view name);
std::string_view to_string(AblationKind k) noexcept;

struct AblationConfig {
  PipelineConfig pipeline = PipelineConfig::desk();
  ClassifierConfig classifier;
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

struct DomainSummary {
  std::vector<double> f1;
  std::vector<double> acc;
  double f1_mean() const;
  double f1_std() const;
  double acc_mean() const;
  double acc_std() const;
};

struct AblationRow {
  std::string variant;
  std::map<std::string, DomainSummary> per_domain;
  std::vector<double> ood_mean_f1;  // one value per seed
  std::vector<double> ind_mean_f1;
};

struct AblationReport {
  AblationKind kind = AblationKind::expert_type;
  std::vector<std::string> source;
  std::vector<std::string> ood;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  std::vector<AblationRow> rows;

  const AblationRow& row(std::string_view variant) const;
};

// Rows: expert_type -> base, no-ds, no-shared, full (all routed by the policy);
// routing -> oracle, random, classifier, rl (one full model per seed).
AblationReport run_ablation(AblationKind kind, const ExperimentData& data, const AblationConfig& cfg);

// Concatenates rows of reports over different corpora (same kind and variants).
AblationReport merge_ablation(std::span<const AblationReport> reports);

nlohmann::json to_json(const AblationReport& r);
std::string format_table(const AblationReport& r);

double mean_of(std::span<const double> v);
// Population standard deviation.
double std_of(std::span<const double> v);

}  // namespace deer
