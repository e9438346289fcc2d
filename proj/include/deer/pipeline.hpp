#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deer/data.hpp"
#include "deer/dmoe.hpp"
#include "deer/policy.hpp"

namespace deer {

// Splits per domain, with source and OOD domain lists.
struct ExperimentData {
  std::vector<std::string> source;
  std::vector<std::string> ood;
  std::map<std::string, std::vector<Sample>> train;
  std::map<std::string, std::vector<Sample>> val;
  std::map<std::string, std::vector<Sample>> test;

  static ExperimentData from_corpus(const SyntheticCorpus& corpus);
  static ExperimentData from_dir(const CorpusDir& dir);

  // Concatenation of one split ("train" | "val" | "test") over domains, in order.
  std::vector<Sample> pooled(std::string_view split, std::span<const std::string> domains) const;
};

enum class Ablation { none, no_domain_specific, no_shared, base };

Ablation parse_ablation(std::string_view name);  // none | no-ds | no-shared | base
std::string_view to_string(Ablation a) noexcept;
DmoeConfig apply_ablation(DmoeConfig arch, Ablation a);

struct PipelineConfig {
  EncoderConfig encoder;
  DmoeConfig arch;
  Stage1Config stage1;
  PolicyConfig policy;
  std::size_t m = 3;

  // Hyperparameters of the reference setup (D=768, m1=5, m2=6, 30/100 epochs, lr 2e-5/1e-3).
  static PipelineConfig reference();
  // Single-core laptop scale: smaller D and hidden widths, fewer epochs, larger stage-1 lr.
  static PipelineConfig desk();

  // Every stage seed derived from one run seed.
  PipelineConfig with_seed(std::uint64_t seed) const;
};

nlohmann::json to_json(const PipelineConfig& cfg);

struct TrainedPipeline {
  DmoeModel model;
  std::optional<PolicyRouter> router;  // absent for the base layout
  TrainHistory stage1;
  PolicyHistory policy;
};

// Stage 1 on pooled source train/val, freeze, then stage 2 on the pooled source train split.
TrainedPipeline train_pipeline(const ExperimentData& data, const PipelineConfig& cfg);

}  // namespace deer
