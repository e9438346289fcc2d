#include "deer/pipeline.hpp"

#include "deer/errors.hpp"
#include "deer/rng.hpp"

namespace deer {

ExperimentData ExperimentData::from_corpus(const SyntheticCorpus& corpus) {
  ExperimentData d;
  for (const DomainData& dom : corpus.domains) {
    (dom.source ? d.source : d.ood).push_back(dom.name);
    d.train[dom.name] = dom.train;
    d.val[dom.name] = dom.val;
    d.test[dom.name] = dom.test;
  }
  return d;
}

ExperimentData ExperimentData::from_dir(const CorpusDir& dir) {
  ExperimentData d;
  d.source = dir.source;
  d.ood = dir.ood;
  auto load_if = [&](const std::string& name, const char* split, auto& into) {
    if (dir.has(name, split)) into[name] = dir.load(name, split);
  };
  for (const auto& name : d.source) {
    if (!dir.has(name, "train")) throw DataError("source domain " + name + " has no train split");
    load_if(name, "train", d.train);
    load_if(name, "val", d.val);
    load_if(name, "test", d.test);
  }
  for (const auto& name : d.ood) {
    load_if(name, "train", d.train);
    load_if(name, "val", d.val);
    load_if(name, "test", d.test);
  }
  return d;
}

std::vector<Sample> ExperimentData::pooled(std::string_view split, std::span<const std::string> domains) const {
  const auto& table = split == "train" ? train : split == "val" ? val : test;
  std::vector<Sample> out;
  for (const auto& name : domains) {
    auto it = table.find(name);
    if (it == table.end()) continue;
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

Ablation parse_ablation(std::string_view name) {
  if (name == "none") return Ablation::none;
  if (name == "no-ds") return Ablation::no_domain_specific;
  if (name == "no-shared") return Ablation::no_shared;
  if (name == "base") return Ablation::base;
  throw ArgumentError("unknown ablation '" + std::string(name) + "'");
}

std::string_view to_string(Ablation a) noexcept {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_domain_specific: return "no-ds";
    case Ablation::no_shared: return "no-shared";
    case Ablation::base: return "base";
  }
  return "none";
}

DmoeConfig apply_ablation(DmoeConfig arch, Ablation a) {
  switch (a) {
    case Ablation::none: break;
    case Ablation::no_domain_specific: arch.m1 = 0; break;
    case Ablation::no_shared: arch.m2 = 0; break;
    case Ablation::base: arch.base = true; break;
  }
  return arch;
}

PipelineConfig PipelineConfig::reference() { return PipelineConfig{}; }

PipelineConfig PipelineConfig::desk() {
  PipelineConfig c;
  c.encoder.dim = 256;
  c.arch.expert_hidden = 32;
  c.arch.head_hidden = 64;
  c.stage1.epochs = 5;
  c.stage1.lr = 1e-3;
  c.policy.epochs = 20;
  c.policy.hidden = 64;
  return c;
}

PipelineConfig PipelineConfig::with_seed(std::uint64_t seed) const {
  PipelineConfig c = *this;
  c.arch.seed = derive_seed(seed, "arch");
  c.stage1.seed = derive_seed(seed, "stage1");
  c.policy.seed = derive_seed(seed, "policy");
  return c;
}

nlohmann::json to_json(const PipelineConfig& c) {
  return {{"encoder", c.encoder}, {"arch", c.arch}, {"stage1", c.stage1}, {"policy", c.policy}, {"m", c.m}};
}

TrainedPipeline train_pipeline(const ExperimentData& data, const PipelineConfig& cfg) {
  const std::vector<Sample> train = data.pooled("train", data.source);
  const std::vector<Sample> val = data.pooled("val", data.source);
  TrainedPipeline out{DmoeModel(cfg.encoder, cfg.arch, data.source), std::nullopt, {}, {}};
  out.stage1 = train_stage1(out.model, train, val, cfg.stage1);
  out.model.params().set_all_frozen(true);
  if (!cfg.arch.base) {
    PolicyRouter router(cfg.encoder.dim, data.source, cfg.policy.hidden, cfg.policy.seed);
    out.policy = train_policy(router, out.model, train, cfg.policy);
    out.router = std::move(router);
  }
  return out;
}

}  // namespace deer
