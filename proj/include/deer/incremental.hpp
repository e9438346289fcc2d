#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "deer/data.hpp"
#include "deer/dmoe.hpp"

namespace deer {

struct ComponentCount {
  std::size_t total = 0;
  std::size_t trainable = 0;
};

struct ParamReport {
  std::size_t trainable = 0;
  std::size_t frozen = 0;
  double fraction = 1.0;  // trainable / (trainable + frozen)
  // "adapter", "experts_dc", "experts_ds.<name>", "gates.<name>", "head"
  std::map<std::string, ComponentCount> per_component;
};

ParamReport param_report(const DmoeModel& model);
nlohmann::json to_json(const ParamReport& r);

struct ExpandConfig {
  Stage1Config stage1;
  bool freeze_head = false;  // strict mode: only the new group and the shared experts train
};

struct ExpandResult {
  std::size_t domain_index = 0;
  TrainHistory history;
  ParamReport params;
};

// Appends an expert group and gate for new_domain, freezes everything except
// the new group, its gate, the shared experts and (unless strict) the head,
// then runs supervised training on the new domain's data. Samples are routed
// through the new pathway whatever their tag. ArgumentError on a duplicate
// name, ConfigError for the base layout.
ExpandResult expand_domain(DmoeModel& model, const std::string& new_domain, std::span<const Sample> train,
                           std::span<const Sample> val, const ExpandConfig& cfg);

}  // namespace deer
