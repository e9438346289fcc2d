#include "deer/incremental.hpp"

#include <vector>

#include "deer/errors.hpp"

namespace deer {

namespace {

std::string component_of(const DmoeModel& model, const std::string& name) {
  auto starts = [&](std::string_view p) { return name.compare(0, p.size(), p) == 0; };
  if (starts("adapter")) return "adapter";
  if (starts("experts_dc.")) return "experts_dc";
  if (starts("head.")) return "head";
  for (std::size_t k = 0; k < model.n_domains(); ++k) {
    if (starts(DmoeModel::domain_prefix(k))) return "experts_ds." + model.domain_names()[k];
    if (starts(DmoeModel::gate_prefix(k))) return "gates." + model.domain_names()[k];
  }
  return "other";
}

std::vector<Sample> retagged(std::span<const Sample> samples, const std::string& name) {
  std::vector<Sample> out(samples.begin(), samples.end());
  for (auto& s : out) s.domain = name;
  return out;
}

}  // namespace

ParamReport param_report(const DmoeModel& model) {
  ParamReport r;
  for (const Param& p : model.params().entries()) {
    ComponentCount& c = r.per_component[component_of(model, p.name)];
    c.total += p.size();
    if (p.frozen) {
      r.frozen += p.size();
    } else {
      r.trainable += p.size();
      c.trainable += p.size();
    }
  }
  const std::size_t total = r.trainable + r.frozen;
  r.fraction = total == 0 ? 1.0 : static_cast<double>(r.trainable) / static_cast<double>(total);
  return r;
}

nlohmann::json to_json(const ParamReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [name, c] : r.per_component) per[name] = {{"total", c.total}, {"trainable", c.trainable}};
  return {{"trainable", r.trainable}, {"frozen", r.frozen}, {"fraction", r.fraction}, {"per_component", per}};
}

ExpandResult expand_domain(DmoeModel& model, const std::string& new_domain, std::span<const Sample> train,
                           std::span<const Sample> val, const ExpandConfig& cfg) {
  if (model.config().base) throw ConfigError("the base layout has no experts to expand");
  if (model.domain_index(new_domain)) throw ArgumentError("domain '" + new_domain + "' already exists");
  if (train.empty()) throw DataError("empty training set for new domain '" + new_domain + "'");

  ExpandResult result;
  result.domain_index = model.add_domain(new_domain);
  ParamStore& params = model.params();
  params.set_all_frozen(true);
  params.set_frozen_prefix(DmoeModel::domain_prefix(result.domain_index), false);
  params.set_frozen_prefix(DmoeModel::gate_prefix(result.domain_index), false);
  params.set_frozen_prefix("experts_dc.", false);
  if (!cfg.freeze_head) params.set_frozen_prefix("head.", false);
  result.params = param_report(model);

  const std::vector<Sample> tr = retagged(train, new_domain);
  const std::vector<Sample> va = retagged(val, new_domain);
  result.history = train_stage1(model, tr, va, cfg.stage1);
  params.set_all_frozen(true);
  return result;
}

}  // namespace deer
