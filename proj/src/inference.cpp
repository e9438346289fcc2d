#include "deer/inference.hpp"

#include <algorithm>
#include <numeric>

#include "deer/errors.hpp"

namespace deer {

std::vector<DomainChoice> top_m(const Vector& probs, std::size_t m) {
  if (m < 1) throw ArgumentError("top-m selection requires m >= 1");
  std::vector<DomainChoice> all(static_cast<std::size_t>(probs.size()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = {i, probs[static_cast<Eigen::Index>(i)]};
  std::stable_sort(all.begin(), all.end(),
                   [](const DomainChoice& a, const DomainChoice& b) { return a.prob > b.prob; });
  all.resize(std::min(m, all.size()));
  return all;
}

std::vector<DomainChoice> route_top_m(const PolicyRouter& router, const Vector& state, std::size_t m) {
  if (m < 1) throw ArgumentError("top-m selection requires m >= 1");
  return top_m(policy_forward(router.policy, router.normalizer, state), m);
}

Vector fuse_pathway_logits(const std::vector<DomainChoice>& choices, const std::vector<Vector>& logits,
                           bool renormalize) {
  double mass = 0.0;
  for (const auto& c : choices) mass += c.prob;
  const double scale = renormalize && mass > 0.0 ? 1.0 / mass : 1.0;
  Vector z = Vector::Zero(2);
  for (const auto& c : choices) z += (c.prob * scale) * logits.at(c.index);
  return softmax(z);
}

void check_compatible(const DmoeModel& model, const PolicyRouter& router) {
  if (router.policy.dim() != model.dim()) {
    throw CompatError("policy input dimension " + std::to_string(router.policy.dim()) +
                      " does not match model dimension " + std::to_string(model.dim()));
  }
  if (router.n_domains() != model.n_domains() || router.domain_names != model.domain_names()) {
    throw CompatError("policy routes over " + std::to_string(router.n_domains()) + " domains, model has " +
                      std::to_string(model.n_domains()));
  }
}

Vector ensemble_predict(const DmoeModel& model, const PolicyRouter& router, std::string_view text,
                        const EnsembleOptions& opts) {
  const Vector h = model.features(text);
  const auto choices = route_top_m(router, h, opts.m);
  std::vector<Vector> logits(model.n_domains());
  for (const auto& c : choices) logits[c.index] = model.pathway_logits_from_features(c.index, h);
  return fuse_pathway_logits(choices, logits, opts.renormalize);
}

namespace {

DetectionResult make_result(const DmoeModel& model, const std::vector<DomainChoice>& choices, Vector probs) {
  DetectionResult r;
  r.class_probs = std::move(probs);
  r.label = static_cast<int>(argmax(r.class_probs));
  for (const auto& c : choices) r.selected.emplace_back(model.domain_names()[c.index], c.prob);
  r.m_used = choices.size();
  return r;
}

}  // namespace

DetectionResult detect(const DmoeModel& model, const PolicyRouter& router, std::string_view text,
                       const EnsembleOptions& opts) {
  check_compatible(model, router);
  const Vector h = model.features(text);
  const auto choices = route_top_m(router, h, opts.m);
  std::vector<Vector> logits(model.n_domains());
  for (const auto& c : choices) logits[c.index] = model.pathway_logits_from_features(c.index, h);
  return make_result(model, choices, fuse_pathway_logits(choices, logits, opts.renormalize));
}

std::vector<DetectionResult> detect_batch(const DmoeModel& model, const PolicyRouter& router,
                                          const std::vector<std::string>& texts, const EnsembleOptions& opts) {
  check_compatible(model, router);
  if (opts.m < 1) throw ArgumentError("top-m selection requires m >= 1");
  const Matrix hashed = encode_batch(model.encoder(), texts);
  const Matrix states = model.adapt(hashed);
  const Matrix pi = router.policy.probs(router.normalizer.normalize(states));
  const std::vector<Matrix> all = model.all_pathway_logits(hashed);
  std::vector<DetectionResult> out;
  out.reserve(texts.size());
  std::vector<Vector> logits(model.n_domains());
  for (Eigen::Index c = 0; c < hashed.cols(); ++c) {
    const auto choices = top_m(pi.col(c), opts.m);
    for (const auto& ch : choices) logits[ch.index] = all[ch.index].col(c);
    out.push_back(make_result(model, choices, fuse_pathway_logits(choices, logits, opts.renormalize)));
  }
  return out;
}

nlohmann::json to_json(const DetectionResult& r) {
  nlohmann::json selected = nlohmann::json::array();
  for (const auto& [name, prob] : r.selected) selected.push_back({{"domain", name}, {"prob", prob}});
  return {{"label", r.label},
          {"probs", std::vector<double>(r.class_probs.data(), r.class_probs.data() + r.class_probs.size())},
          {"selected", selected},
          {"m", r.m_used}};
}

}  // namespace deer
