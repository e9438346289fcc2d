#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deer/dmoe.hpp"
#include "deer/policy.hpp"

namespace deer {

inline constexpr std::size_t kDefaultTopM = 3;

struct DomainChoice {
  std::size_t index = 0;
  double prob = 0.0;
};

// min(m, n) domains ordered by probability, ties toward the smaller index.
// ArgumentError when m < 1.
std::vector<DomainChoice> top_m(const Vector& probs, std::size_t m);
std::vector<DomainChoice> route_top_m(const PolicyRouter& router, const Vector& state, std::size_t m);

struct EnsembleOptions {
  std::size_t m = kDefaultTopM;
  bool renormalize = false;  // rescale the kept probabilities to sum to 1
};

// softmax(sum_j w_j * logits_j) over the given pathway logits and choices.
Vector fuse_pathway_logits(const std::vector<DomainChoice>& choices, const std::vector<Vector>& logits,
                           bool renormalize);

Vector ensemble_predict(const DmoeModel& model, const PolicyRouter& router, std::string_view text,
                        const EnsembleOptions& opts = {});

struct DetectionResult {
  Vector class_probs;
  int label = kHuman;
  std::vector<std::pair<std::string, double>> selected;
  std::size_t m_used = 0;
};

nlohmann::json to_json(const DetectionResult& r);

// CompatError when the router and model disagree on dimension or domains.
void check_compatible(const DmoeModel& model, const PolicyRouter& router);

DetectionResult detect(const DmoeModel& model, const PolicyRouter& router, std::string_view text,
                       const EnsembleOptions& opts = {});

// Batched detect over all texts. Agrees with detect() up to summation order.
std::vector<DetectionResult> detect_batch(const DmoeModel& model, const PolicyRouter& router,
                                          const std::vector<std::string>& texts, const EnsembleOptions& opts = {});

}  // namespace deer
