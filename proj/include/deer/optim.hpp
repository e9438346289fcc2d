#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "deer/params.hpp"

namespace deer {

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Moments are indexed like the ParamStore they were created against. Each
// parameter keeps its own update count, since domain experts are only
// stepped on batches that reach them.
struct AdamWState {
  AdamWHyper hyper;
  std::size_t step = 0;
  std::vector<std::size_t> counts;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  AdamWState() = default;
  AdamWState(const ParamStore& store, AdamWHyper h);

  // Grows the moment table after parameters were appended to the store.
  void resize(const ParamStore& store);
};

// Decoupled-weight-decay Adam applied to every parameter that is touched in
// grads and not frozen. Frozen or untouched parameters are left bit-identical.
void adamw_step(ParamStore& store, const Gradients& grads, AdamWState& state);

using LossFn = std::function<double(const ParamStore&)>;

// Central differences, one coordinate at a time. `only` restricts the
// parameters perturbed; empty means every unfrozen parameter.
Gradients finite_difference_gradient(const LossFn& loss, ParamStore& store, double eps = 1e-4,
                                     std::span<const ParamId> only = {});

// max over coordinates of |a-b| / max(|a|, |b|, floor), over parameters touched in either.
double max_relative_error(const ParamStore& store, const Gradients& a, const Gradients& b,
                          double floor = 1e-6);

}  // namespace deer
