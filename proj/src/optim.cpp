#include "deer/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deer/errors.hpp"

namespace deer {

AdamWState::AdamWState(const ParamStore& store, AdamWHyper h) : hyper(h) { resize(store); }

void AdamWState::resize(const ParamStore& store) {
  counts.resize(store.size(), 0);
  m.resize(store.size());
  v.resize(store.size());
}

void adamw_step(ParamStore& store, const Gradients& grads, AdamWState& state) {
  if (grads.size() != store.size()) {
    throw ShapeError("gradient table has " + std::to_string(grads.size()) +
                     " entries for a store of " + std::to_string(store.size()));
  }
  if (state.m.size() != store.size()) state.resize(store);
  ++state.step;
  const AdamWHyper& h = state.hyper;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const ParamId id{i};
    Param& p = store[id];
    if (p.frozen || !grads.touched(id)) continue;
    const std::vector<double>& g = grads.values(id);
    if (g.size() != p.size()) throw ShapeError("gradient shape mismatch for " + p.name);
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.size()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    const std::size_t t = ++state.counts[i];
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    const double decay = 1.0 - h.lr * h.weight_decay;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p.values[j] = p.values[j] * decay - h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

Gradients finite_difference_gradient(const LossFn& loss, ParamStore& store, double eps,
                                     std::span<const ParamId> only) {
  Gradients grads(store);
  std::vector<ParamId> ids(only.begin(), only.end());
  if (ids.empty()) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (!store[ParamId{i}].frozen) ids.push_back(ParamId{i});
    }
  }
  for (ParamId id : ids) {
    MatrixMap g = grads.accumulate(id);
    double* values = store[id].values.data();
    for (std::size_t j = 0; j < store[id].size(); ++j) {
      const double saved = values[j];
      values[j] = saved + eps;
      const double up = loss(store);
      values[j] = saved - eps;
      const double down = loss(store);
      values[j] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("non-finite loss while differencing " + store[id].name);
      }
      g.data()[j] = (up - down) / (2.0 * eps);
    }
  }
  return grads;
}

double max_relative_error(const ParamStore& store, const Gradients& a, const Gradients& b,
                          double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const ParamId id{i};
    if (!a.touched(id) && !b.touched(id)) continue;
    for (std::size_t j = 0; j < store[id].size(); ++j) {
      const double x = a.at(id, j);
      const double y = b.at(id, j);
      const double denom = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  }
  return worst;
}

}  // namespace deer
