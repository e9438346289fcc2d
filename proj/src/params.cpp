#include "deer/params.hpp"

#include <cstring>

#include "deer/errors.hpp"
#include "deer/rng.hpp"

namespace deer {

ParamId ParamStore::add(std::string name, std::size_t rows, std::size_t cols) {
  if (index_.contains(name)) throw ArgumentError("duplicate parameter name: " + name);
  if (rows == 0 || cols == 0) throw ShapeError("parameter " + name + " has an empty shape");
  ParamId id{params_.size()};
  index_.emplace(name, id.index);
  Param p;
  p.name = std::move(name);
  p.rows = rows;
  p.cols = cols;
  p.values.assign(rows * cols, 0.0);
  params_.push_back(std::move(p));
  return id;
}

ParamId ParamStore::add_uniform(std::string name, std::size_t rows, std::size_t cols,
                                double bound, std::uint64_t seed) {
  Rng rng(seed, name);
  ParamId id = add(std::move(name), rows, cols);
  for (double& v : params_[id.index].values) v = rng.uniform(-bound, bound);
  return id;
}

std::optional<ParamId> ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return ParamId{it->second};
}

ConstMatrixMap ParamStore::matrix(ParamId id) const {
  const Param& p = (*this)[id];
  return ConstMatrixMap(p.values.data(), static_cast<Eigen::Index>(p.rows),
                        static_cast<Eigen::Index>(p.cols));
}

MatrixMap ParamStore::matrix(ParamId id) {
  Param& p = (*this)[id];
  return MatrixMap(p.values.data(), static_cast<Eigen::Index>(p.rows),
                   static_cast<Eigen::Index>(p.cols));
}

std::size_t ParamStore::set_frozen_prefix(std::string_view prefix, bool frozen) {
  std::size_t matched = 0;
  for (Param& p : params_) {
    if (p.name.starts_with(prefix)) {
      p.frozen = frozen;
      ++matched;
    }
  }
  return matched;
}

void ParamStore::set_all_frozen(bool frozen) {
  for (Param& p : params_) p.frozen = frozen;
}

bool ParamStore::all_frozen() const noexcept {
  for (const Param& p : params_) {
    if (!p.frozen) return false;
  }
  return true;
}

std::size_t ParamStore::total_count() const noexcept {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.size();
  return n;
}

std::size_t ParamStore::trainable_count() const noexcept {
  std::size_t n = 0;
  for (const Param& p : params_) {
    if (!p.frozen) n += p.size();
  }
  return n;
}

std::size_t ParamStore::count_prefix(std::string_view prefix) const noexcept {
  std::size_t n = 0;
  for (const Param& p : params_) {
    if (p.name.starts_with(prefix)) n += p.size();
  }
  return n;
}

namespace {

bool same_param(const Param& a, const Param& b) noexcept {
  if (a.name != b.name || a.rows != b.rows || a.cols != b.cols || a.frozen != b.frozen) {
    return false;
  }
  return std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0;
}

}  // namespace

bool ParamStore::identical(const ParamStore& other) const noexcept {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!same_param(params_[i], other.params_[i])) return false;
  }
  return true;
}

bool ParamStore::identical_prefix(const ParamStore& other, std::string_view prefix) const noexcept {
  for (const Param& p : params_) {
    if (!p.name.starts_with(prefix)) continue;
    auto id = other.find(p.name);
    if (!id || !same_param(p, other[*id])) return false;
  }
  for (const Param& p : other.params_) {
    if (p.name.starts_with(prefix) && !find(p.name)) return false;
  }
  return true;
}

Gradients::Gradients(const ParamStore& store) { reset(store); }

void Gradients::reset(const ParamStore& store) {
  buffers_.resize(store.size());
  shapes_.resize(store.size());
  touched_.assign(store.size(), false);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Param& p = store.entries()[i];
    shapes_[i] = {p.rows, p.cols};
  }
}

void Gradients::clear() noexcept { touched_.assign(touched_.size(), false); }

MatrixMap Gradients::accumulate(ParamId id) {
  auto& buf = buffers_.at(id.index);
  const auto [rows, cols] = shapes_[id.index];
  if (!touched_[id.index]) {
    buf.assign(rows * cols, 0.0);
    touched_[id.index] = true;
  }
  return MatrixMap(buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

double Gradients::at(ParamId id, std::size_t flat) const {
  if (!touched_.at(id.index)) return 0.0;
  return buffers_[id.index].at(flat);
}

void Gradients::scale(double factor) {
  for (std::size_t i = 0; i < buffers_.size(); ++i) {
    if (!touched_[i]) continue;
    for (double& g : buffers_[i]) g *= factor;
  }
}

}  // namespace deer
