#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace deer {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ParamId {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t index = npos;

  bool valid() const noexcept { return index != npos; }
  friend bool operator==(ParamId, ParamId) = default;
};

struct Param {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major
  bool frozen = false;

  std::size_t size() const noexcept { return values.size(); }
};

// Flat registry of named parameter tensors. Layers hold ParamIds into a store,
// so copying a store copies the whole model state.
class ParamStore {
 public:
  ParamId add(std::string name, std::size_t rows, std::size_t cols);

  // uniform(-bound, bound) drawn from the stream derive_seed(seed, name).
  ParamId add_uniform(std::string name, std::size_t rows, std::size_t cols, double bound,
                      std::uint64_t seed);

  std::size_t size() const noexcept { return params_.size(); }
  const Param& operator[](ParamId id) const { return params_.at(id.index); }
  Param& operator[](ParamId id) { return params_.at(id.index); }
  const std::vector<Param>& entries() const noexcept { return params_; }

  std::optional<ParamId> find(std::string_view name) const;

  ConstMatrixMap matrix(ParamId id) const;
  MatrixMap matrix(ParamId id);

  void set_frozen(ParamId id, bool frozen) { (*this)[id].frozen = frozen; }
  // Applies to every parameter whose name starts with prefix; returns how many matched.
  std::size_t set_frozen_prefix(std::string_view prefix, bool frozen);
  void set_all_frozen(bool frozen);
  bool all_frozen() const noexcept;

  std::size_t total_count() const noexcept;
  std::size_t trainable_count() const noexcept;
  std::size_t count_prefix(std::string_view prefix) const noexcept;

  // Bit-exact comparison of names, shapes, values and freeze flags.
  bool identical(const ParamStore& other) const noexcept;
  // Bit-exact comparison restricted to parameters whose name starts with prefix.
  bool identical_prefix(const ParamStore& other, std::string_view prefix) const noexcept;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Gradient buffers aligned with a ParamStore. A buffer is zeroed on its first
// touch after clear(), so untouched parameters cost nothing per step.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore& store);

  // Resizes to match the store (for stores that grew) and marks everything untouched.
  void reset(const ParamStore& store);
  void clear() noexcept;

  MatrixMap accumulate(ParamId id);
  bool touched(ParamId id) const { return touched_.at(id.index); }
  std::size_t size() const noexcept { return buffers_.size(); }

  // Values of a touched buffer; an untouched parameter has an all-zero gradient.
  const std::vector<double>& values(ParamId id) const { return buffers_.at(id.index); }
  double at(ParamId id, std::size_t flat) const;

  void scale(double factor);

 private:
  std::vector<std::vector<double>> buffers_;
  std::vector<std::pair<std::size_t, std::size_t>> shapes_;
  std::vector<bool> touched_;
};

}  // namespace deer
