#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "deer/params.hpp"

namespace deer {

enum class Activation { relu, tanh };

// y = W x + b with W stored as [out x in]. Batched calls take one sample per column.
struct DenseLayer {
  ParamId weight;
  ParamId bias;
  std::size_t in = 0;
  std::size_t out = 0;

  // Registers "<name>.weight" (uniform, Glorot bound) and "<name>.bias" (zeros).
  static DenseLayer create(ParamStore& store, const std::string& name, std::size_t in,
                           std::size_t out, std::uint64_t seed);

  Vector forward(const ParamStore& store, const Vector& x) const;
  Matrix forward(const ParamStore& store, const Matrix& x) const;

  // Accumulates dW and db for unfrozen parameters; writes dX when requested.
  void backward(const ParamStore& store, const Matrix& x, const Matrix& grad_out,
                Gradients& grads, Matrix* grad_in) const;

  std::size_t param_count() const noexcept { return in * out + out; }
};

Vector dense_forward(const ParamStore& store, const DenseLayer& layer, const Vector& x);

struct TwoLayerNet {
  DenseLayer first;
  DenseLayer second;
  Activation activation = Activation::relu;

  struct Cache {
    Matrix hidden;  // activation output, hidden x batch
  };

  // Registers "<name>.l1.*" and "<name>.l2.*".
  static TwoLayerNet create(ParamStore& store, const std::string& name, std::size_t in,
                            std::size_t hidden, std::size_t out, Activation act,
                            std::uint64_t seed);

  Vector forward(const ParamStore& store, const Vector& x) const;
  Matrix forward(const ParamStore& store, const Matrix& x, Cache* cache = nullptr) const;

  void backward(const ParamStore& store, const Matrix& x, const Cache& cache,
                const Matrix& grad_out, Gradients& grads, Matrix* grad_in) const;

  std::size_t in() const noexcept { return first.in; }
  std::size_t out() const noexcept { return second.out; }
  std::size_t param_count() const noexcept { return first.param_count() + second.param_count(); }
};

// Max-shifted softmax. Throws ShapeError on empty input.
Vector softmax(const Vector& logits);
// Column-wise softmax.
Matrix softmax_columns(const Matrix& logits);

inline constexpr double kLogFloor = 1e-12;

// -ln(max(probs[label], 1e-12)). Throws IndexError when label is out of range.
double cross_entropy(const Vector& probs, std::size_t label);

// Shannon entropy in nats.
double entropy(const Vector& probs);

// Argmax with ties resolved toward the smaller index.
std::size_t argmax(const Vector& v);

}  // namespace deer
