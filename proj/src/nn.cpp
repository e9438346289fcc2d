#include "deer/nn.hpp"

#include <cmath>

#include "deer/errors.hpp"

namespace deer {

DenseLayer DenseLayer::create(ParamStore& store, const std::string& name, std::size_t in,
                              std::size_t out, std::uint64_t seed) {
  DenseLayer layer;
  layer.in = in;
  layer.out = out;
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  layer.weight = store.add_uniform(name + ".weight", out, in, bound, seed);
  layer.bias = store.add(name + ".bias", out, 1);
  return layer;
}

Vector DenseLayer::forward(const ParamStore& store, const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != in) {
    throw ShapeError("dense input has length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(in));
  }
  Vector y = store.matrix(weight) * x;
  y += store.matrix(bias).col(0);
  return y;
}

Matrix DenseLayer::forward(const ParamStore& store, const Matrix& x) const {
  if (static_cast<std::size_t>(x.rows()) != in) {
    throw ShapeError("dense input has " + std::to_string(x.rows()) + " rows, expected " +
                     std::to_string(in));
  }
  Matrix y = store.matrix(weight) * x;
  y.colwise() += store.matrix(bias).col(0);
  return y;
}

void DenseLayer::backward(const ParamStore& store, const Matrix& x, const Matrix& grad_out,
                          Gradients& grads, Matrix* grad_in) const {
  if (static_cast<std::size_t>(grad_out.rows()) != out || grad_out.cols() != x.cols()) {
    throw ShapeError("dense backward: gradient shape does not match layer output");
  }
  if (!store[weight].frozen) grads.accumulate(weight).noalias() += grad_out * x.transpose();
  if (!store[bias].frozen) grads.accumulate(bias).col(0) += grad_out.rowwise().sum();
  if (grad_in != nullptr) *grad_in = store.matrix(weight).transpose() * grad_out;
}

Vector dense_forward(const ParamStore& store, const DenseLayer& layer, const Vector& x) {
  return layer.forward(store, x);
}

TwoLayerNet TwoLayerNet::create(ParamStore& store, const std::string& name, std::size_t in,
                                std::size_t hidden, std::size_t out, Activation act,
                                std::uint64_t seed) {
  TwoLayerNet net;
  net.first = DenseLayer::create(store, name + ".l1", in, hidden, seed);
  net.second = DenseLayer::create(store, name + ".l2", hidden, out, seed);
  net.activation = act;
  return net;
}

namespace {

void activate(Matrix& m, Activation act) {
  if (act == Activation::relu) {
    m = m.cwiseMax(0.0);
  } else {
    m = m.array().tanh().matrix();
  }
}

// Multiplies grad by the activation derivative expressed through the activation output.
void activation_backward(Matrix& grad, const Matrix& activated, Activation act) {
  if (act == Activation::relu) {
    grad = (activated.array() > 0.0).select(grad, 0.0);
  } else {
    grad.array() *= 1.0 - activated.array().square();
  }
}

}  // namespace

Vector TwoLayerNet::forward(const ParamStore& store, const Vector& x) const {
  Matrix xm = x;
  Matrix y = forward(store, xm, nullptr);
  return y.col(0);
}

Matrix TwoLayerNet::forward(const ParamStore& store, const Matrix& x, Cache* cache) const {
  Matrix h = first.forward(store, x);
  activate(h, activation);
  Matrix y = second.forward(store, h);
  if (cache != nullptr) cache->hidden = std::move(h);
  return y;
}

void TwoLayerNet::backward(const ParamStore& store, const Matrix& x, const Cache& cache,
                           const Matrix& grad_out, Gradients& grads, Matrix* grad_in) const {
  Matrix grad_hidden;
  second.backward(store, cache.hidden, grad_out, grads, &grad_hidden);
  activation_backward(grad_hidden, cache.hidden, activation);
  first.backward(store, x, grad_hidden, grads, grad_in);
}

Vector softmax(const Vector& logits) {
  if (logits.size() == 0) throw ShapeError("softmax of an empty vector");
  Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Matrix softmax_columns(const Matrix& logits) {
  if (logits.rows() == 0) throw ShapeError("softmax of an empty vector");
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    out.col(c) = softmax(logits.col(c));
  }
  return out;
}

double cross_entropy(const Vector& probs, std::size_t label) {
  if (label >= static_cast<std::size_t>(probs.size())) {
    throw IndexError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[static_cast<Eigen::Index>(label)], kLogFloor));
}

double entropy(const Vector& probs) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
  }
  return h;
}

std::size_t argmax(const Vector& v) {
  if (v.size() == 0) throw ShapeError("argmax of an empty vector");
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  }
  return best;
}

}  // namespace deer
