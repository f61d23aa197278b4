#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <type_traits>
#include <string>
#include <vector>

#include "aclseg/ops.hpp"
#include "aclseg/tensor.hpp"

namespace aclseg {

// Named trainable tensors with same-shaped gradients, plus non-trainable
// buffers (batch-norm running statistics). Ordered by name so iteration and
// serialization are deterministic.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    Tensor<T> value;
    Tensor<T> grad;
  };

  void add(const std::string& name, Tensor<T> value);
  void add_buffer(const std::string& name, Tensor<T> value);

  bool has_param(const std::string& name) const { return params_.count(name) != 0; }
  bool has_buffer(const std::string& name) const { return buffers_.count(name) != 0; }

  Tensor<T>& value(const std::string& name);
  const Tensor<T>& value(const std::string& name) const;
  Tensor<T>& grad(const std::string& name);
  const Tensor<T>& grad(const std::string& name) const;
  Tensor<T>& buffer(const std::string& name);
  const Tensor<T>& buffer(const std::string& name) const;

  std::map<std::string, Entry>& params() { return params_; }
  const std::map<std::string, Entry>& params() const { return params_; }
  std::map<std::string, Tensor<T>>& buffers() { return buffers_; }
  const std::map<std::string, Tensor<T>>& buffers() const { return buffers_; }

  void zero_grad();
  std::size_t parameter_count() const;

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, e] : params_) out.add(name, e.value.template cast<U>());
    for (const auto& [name, b] : buffers_) out.add_buffer(name, b.template cast<U>());
    return out;
  }

 private:
  std::map<std::string, Entry> params_;
  std::map<std::string, Tensor<T>> buffers_;
};

template <typename T>
class Tape;

// Handle to a node recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return tape->value(*this); }
  Shape shape() const { return value().shape(); }
};

// Reverse-mode tape. Nodes are appended in execution order, so reverse id
// order is a valid topological order for the backward sweep. One tape per
// forward pass; not shared across threads.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor<T>& grad_out)>;

  // With grad_enabled = false nothing requires a gradient and no backward
  // closures are recorded (inference).
  explicit Tape(ParamStore<T>* store = nullptr, bool grad_enabled = true)
      : store_(store), grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> input(Tensor<T> value, bool requires_grad = true);
  // Same node is returned for repeated lookups of one name.
  Var<T> param(const std::string& name);
  Var<T> record(Tensor<T> value, bool requires_grad, BackwardFn fn);

  const Tensor<T>& value(Var<T> v) const;
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }
  // Gradient of a leaf after backward(); zeros if the leaf received none.
  Tensor<T> grad(Var<T> v) const;
  // Lazily allocated gradient accumulator for use inside backward closures;
  // null when the node does not require a gradient.
  Tensor<T>* grad_sink(int id);

  ParamStore<T>* store() { return store_; }
  // Names of all parameters read so far, sorted.
  std::vector<std::string> param_names() const;
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1, sweeps in reverse, adds parameter gradients into
  // the bound ParamStore, then drops the recorded graph. Leaf gradients remain
  // readable through grad().
  void backward(Var<T> loss);

 private:
  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    bool requires_grad = false;
    BackwardFn backward;
    std::string param_name;
  };
  int push(Node node);

  ParamStore<T>* store_ = nullptr;
  bool grad_enabled_ = true;
  std::deque<Node> nodes_;  // stable references while the graph grows
  std::map<std::string, int> param_ids_;
  bool consumed_ = false;
};

// Differentiable operations. Each records its output node and a closure that
// applies the matching backward kernel.
namespace ad {

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> bias, const ops::ConvSpec& spec);

template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, const ops::BatchNormOptions& opt, ops::NormMode mode);

template <typename T>
Var<T> activation(Var<T> x, ops::Activation kind);

template <typename T>
Var<T> relu(Var<T> x) {
  return activation(x, ops::Activation::Relu);
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return activation(x, ops::Activation::Sigmoid);
}

template <typename T>
Var<T> softmax_channels(Var<T> x);

template <typename T>
Var<T> global_avg_pool(Var<T> x);

template <typename T>
Var<T> bilinear_resize(Var<T> x, int out_h, int out_w);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs);

template <typename T>
Var<T> slice_channels(Var<T> x, int begin, int count);

template <typename T>
Var<T> elementwise(Var<T> x, Var<T> y, ops::Binary kind);

template <typename T>
Var<T> add(Var<T> x, Var<T> y) {
  return elementwise(x, y, ops::Binary::Add);
}

template <typename T>
Var<T> mul(Var<T> x, Var<T> y) {
  return elementwise(x, y, ops::Binary::Mul);
}

// Scalar reductions, mainly for tests and gradient checks.
template <typename T>
Var<T> sum(Var<T> x);

template <typename T>
Var<T> sum_squares(Var<T> x);

// sum(x * weights) for a constant weight tensor of the same shape.
template <typename T>
Var<T> weighted_sum(Var<T> x, const Tensor<T>& weights);

}  // namespace ad

// Central-difference gradient oracle, 64-bit only.
using ScalarObjective = std::function<double(ParamStore<double>&)>;

std::map<std::string, Tensor<double>> finite_diff_grad(const ScalarObjective& f,
                                                       ParamStore<double>& store, double h);

struct FdSample {
  std::string name;
  std::size_t index = 0;
  double numeric = 0;
};

// Same estimator on a seeded subset of at most per_param components per parameter.
std::vector<FdSample> finite_diff_sampled(const ScalarObjective& f, ParamStore<double>& store,
                                          double h, std::size_t per_param, std::uint64_t seed);

// Central differences with respect to every component of an input tensor.
Tensor<double> finite_diff_input(const std::function<double(const Tensor<double>&)>& f,
                                 const Tensor<double>& x, double h);

// |a - b| / max(|a|, |b|, floor), maximized over components.
double max_relative_error(const Tensor<double>& analytic, const Tensor<double>& numeric,
                          double floor = 1e-6);

}  // namespace aclseg
