#include "aclseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace aclseg {

// ---------------------------------------------------------------- ParamStore

template <typename T>
void ParamStore<T>::add(const std::string& name, Tensor<T> value) {
  if (params_.count(name) || buffers_.count(name))
    throw ArgumentError("duplicate parameter name: " + name);
  Tensor<T> g = Tensor<T>::zeros_like(value);
  params_.emplace(name, Entry{std::move(value), std::move(g)});
}

template <typename T>
void ParamStore<T>::add_buffer(const std::string& name, Tensor<T> value) {
  if (params_.count(name) || buffers_.count(name))
    throw ArgumentError("duplicate buffer name: " + name);
  buffers_.emplace(name, std::move(value));
}

template <typename T>
Tensor<T>& ParamStore<T>::value(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("unknown parameter: " + name);
  return it->second.value;
}

template <typename T>
const Tensor<T>& ParamStore<T>::value(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("unknown parameter: " + name);
  return it->second.value;
}

template <typename T>
Tensor<T>& ParamStore<T>::grad(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("unknown parameter: " + name);
  return it->second.grad;
}

template <typename T>
const Tensor<T>& ParamStore<T>::grad(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("unknown parameter: " + name);
  return it->second.grad;
}

template <typename T>
Tensor<T>& ParamStore<T>::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ArgumentError("unknown buffer: " + name);
  return it->second;
}

template <typename T>
const Tensor<T>& ParamStore<T>::buffer(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ArgumentError("unknown buffer: " + name);
  return it->second;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& [name, e] : params_) e.grad.fill(T(0));
}

template <typename T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : params_) n += e.value.size();
  return n;
}

template class ParamStore<float>;
template class ParamStore<double>;

// ---------------------------------------------------------------------- Tape

template <typename T>
int Tape<T>::push(Node node) {
  if (consumed_) throw ArgumentError("tape already consumed by backward(); record a new pass");
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  return {this, push(std::move(n))};
}

template <typename T>
Var<T> Tape<T>::input(Tensor<T> value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  return {this, push(std::move(n))};
}

template <typename T>
Var<T> Tape<T>::param(const std::string& name) {
  if (!store_) throw ArgumentError("tape has no parameter store bound");
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return {this, it->second};
  Node n;
  n.value = store_->value(name);
  n.requires_grad = grad_enabled_;
  n.param_name = name;
  const int id = push(std::move(n));
  param_ids_.emplace(name, id);
  return {this, id};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  return {this, push(std::move(n))};
}

template <typename T>
std::vector<std::string> Tape<T>::param_names() const {
  std::vector<std::string> names;
  for (const auto& [name, id] : param_ids_) names.push_back(name);
  return names;
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var<T> v) const {
  return nodes_.at(v.id).value;
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad) return *n.grad;
  return Tensor<T>::zeros_like(n.value);
}

template <typename T>
Tensor<T>* Tape<T>::grad_sink(int id) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return nullptr;
  if (!n.grad) n.grad.emplace(n.value.shape());
  return &*n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw ArgumentError("backward: variable belongs to another tape");
  if (consumed_) throw ArgumentError("backward called twice on the same tape");
  Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1)
    throw ArgumentError("backward requires a scalar loss, got shape " + root.value.shape().str());
  if (!root.requires_grad) throw ArgumentError("loss does not depend on any differentiable input");
  root.grad.emplace(root.value.shape(), T(1));

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.backward && n.grad) n.backward(*n.grad);
  }

  for (auto& n : nodes_) {
    if (!n.param_name.empty() && n.grad && store_) {
      Tensor<T>& g = store_->grad(n.param_name);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*n.grad)[i];
    }
    const bool leaf = !n.backward;
    n.backward = nullptr;
    if (!leaf) n.grad.reset();
  }
  consumed_ = true;
}

template class Tape<float>;
template class Tape<double>;

// ------------------------------------------------------------------ ad:: ops

namespace ad {

namespace {

template <typename T>
bool any_grad(std::initializer_list<Var<T>> vs) {
  for (auto v : vs)
    if (v.tape->requires_grad(v)) return true;
  return false;
}

template <typename T>
void accumulate(Tape<T>* tape, int id, const Tensor<T>& g) {
  if (Tensor<T>* sink = tape->grad_sink(id))
    for (std::size_t i = 0; i < g.size(); ++i) (*sink)[i] += g[i];
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> bias, const ops::ConvSpec& spec) {
  Tape<T>* tape = x.tape;
  Tensor<T> y = ops::conv2d(x.value(), w.value(), bias ? &bias->value() : nullptr, spec);
  const bool rg = any_grad({x, w}) || (bias && tape->requires_grad(*bias));
  const int xi = x.id, wi = w.id, bi = bias ? bias->id : -1;
  return tape->record(std::move(y), rg, [tape, xi, wi, bi, spec](const Tensor<T>& gy) {
    const Tensor<T>& xv = tape->value({tape, xi});
    const Tensor<T>& wv = tape->value({tape, wi});
    ops::conv2d_backward(xv, wv, gy, spec, tape->grad_sink(xi), tape->grad_sink(wi),
                         bi >= 0 ? tape->grad_sink(bi) : nullptr);
  });
}

template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, const ops::BatchNormOptions& opt, ops::NormMode mode) {
  Tape<T>* tape = x.tape;
  auto cache = std::make_shared<ops::BatchNormCache<T>>();
  Tensor<T> y = ops::batch_norm(x.value(), gamma.value(), beta.value(), running_mean, running_var,
                                opt, mode, cache.get());
  const bool rg = any_grad({x, gamma, beta});
  const int xi = x.id, gi = gamma.id, bi = beta.id;
  return tape->record(std::move(y), rg, [tape, xi, gi, bi, mode, cache](const Tensor<T>& gy) {
    ops::batch_norm_backward(gy, tape->value({tape, gi}), *cache, mode, tape->grad_sink(xi),
                             tape->grad_sink(gi), tape->grad_sink(bi));
  });
}

// The output id is the next slot on the tape, so closures can read the
// recorded output instead of holding a copy.
template <typename T>
Var<T> activation(Var<T> x, ops::Activation kind) {
  Tape<T>* tape = x.tape;
  const int xi = x.id;
  const int yi = static_cast<int>(tape->size());
  return tape->record(ops::activation(x.value(), kind), tape->requires_grad(x),
                      [tape, xi, yi, kind](const Tensor<T>& gy) {
                        accumulate(tape, xi,
                                   ops::activation_backward(tape->value({tape, yi}), gy, kind));
                      });
}

template <typename T>
Var<T> softmax_channels(Var<T> x) {
  Tape<T>* tape = x.tape;
  const int xi = x.id;
  const int yi = static_cast<int>(tape->size());
  return tape->record(ops::softmax_channels(x.value()), tape->requires_grad(x),
                      [tape, xi, yi](const Tensor<T>& gy) {
                        accumulate(tape, xi,
                                   ops::softmax_channels_backward(tape->value({tape, yi}), gy));
                      });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  Tape<T>* tape = x.tape;
  const int xi = x.id;
  const Shape xs = x.shape();
  return tape->record(ops::global_avg_pool(x.value()), tape->requires_grad(x),
                      [tape, xi, xs](const Tensor<T>& gy) {
                        accumulate(tape, xi, ops::global_avg_pool_backward(xs, gy));
                      });
}

template <typename T>
Var<T> bilinear_resize(Var<T> x, int out_h, int out_w) {
  Tape<T>* tape = x.tape;
  const int xi = x.id;
  const Shape xs = x.shape();
  return tape->record(ops::bilinear_resize(x.value(), out_h, out_w), tape->requires_grad(x),
                      [tape, xi, xs](const Tensor<T>& gy) {
                        accumulate(tape, xi, ops::bilinear_resize_backward(xs, gy));
                      });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ArgumentError("concat_channels needs at least one tensor");
  Tape<T>* tape = xs.front().tape;
  std::vector<const Tensor<T>*> values;
  std::vector<int> ids, widths;
  bool rg = false;
  for (auto v : xs) {
    values.push_back(&v.value());
    ids.push_back(v.id);
    widths.push_back(v.value().c());
    rg = rg || tape->requires_grad(v);
  }
  return tape->record(ops::concat_channels(values), rg, [tape, ids, widths](const Tensor<T>& gy) {
    int begin = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tape->requires_grad({tape, ids[k]}))
        accumulate(tape, ids[k], ops::slice_channels(gy, begin, widths[k]));
      begin += widths[k];
    }
  });
}

template <typename T>
Var<T> slice_channels(Var<T> x, int begin, int count) {
  Tape<T>* tape = x.tape;
  const int xi = x.id;
  return tape->record(ops::slice_channels(x.value(), begin, count), tape->requires_grad(x),
                      [tape, xi, begin, count](const Tensor<T>& gy) {
                        Tensor<T>* sink = tape->grad_sink(xi);
                        if (!sink) return;
                        const std::size_t C = static_cast<std::size_t>(sink->c());
                        const std::size_t pixels = sink->size() / C;
                        for (std::size_t p = 0; p < pixels; ++p)
                          for (int c = 0; c < count; ++c)
                            (*sink)[p * C + begin + c] += gy[p * count + c];
                      });
}

template <typename T>
Var<T> elementwise(Var<T> x, Var<T> y, ops::Binary kind) {
  Tape<T>* tape = x.tape;
  const int xi = x.id, yi = y.id;
  return tape->record(ops::elementwise(x.value(), y.value(), kind), any_grad({x, y}),
                      [tape, xi, yi, kind](const Tensor<T>& gz) {
                        ops::elementwise_backward(tape->value({tape, xi}), tape->value({tape, yi}),
                                                  gz, kind, tape->grad_sink(xi),
                                                  tape->grad_sink(yi));
                      });
}

template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>* tape = x.tape;
  const int xi = x.id;
  T s = 0;
  for (T v : x.value().data()) s += v;
  return tape->record(Tensor<T>(Shape{}, s), tape->requires_grad(x), [tape, xi](const Tensor<T>& g) {
    if (Tensor<T>* sink = tape->grad_sink(xi))
      for (std::size_t i = 0; i < sink->size(); ++i) (*sink)[i] += g[0];
  });
}

template <typename T>
Var<T> sum_squares(Var<T> x) {
  Tape<T>* tape = x.tape;
  const int xi = x.id;
  T s = 0;
  for (T v : x.value().data()) s += v * v;
  return tape->record(Tensor<T>(Shape{}, s), tape->requires_grad(x), [tape, xi](const Tensor<T>& g) {
    const Tensor<T>& xv = tape->value({tape, xi});
    if (Tensor<T>* sink = tape->grad_sink(xi))
      for (std::size_t i = 0; i < sink->size(); ++i) (*sink)[i] += T(2) * xv[i] * g[0];
  });
}

template <typename T>
Var<T> weighted_sum(Var<T> x, const Tensor<T>& weights) {
  if (weights.shape() != x.shape()) throw ShapeError("weighted_sum: weight shape mismatch");
  Tape<T>* tape = x.tape;
  const int xi = x.id;
  T s = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += x.value()[i] * weights[i];
  return tape->record(Tensor<T>(Shape{}, s), tape->requires_grad(x),
                      [tape, xi, weights](const Tensor<T>& g) {
                        if (Tensor<T>* sink = tape->grad_sink(xi))
                          for (std::size_t i = 0; i < sink->size(); ++i)
                            (*sink)[i] += weights[i] * g[0];
                      });
}

#define ACLSEG_INSTANTIATE_AD(T)                                                               \
  template Var<T> conv2d(Var<T>, Var<T>, std::optional<Var<T>>, const ops::ConvSpec&);         \
  template Var<T> batch_norm(Var<T>, Var<T>, Var<T>, Tensor<T>&, Tensor<T>&,                   \
                             const ops::BatchNormOptions&, ops::NormMode);                     \
  template Var<T> activation(Var<T>, ops::Activation);                                         \
  template Var<T> softmax_channels(Var<T>);                                                    \
  template Var<T> global_avg_pool(Var<T>);                                                     \
  template Var<T> bilinear_resize(Var<T>, int, int);                                           \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                                 \
  template Var<T> slice_channels(Var<T>, int, int);                                            \
  template Var<T> elementwise(Var<T>, Var<T>, ops::Binary);                                    \
  template Var<T> sum(Var<T>);                                                                 \
  template Var<T> sum_squares(Var<T>);                                                         \
  template Var<T> weighted_sum(Var<T>, const Tensor<T>&);

ACLSEG_INSTANTIATE_AD(float)
ACLSEG_INSTANTIATE_AD(double)

}  // namespace ad

// ------------------------------------------------------- finite differences

namespace {

double central_difference(const ScalarObjective& f, ParamStore<double>& store, double& slot,
                          double h) {
  const double saved = slot;
  slot = saved + h;
  const double up = f(store);
  slot = saved - h;
  const double down = f(store);
  slot = saved;
  return (up - down) / (2 * h);
}

}  // namespace

std::map<std::string, Tensor<double>> finite_diff_grad(const ScalarObjective& f,
                                                       ParamStore<double>& store, double h) {
  if (!(h > 0)) throw ArgumentError("finite difference step must be > 0");
  std::map<std::string, Tensor<double>> out;
  for (auto& [name, entry] : store.params()) {
    Tensor<double> g = Tensor<double>::zeros_like(entry.value);
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = central_difference(f, store, entry.value[i], h);
    out.emplace(name, std::move(g));
  }
  return out;
}

std::vector<FdSample> finite_diff_sampled(const ScalarObjective& f, ParamStore<double>& store,
                                          double h, std::size_t per_param, std::uint64_t seed) {
  if (!(h > 0)) throw ArgumentError("finite difference step must be > 0");
  std::mt19937_64 rng(seed);
  std::vector<FdSample> out;
  for (auto& [name, entry] : store.params()) {
    std::vector<std::size_t> idx(entry.value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (per_param > 0 && per_param < idx.size()) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(per_param);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx)
      out.push_back({name, i, central_difference(f, store, entry.value[i], h)});
  }
  return out;
}

Tensor<double> finite_diff_input(const std::function<double(const Tensor<double>&)>& f,
                                 const Tensor<double>& x, double h) {
  if (!(h > 0)) throw ArgumentError("finite difference step must be > 0");
  Tensor<double> probe = x;
  Tensor<double> g = Tensor<double>::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double max_relative_error(const Tensor<double>& analytic, const Tensor<double>& numeric,
                          double floor) {
  if (analytic.shape() != numeric.shape()) throw ShapeError("max_relative_error: shape mismatch");
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], b = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(b), floor});
    worst = std::max(worst, std::abs(a - b) / denom);
  }
  return worst;
}

}  // namespace aclseg
