#pragma once

#include <vector>

#include "aclseg/tensor.hpp"

// Raw forward/backward kernels over NHWC tensors. The autodiff layer in
// autodiff.hpp records these; they can also be called directly for inference.
namespace aclseg::ops {

enum class Padding { Same, Valid };
enum class NormMode { Train, Infer };
enum class Activation { Relu, Sigmoid };
enum class Binary { Add, Mul };

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  Padding padding = Padding::Same;
};

// Output extent and leading zero padding along one spatial axis.
struct AxisGeometry {
  int out = 0;
  int pad_before = 0;
};
AxisGeometry conv_axis(int in, int kernel, const ConvSpec& spec);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const ConvSpec& spec);

// Any of gx/gw/gb may be null. Gradients are accumulated (+=) into the targets.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                     const ConvSpec& spec, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb);

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
};

// Per-channel statistics saved by the forward pass for the backward pass.
template <typename T>
struct BatchNormCache {
  std::vector<T> mean;
  std::vector<T> inv_std;
  Tensor<T> xhat;
};

// In train mode running_mean/running_var are updated in place.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var,
                     const BatchNormOptions& opt, NormMode mode, BatchNormCache<T>* cache);

template <typename T>
void batch_norm_backward(const Tensor<T>& gy, const Tensor<T>& gamma,
                         const BatchNormCache<T>& cache, NormMode mode, Tensor<T>* gx,
                         Tensor<T>* ggamma, Tensor<T>* gbeta);

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind);

// y is the forward output; relu uses its sign, sigmoid uses y(1-y).
template <typename T>
Tensor<T> activation_backward(const Tensor<T>& y, const Tensor<T>& gy, Activation kind);

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x);

template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& y, const Tensor<T>& gy);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& x_shape, const Tensor<T>& gy);

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w);

template <typename T>
Tensor<T> bilinear_resize_backward(const Shape& x_shape, const Tensor<T>& gy);

template <typename T>
Tensor<T> nearest_resize(const Tensor<T>& x, int out_h, int out_w);

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& xs);

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int count);

// y may be the same shape as x, or N x 1 x 1 x C (broadcast over space).
template <typename T>
Tensor<T> elementwise(const Tensor<T>& x, const Tensor<T>& y, Binary kind);

template <typename T>
void elementwise_backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& gz,
                          Binary kind, Tensor<T>* gx, Tensor<T>* gy);

}  // namespace aclseg::ops
