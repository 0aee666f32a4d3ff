#pragma once

#include <vector>

#include "hafuse/tape.hpp"

namespace hafuse::ag {

// All ops are pure functions of tape tensors; each records its backward rule.
// Preconditions raise DimensionError / GeometryError / ParameterError.

enum class PoolKind { max, avg };

// 2-D cross-correlation. x:(b,ic,h,w), w:(oc,ic,kh,kw), bias:(1,oc,1,1) or
// invalid ref for no bias. Zero padding, floor((n+2p-k)/s)+1 output dims.
template <typename S>
TensorRef<S> conv2d(TensorRef<S> x, TensorRef<S> w, TensorRef<S> bias, int stride, int padding);

// 1-D cross-correlation across the channel axis of a (b,c,1,1) vector with an
// odd-length kernel w:(1,1,1,k), zero padded to keep length c. No bias.
template <typename S>
TensorRef<S> conv1d_channels(TensorRef<S> v, TensorRef<S> w);

template <typename S>
TensorRef<S> pool2d(TensorRef<S> x, PoolKind kind, int k, int stride);

// Reduces the spatial plane of each (batch, channel) to 1x1.
template <typename S>
TensorRef<S> global_pool(TensorRef<S> x, PoolKind kind);

template <typename S>
TensorRef<S> upsample_nearest(TensorRef<S> x, int factor);

// Fully connected layer over the flattened (c*h*w) of each batch item.
// w:(1,1,m,n) with n = c*h*w, bias:(1,m,1,1); output (b,m,1,1).
template <typename S>
TensorRef<S> dense(TensorRef<S> x, TensorRef<S> w, TensorRef<S> bias);

template <typename S> TensorRef<S> leaky_relu(TensorRef<S> x, double slope);
template <typename S> TensorRef<S> tanh_act(TensorRef<S> x);
template <typename S> TensorRef<S> sigmoid(TensorRef<S> x);
template <typename S> TensorRef<S> abs_val(TensorRef<S> x);

template <typename S>
TensorRef<S> concat_channels(const std::vector<TensorRef<S>>& xs);

// Elementwise binary ops. The second operand broadcasts from (b,c,1,1) or
// (b,1,1,1) over the first operand's spatial (and channel) extent.
template <typename S> TensorRef<S> add(TensorRef<S> a, TensorRef<S> b);
template <typename S> TensorRef<S> sub(TensorRef<S> a, TensorRef<S> b);
template <typename S> TensorRef<S> mul(TensorRef<S> a, TensorRef<S> b);

// a / clamp(b) with the sign-preserving clamp sign(b)*max(|b|,eps) and
// sign(0) = +1; the clamp is treated as locally constant in backward.
template <typename S> TensorRef<S> div_eps(TensorRef<S> a, TensorRef<S> b, double eps);

template <typename S> TensorRef<S> scale(TensorRef<S> x, double c);
template <typename S> TensorRef<S> add_const(TensorRef<S> x, double c);

// Per-pixel maximum over channels -> (b,1,h,w); backward routes to the first
// channel attaining the maximum.
template <typename S> TensorRef<S> channel_max_map(TensorRef<S> x);

// Sobel gradient magnitude of a single-channel input (see sobel_core.hpp).
template <typename S> TensorRef<S> sobel_gradient(TensorRef<S> x);

template <typename S> TensorRef<S> sum(TensorRef<S> x);
template <typename S> TensorRef<S> mean(TensorRef<S> x);

} // namespace hafuse::ag
