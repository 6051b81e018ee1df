#pragma once

#include <cstdint>
#include <vector>

#include "osmseg/tensor.hpp"

namespace osmseg {

// All feature maps are [C x H x W]; batch size is always one.

// out[o,y,x] = bias[o] + sum_{c,i,j} w[o,c,i,j] * in_padded[c, y*stride+i, x*stride+j]
// with zero padding. `bias` may be empty. Throws ShapeMismatch.
Tensor conv_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
                    int pad);

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;  // empty when the layer has no bias
};

ConvGrads conv_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                        int stride, int pad, bool has_bias);

Tensor relu(const Tensor& input);
// Gradient is passed where input > 0 and zero elsewhere (including input == 0).
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

// 2x2 max pooling with stride 2; ties go to the first element in scan order.
// Throws OddSpatialDim.
PoolResult maxpool2(const Tensor& input);
Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<std::uint32_t>& argmax,
                         const std::vector<int>& input_shape);

// Transposed convolution (no padding, no bias). Weights are [C_in x C_out x k x k];
// output spatial size is (H - 1) * stride + k. This is the adjoint of
// conv_forward with the same weights, stride and zero padding.
Tensor deconv_forward(const Tensor& input, const Tensor& weights, int stride);

struct DeconvGrads {
  Tensor input;
  Tensor weights;
};

DeconvGrads deconv_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                            int stride);

struct DropoutResult {
  Tensor output;
  std::vector<std::uint8_t> keep;  // empty when the layer acted as identity
  double scale = 1.0;
};

// Inverted dropout: survivors are scaled by 1 / (1 - rate). Identity when
// `training` is false or rate is 0.
DropoutResult dropout(const Tensor& input, double rate, std::uint64_t seed, bool training);
Tensor dropout_backward(const Tensor& grad_out, const DropoutResult& forward);

// Centre crop to (height, width); the offset is floor of half the excess.
Tensor center_crop(const Tensor& input, int height, int width);
Tensor center_crop_backward(const Tensor& grad_out, const std::vector<int>& input_shape);

// Centre-crops `upsampled` to the spatial size of `skip_scores` and adds them.
Tensor fuse_skip(const Tensor& upsampled, const Tensor& skip_scores);

// Per-pixel softmax over the channel axis. Throws NonFiniteInput.
Tensor softmax(const Tensor& scores);

}  // namespace osmseg
