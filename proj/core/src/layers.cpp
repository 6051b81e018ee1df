#include "osmseg/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "osmseg/error.hpp"
#include "osmseg/rng.hpp"

namespace osmseg {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<RowMat>;
using CMapR = Eigen::Map<const RowMat>;

void require_rank3(const Tensor& t, const char* what) {
  if (t.rank() != 3) throw ShapeMismatch(std::string(what) + " must be [C x H x W], got " + shape_string(t.shape()));
}

int conv_out_size(int in, int k, int stride, int pad) {
  const int span = in + 2 * pad - k;
  if (span < 0 || span % stride != 0) {
    throw ShapeMismatch("input extent " + std::to_string(in) + " with kernel " + std::to_string(k) +
                        ", stride " + std::to_string(stride) + ", pad " + std::to_string(pad) +
                        " does not tile exactly");
  }
  return span / stride + 1;
}

// Rows are (c, i, j), columns are output positions.
std::vector<double> im2col(const Tensor& in, int k, int stride, int pad, int ho, int wo) {
  const int c_in = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t cols = static_cast<std::size_t>(ho) * wo;
  std::vector<double> col(static_cast<std::size_t>(c_in) * k * k * cols, 0.0);
  const double* src = in.ptr();
  for (int c = 0; c < c_in; ++c) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        double* row = col.data() + ((static_cast<std::size_t>(c) * k + i) * k + j) * cols;
        for (int y = 0; y < ho; ++y) {
          const int iy = y * stride + i - pad;
          if (iy < 0 || iy >= h) continue;
          const double* line = src + (static_cast<std::size_t>(c) * h + iy) * w;
          double* dst = row + static_cast<std::size_t>(y) * wo;
          for (int x = 0; x < wo; ++x) {
            const int ix = x * stride + j - pad;
            if (ix >= 0 && ix < w) dst[x] = line[ix];
          }
        }
      }
    }
  }
  return col;
}

void col2im(const double* col, int c_out, int h, int w, int k, int stride, int pad, int ho, int wo,
            double* dst) {
  const std::size_t cols = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < c_out; ++c) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        const double* row = col + ((static_cast<std::size_t>(c) * k + i) * k + j) * cols;
        for (int y = 0; y < ho; ++y) {
          const int iy = y * stride + i - pad;
          if (iy < 0 || iy >= h) continue;
          double* line = dst + (static_cast<std::size_t>(c) * h + iy) * w;
          const double* src = row + static_cast<std::size_t>(y) * wo;
          for (int x = 0; x < wo; ++x) {
            const int ix = x * stride + j - pad;
            if (ix >= 0 && ix < w) line[ix] += src[x];
          }
        }
      }
    }
  }
}

bool is_pointwise(int k, int stride, int pad) { return k == 1 && stride == 1 && pad == 0; }

}  // namespace

Tensor conv_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
                    int pad) {
  require_rank3(input, "conv input");
  if (weights.rank() != 4 || weights.dim(1) != input.dim(0) || weights.dim(2) != weights.dim(3)) {
    throw ShapeMismatch("conv weights " + shape_string(weights.shape()) + " vs input " +
                        shape_string(input.shape()));
  }
  if (stride < 1 || pad < 0) throw ShapeMismatch("invalid stride/pad");
  const int c_out = weights.dim(0), k = weights.dim(2);
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
    throw ShapeMismatch("conv bias " + shape_string(bias.shape()) + " for " + std::to_string(c_out) + " filters");
  }
  const int ho = conv_out_size(input.dim(1), k, stride, pad);
  const int wo = conv_out_size(input.dim(2), k, stride, pad);
  const int ckk = input.dim(0) * k * k;
  const int hw = ho * wo;

  Tensor out({c_out, ho, wo});
  MapR o(out.ptr(), c_out, hw);
  CMapR wm(weights.ptr(), c_out, ckk);
  if (is_pointwise(k, stride, pad)) {
    o.noalias() = wm * CMapR(input.ptr(), ckk, hw);
  } else {
    const auto col = im2col(input, k, stride, pad, ho, wo);
    o.noalias() = wm * CMapR(col.data(), ckk, hw);
  }
  if (!bias.empty()) {
    for (int c = 0; c < c_out; ++c) o.row(c).array() += bias[static_cast<std::size_t>(c)];
  }
  return out;
}

ConvGrads conv_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                        int stride, int pad, bool has_bias) {
  require_rank3(grad_out, "conv grad_out");
  require_rank3(input, "conv input");
  const int c_out = weights.dim(0), c_in = input.dim(0), k = weights.dim(2);
  const int ho = conv_out_size(input.dim(1), k, stride, pad);
  const int wo = conv_out_size(input.dim(2), k, stride, pad);
  if (grad_out.dim(0) != c_out || grad_out.dim(1) != ho || grad_out.dim(2) != wo) {
    throw ShapeMismatch("conv grad_out " + shape_string(grad_out.shape()) + " does not match forward output");
  }
  const int ckk = c_in * k * k;
  const int hw = ho * wo;
  CMapR g(grad_out.ptr(), c_out, hw);
  CMapR wm(weights.ptr(), c_out, ckk);

  ConvGrads grads;
  grads.weights = Tensor(weights.shape());
  grads.input = Tensor(input.shape());
  MapR gw(grads.weights.ptr(), c_out, ckk);
  if (is_pointwise(k, stride, pad)) {
    CMapR x(input.ptr(), ckk, hw);
    gw.noalias() = g * x.transpose();
    MapR(grads.input.ptr(), ckk, hw).noalias() = wm.transpose() * g;
  } else {
    const auto col = im2col(input, k, stride, pad, ho, wo);
    gw.noalias() = g * CMapR(col.data(), ckk, hw).transpose();
    RowMat gcol = wm.transpose() * g;
    col2im(gcol.data(), c_in, input.dim(1), input.dim(2), k, stride, pad, ho, wo, grads.input.ptr());
  }
  if (has_bias) {
    grads.bias = Tensor({c_out});
    for (int c = 0; c < c_out; ++c) grads.bias[static_cast<std::size_t>(c)] = g.row(c).sum();
  }
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
  if (grad_out.shape() != input.shape()) throw ShapeMismatch("relu_backward shape mismatch");
  Tensor out = grad_out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(input[i] > 0.0)) out[i] = 0.0;
  }
  return out;
}

PoolResult maxpool2(const Tensor& input) {
  require_rank3(input, "maxpool input");
  const int c_n = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw OddSpatialDim("maxpool2 needs even spatial size, got " + shape_string(input.shape()));
  }
  const int ho = h / 2, wo = w / 2;
  PoolResult r{Tensor({c_n, ho, wo}), std::vector<std::uint32_t>(static_cast<std::size_t>(c_n) * ho * wo)};
  std::size_t o = 0;
  for (int c = 0; c < c_n; ++c) {
    for (int y = 0; y < ho; ++y) {
      for (int x = 0; x < wo; ++x, ++o) {
        std::size_t best = (static_cast<std::size_t>(c) * h + 2 * y) * w + 2 * x;
        double best_v = input[best];
        const std::size_t candidates[3] = {best + 1, best + w, best + w + 1};
        for (const std::size_t idx : candidates) {
          if (input[idx] > best_v) {
            best_v = input[idx];
            best = idx;
          }
        }
        r.output[o] = best_v;
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<std::uint32_t>& argmax,
                         const std::vector<int>& input_shape) {
  if (grad_out.size() != argmax.size()) throw ShapeMismatch("maxpool2_backward cache mismatch");
  Tensor g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

Tensor deconv_forward(const Tensor& input, const Tensor& weights, int stride) {
  require_rank3(input, "deconv input");
  if (weights.rank() != 4 || weights.dim(0) != input.dim(0) || weights.dim(2) != weights.dim(3)) {
    throw ShapeMismatch("deconv weights " + shape_string(weights.shape()) + " vs input " +
                        shape_string(input.shape()));
  }
  if (stride < 1) throw ShapeMismatch("deconv stride must be >= 1");
  const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int c_out = weights.dim(1), k = weights.dim(2);
  const int ho = (h - 1) * stride + k, wo = (w - 1) * stride + k;
  const int dkk = c_out * k * k;
  RowMat col = CMapR(weights.ptr(), c_in, dkk).transpose() * CMapR(input.ptr(), c_in, h * w);
  Tensor out({c_out, ho, wo});
  col2im(col.data(), c_out, ho, wo, k, stride, 0, h, w, out.ptr());
  return out;
}

DeconvGrads deconv_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                            int stride) {
  require_rank3(grad_out, "deconv grad_out");
  const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int c_out = weights.dim(1), k = weights.dim(2);
  if (grad_out.dim(0) != c_out || grad_out.dim(1) != (h - 1) * stride + k ||
      grad_out.dim(2) != (w - 1) * stride + k) {
    throw ShapeMismatch("deconv grad_out " + shape_string(grad_out.shape()) + " does not match forward output");
  }
  const int dkk = c_out * k * k;
  const auto gcol = im2col(grad_out, k, stride, 0, h, w);
  CMapR gc(gcol.data(), dkk, h * w);
  DeconvGrads grads{Tensor(input.shape()), Tensor(weights.shape())};
  MapR(grads.input.ptr(), c_in, h * w).noalias() = CMapR(weights.ptr(), c_in, dkk) * gc;
  MapR(grads.weights.ptr(), c_in, dkk).noalias() = CMapR(input.ptr(), c_in, h * w) * gc.transpose();
  return grads;
}

DropoutResult dropout(const Tensor& input, double rate, std::uint64_t seed, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must be in [0, 1)");
  DropoutResult r;
  if (!training || rate == 0.0) {
    r.output = input;
    return r;
  }
  r.scale = 1.0 / (1.0 - rate);
  r.keep.resize(input.size());
  r.output = Tensor(input.shape());
  Rng rng(seed);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool keep = rng.uniform() >= rate;
    r.keep[i] = keep ? 1 : 0;
    r.output[i] = keep ? input[i] * r.scale : 0.0;
  }
  return r;
}

Tensor dropout_backward(const Tensor& grad_out, const DropoutResult& forward) {
  if (forward.keep.empty()) return grad_out;
  if (forward.keep.size() != grad_out.size()) throw ShapeMismatch("dropout_backward mask mismatch");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = forward.keep[i] ? g[i] * forward.scale : 0.0;
  return g;
}

Tensor center_crop(const Tensor& input, int height, int width) {
  require_rank3(input, "crop input");
  const int c_n = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (height > h || width > w || height <= 0 || width <= 0) {
    throw ShapeMismatch("cannot crop " + shape_string(input.shape()) + " to " + std::to_string(height) + "x" +
                        std::to_string(width));
  }
  const int oy = (h - height) / 2, ox = (w - width) / 2;
  Tensor out({c_n, height, width});
  for (int c = 0; c < c_n; ++c) {
    for (int y = 0; y < height; ++y) {
      const double* src = input.ptr() + (static_cast<std::size_t>(c) * h + y + oy) * w + ox;
      std::copy(src, src + width, out.ptr() + (static_cast<std::size_t>(c) * height + y) * width);
    }
  }
  return out;
}

Tensor center_crop_backward(const Tensor& grad_out, const std::vector<int>& input_shape) {
  const int c_n = input_shape[0], h = input_shape[1], w = input_shape[2];
  const int height = grad_out.dim(1), width = grad_out.dim(2);
  const int oy = (h - height) / 2, ox = (w - width) / 2;
  Tensor g(input_shape);
  for (int c = 0; c < c_n; ++c) {
    for (int y = 0; y < height; ++y) {
      const double* src = grad_out.ptr() + (static_cast<std::size_t>(c) * height + y) * width;
      std::copy(src, src + width, g.ptr() + (static_cast<std::size_t>(c) * h + y + oy) * w + ox);
    }
  }
  return g;
}

Tensor fuse_skip(const Tensor& upsampled, const Tensor& skip_scores) {
  require_rank3(skip_scores, "skip scores");
  if (upsampled.rank() != 3 || upsampled.dim(0) != skip_scores.dim(0)) {
    throw ShapeMismatch("fuse_skip channel mismatch: " + shape_string(upsampled.shape()) + " vs " +
                        shape_string(skip_scores.shape()));
  }
  Tensor out = center_crop(upsampled, skip_scores.dim(1), skip_scores.dim(2));
  out += skip_scores;
  return out;
}

Tensor softmax(const Tensor& scores) {
  require_rank3(scores, "softmax input");
  const int k = scores.dim(0);
  const std::size_t plane = static_cast<std::size_t>(scores.dim(1)) * scores.dim(2);
  Tensor out(scores.shape());
  for (std::size_t p = 0; p < plane; ++p) {
    double m = -INFINITY;
    for (int c = 0; c < k; ++c) {
      const double v = scores[c * plane + p];
      if (!std::isfinite(v)) throw NonFiniteInput("softmax received a non-finite score");
      m = std::max(m, v);
    }
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      const double e = std::exp(scores[c * plane + p] - m);
      out[c * plane + p] = e;
      sum += e;
    }
    for (int c = 0; c < k; ++c) out[c * plane + p] /= sum;
  }
  return out;
}

}  // namespace osmseg
