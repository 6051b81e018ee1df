#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "osmseg/error.hpp"
#include "osmseg/layers.hpp"
#include "osmseg/train.hpp"
#include "support/oracles.hpp"

using namespace osmseg;
using oracle::random_tensor;

namespace {

constexpr double kEps = 1e-5;
constexpr double kTol = 1e-6;
constexpr int kInstances = 20;

// Checks every element of `x` against the analytic gradient of f.
void check_gradient(const std::function<double()>& f, Tensor& x, const Tensor& analytic, const char* what) {
  ASSERT_EQ(x.shape(), analytic.shape()) << what;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double numeric = oracle::central_difference(f, x.storage()[i], kEps);
    ASSERT_LE(oracle::relative_error(analytic[i], numeric), kTol)
        << what << " element " << i << ": analytic " << analytic[i] << " numeric " << numeric;
  }
}

// Values spaced at least 0.02 apart, so no max-pool window has a near tie
// and no ReLU input sits within kEps of zero.
Tensor spaced_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const double n = static_cast<double>(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[order[i]] = (static_cast<double>(i) - n / 2.0 + 0.5) * 0.02 + rng.uniform(-0.005, 0.005);
  }
  return t;
}

}  // namespace

TEST(Conv, MatchesNaiveLoops) {
  Rng rng(1);
  for (int i = 0; i < 30; ++i) {
    const int C = 1 + static_cast<int>(rng.below(4)), F = 1 + static_cast<int>(rng.below(5));
    const int k = 1 + static_cast<int>(rng.below(4)), stride = 1 + static_cast<int>(rng.below(2));
    const int pad = static_cast<int>(rng.below(static_cast<std::uint64_t>((k + 1) / 2)));
    // Strided windows must tile the padded input exactly.
    const int H = static_cast<int>(rng.below(9)) * stride + k - 2 * pad;
    const int W = static_cast<int>(rng.below(9)) * stride + k - 2 * pad;
    const Tensor in = random_tensor({C, H, W}, rng);
    const Tensor w = random_tensor({F, C, k, k}, rng);
    const Tensor b = i % 3 == 0 ? Tensor{} : random_tensor({F}, rng);
    const Tensor got = conv_forward(in, w, b, stride, pad);
    const Tensor want = oracle::conv(in, w, b, stride, pad);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t j = 0; j < got.size(); ++j) ASSERT_NEAR(got[j], want[j], 1e-12);
  }
}

TEST(Conv, ShapeErrors) {
  EXPECT_THROW(conv_forward(Tensor({2, 5, 5}), Tensor({3, 3, 3, 3}), Tensor{}, 1, 0), ShapeMismatch);
  EXPECT_THROW(conv_forward(Tensor({3, 5, 5}), Tensor({3, 3, 3, 3}), Tensor({2}), 1, 0), ShapeMismatch);
}

TEST(Conv, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  for (int n = 0; n < kInstances; ++n) {
    const int C = 1 + static_cast<int>(rng.below(3)), F = 1 + static_cast<int>(rng.below(3));
    const int k = 1 + static_cast<int>(rng.below(3)), stride = 1 + static_cast<int>(rng.below(2));
    const int pad = static_cast<int>(rng.below(static_cast<std::uint64_t>((k + 1) / 2)));
    const int H = static_cast<int>(rng.below(5)) * stride + k - 2 * pad;
    const int W = static_cast<int>(rng.below(5)) * stride + k - 2 * pad;
    const bool has_bias = n % 2 == 0;
    Tensor in = random_tensor({C, H, W}, rng);
    Tensor w = random_tensor({F, C, k, k}, rng);
    Tensor b = has_bias ? random_tensor({F}, rng) : Tensor{};
    const Tensor out0 = conv_forward(in, w, b, stride, pad);
    const Tensor r = random_tensor(out0.shape(), rng);
    auto loss = [&] { return oracle::dot(conv_forward(in, w, b, stride, pad), r); };
    const ConvGrads g = conv_backward(r, in, w, stride, pad, has_bias);
    check_gradient(loss, in, g.input, "conv input");
    check_gradient(loss, w, g.weights, "conv weights");
    if (has_bias) check_gradient(loss, b, g.bias, "conv bias");
  }
}

TEST(Deconv, MatchesScatterLoops) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const int C = 1 + static_cast<int>(rng.below(3)), F = 1 + static_cast<int>(rng.below(3));
    const int stride = 1 + static_cast<int>(rng.below(4)), k = 2 * stride;
    const Tensor in = random_tensor({C, 1 + static_cast<int>(rng.below(6)), 1 + static_cast<int>(rng.below(6))}, rng);
    const Tensor w = random_tensor({C, F, k, k}, rng);
    const Tensor got = deconv_forward(in, w, stride);
    const Tensor want = oracle::deconv(in, w, stride);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t j = 0; j < got.size(); ++j) ASSERT_NEAR(got[j], want[j], 1e-12);
  }
}

TEST(Deconv, IsAdjointOfConv) {
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const int A = 1 + static_cast<int>(rng.below(4)), B = 1 + static_cast<int>(rng.below(4));
    const int stride = 1 + static_cast<int>(rng.below(4)), k = 2 * stride;
    const int H = 1 + static_cast<int>(rng.below(6)), W = 1 + static_cast<int>(rng.below(6));
    const Tensor w = random_tensor({A, B, k, k}, rng);
    const Tensor x = random_tensor({A, H, W}, rng);
    const Tensor y = random_tensor({B, (H - 1) * stride + k, (W - 1) * stride + k}, rng);
    const double lhs = oracle::dot(deconv_forward(x, w, stride), y);
    const double rhs = oracle::dot(x, conv_forward(y, w, Tensor{}, stride, 0));
    EXPECT_LE(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(Deconv, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  for (int n = 0; n < kInstances; ++n) {
    const int C = 1 + static_cast<int>(rng.below(3)), F = 1 + static_cast<int>(rng.below(3));
    const int stride = 1 + static_cast<int>(rng.below(3)), k = 2 * stride;
    Tensor in = random_tensor({C, 1 + static_cast<int>(rng.below(4)), 1 + static_cast<int>(rng.below(4))}, rng);
    Tensor w = random_tensor({C, F, k, k}, rng);
    const Tensor r = random_tensor(deconv_forward(in, w, stride).shape(), rng);
    auto loss = [&] { return oracle::dot(deconv_forward(in, w, stride), r); };
    const DeconvGrads g = deconv_backward(r, in, w, stride);
    check_gradient(loss, in, g.input, "deconv input");
    check_gradient(loss, w, g.weights, "deconv weights");
  }
}

TEST(Relu, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  for (int n = 0; n < kInstances; ++n) {
    Tensor in = spaced_tensor({1 + static_cast<int>(rng.below(3)), 4, 5}, rng);
    const Tensor r = random_tensor(in.shape(), rng);
    auto loss = [&] { return oracle::dot(relu(in), r); };
    check_gradient(loss, in, relu_backward(r, in), "relu");
  }
  const Tensor z({1, 1, 2}, std::vector<double>{0.0, -1.0});
  const Tensor g = relu_backward(Tensor({1, 1, 2}, 1.0), z);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(MaxPool, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  for (int n = 0; n < kInstances; ++n) {
    const int H = 2 * (1 + static_cast<int>(rng.below(3))), W = 2 * (1 + static_cast<int>(rng.below(3)));
    Tensor in = spaced_tensor({1 + static_cast<int>(rng.below(3)), H, W}, rng);
    const PoolResult p = maxpool2(in);
    const Tensor r = random_tensor(p.output.shape(), rng);
    auto loss = [&] { return oracle::dot(maxpool2(in).output, r); };
    check_gradient(loss, in, maxpool2_backward(r, p.argmax, in.shape()), "maxpool");
  }
}

TEST(MaxPool, FirstMaxWinsAndOddSizesThrow) {
  const Tensor t({1, 2, 2}, std::vector<double>{1.0, 3.0, 3.0, 2.0});
  EXPECT_EQ(maxpool2(t).argmax[0], 1u);
  EXPECT_THROW(maxpool2(Tensor({1, 3, 4})), OddSpatialDim);
}

TEST(Dropout, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  for (int n = 0; n < kInstances; ++n) {
    Tensor in = random_tensor({2, 3, 4}, rng);
    const double rate = rng.uniform(0.1, 0.8);
    const auto seed = rng.next_u64();
    const DropoutResult d = dropout(in, rate, seed, true);
    const Tensor r = random_tensor(in.shape(), rng);
    auto loss = [&] { return oracle::dot(dropout(in, rate, seed, true).output, r); };
    check_gradient(loss, in, dropout_backward(r, d), "dropout");
  }
}

TEST(Dropout, InvertedScalingAndEvalIdentity) {
  Rng rng(9);
  const Tensor in({1, 100, 100}, 1.0);
  const DropoutResult d = dropout(in, 0.5, 42, true);
  double sum = 0.0;
  for (std::size_t i = 0; i < d.output.size(); ++i) {
    EXPECT_TRUE(d.output[i] == 0.0 || d.output[i] == 2.0);
    sum += d.output[i];
  }
  EXPECT_NEAR(sum / 1e4, 1.0, 0.05);
  EXPECT_EQ(dropout(in, 0.5, 42, false).output, in);
  EXPECT_EQ(dropout(in, 0.5, 42, true).output, d.output);
}

TEST(Crop, GradientsMatchFiniteDifferences) {
  Rng rng(10);
  for (int n = 0; n < kInstances; ++n) {
    const int H = 3 + static_cast<int>(rng.below(5)), W = 3 + static_cast<int>(rng.below(5));
    Tensor in = random_tensor({2, H, W}, rng);
    const int h = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(H)));
    const int w = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(W)));
    const Tensor r = random_tensor({2, h, w}, rng);
    auto loss = [&] { return oracle::dot(center_crop(in, h, w), r); };
    check_gradient(loss, in, center_crop_backward(r, in.shape()), "crop");
  }
  const Tensor t({1, 4, 5}, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19});
  const Tensor c = center_crop(t, 2, 2);
  EXPECT_EQ(c.storage(), (std::vector<double>{6, 7, 11, 12}));
}

TEST(FuseSkip, GradientsMatchFiniteDifferences) {
  Rng rng(11);
  for (int n = 0; n < kInstances; ++n) {
    const int h = 2 + static_cast<int>(rng.below(4)), w = 2 + static_cast<int>(rng.below(4));
    Tensor up = random_tensor({3, h + static_cast<int>(rng.below(4)), w + static_cast<int>(rng.below(4))}, rng);
    Tensor skip = random_tensor({3, h, w}, rng);
    const Tensor r = random_tensor(skip.shape(), rng);
    auto loss = [&] { return oracle::dot(fuse_skip(up, skip), r); };
    check_gradient(loss, up, center_crop_backward(r, up.shape()), "fuse upsampled");
    check_gradient(loss, skip, r, "fuse skip");
  }
}

TEST(Softmax, LossGradientMatchesFiniteDifferences) {
  Rng rng(12);
  for (int n = 0; n < kInstances; ++n) {
    const int H = 1 + static_cast<int>(rng.below(4)), W = 1 + static_cast<int>(rng.below(4));
    Tensor scores = random_tensor({3, H, W}, rng, -3.0, 3.0);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(H) * W);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(3));
    auto loss = [&] { return multinomial_loss(softmax(scores), labels).loss; };
    check_gradient(loss, scores, multinomial_loss(softmax(scores), labels).grad_scores, "softmax loss");
  }
}

TEST(Softmax, NormalizedStableAndChecked) {
  const Tensor s({3, 1, 2}, std::vector<double>{1000.0, 0.0, 1001.0, 0.0, 999.0, 0.0});
  const Tensor p = softmax(s);
  EXPECT_NEAR(p.at(0, 0, 0) + p.at(1, 0, 0) + p.at(2, 0, 0), 1.0, 1e-15);
  EXPECT_NEAR(p.at(0, 0, 1), 1.0 / 3.0, 1e-15);
  EXPECT_GT(p.at(1, 0, 0), p.at(0, 0, 0));
  const Tensor bad({3, 1, 1}, std::vector<double>{NAN, 0.0, 0.0});
  EXPECT_THROW(softmax(bad), NonFiniteInput);
}
