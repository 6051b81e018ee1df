#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "osmseg/error.hpp"
#include "osmseg/network.hpp"
#include "osmseg/train.hpp"
#include "support/probes.hpp"

using namespace osmseg;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("osmseg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

LayerSpec layer(std::string name, LayerKind kind, std::string input) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = kind;
  l.input = std::move(input);
  return l;
}

}  // namespace

TEST(Network, ParameterCountsOfTheFullSizeVariants) {
  EXPECT_EQ(count_parameters(build_network(Variant::fcn_3skip_ours, 3)), 134276540u);
  EXPECT_EQ(count_parameters(build_network(Variant::fcn_2skip_original, 3)), 134277737u);
}

TEST(Network, ParameterCountFollowsClassCount) {
  // Only the score layers and the deconvolutions depend on K.
  const auto c3 = count_parameters(build_network(Variant::fcn_3skip_ours, 3));
  const auto c5 = count_parameters(build_network(Variant::fcn_3skip_ours, 5));
  EXPECT_GT(c5, c3);
  const auto arch = architecture_for(Variant::fcn_3skip_ours, 3);
  EXPECT_EQ(arch.blocks.size(), 5u);
  EXPECT_EQ(arch.num_skips, 3);
  EXPECT_EQ(architecture_for(Variant::fcn_2skip_original).num_skips, 2);
}

TEST(Network, BuildingDoesNotAllocate) {
  const Network net = build_network(Variant::fcn_3skip_ours);
  EXPECT_FALSE(net.allocated());
  EXPECT_EQ(net.spec().size_divisor, 32);
}

TEST(Network, DeskShapesAndOutput) {
  Network net = build_network(Variant::desk);
  const auto shapes = net.infer_shapes(64, 64);
  EXPECT_EQ(shapes.back(), (std::vector<int>{3, 64, 64}));
  EXPECT_THROW(net.infer_shapes(60, 64), IncompatibleInputSize);
  net.initialize(1);
  const auto r = net_forward(net, Tensor({3, 64, 64}, 1.0), false, 0);
  EXPECT_EQ(r.probs.shape(), (std::vector<int>{3, 64, 64}));
  EXPECT_THROW(net_forward(net, Tensor({3, 48, 44}), false, 0), IncompatibleInputSize);
  EXPECT_THROW(net_forward(net, Tensor({2, 64, 64}), false, 0), ShapeMismatch);
}

TEST(Network, SpecJsonRoundTripAndHash) {
  for (const Variant v : {Variant::fcn_2skip_original, Variant::fcn_3skip_ours, Variant::desk, Variant::desk_small}) {
    const NetworkSpec s = make_fcn_spec(architecture_for(v));
    EXPECT_EQ(spec_from_json(spec_to_json(s)), s);
    EXPECT_EQ(spec_hash(spec_from_json(spec_to_json(s))), spec_hash(s));
    EXPECT_EQ(spec_hash(s).size(), 16u);
  }
  EXPECT_NE(spec_hash(make_fcn_spec(architecture_for(Variant::desk))),
            spec_hash(make_fcn_spec(architecture_for(Variant::desk_small))));
  EXPECT_THROW(spec_from_json("{\"layers\": 3}"), FormatViolation);
}

TEST(Network, InvalidGraphsAreRejected) {
  NetworkSpec s;
  s.layers = {layer("a", LayerKind::relu, "data"), layer("a", LayerKind::softmax, "a")};
  EXPECT_THROW(Network::build(s), ShapeMismatch);
  s.layers = {layer("a", LayerKind::relu, "b"), layer("b", LayerKind::softmax, "a")};
  EXPECT_THROW(Network::build(s), ShapeMismatch);
  LayerSpec up = layer("up", LayerKind::deconv, "data");
  up.filters = 3;
  up.kernel = 3;
  up.stride = 2;
  s.layers = {up, layer("prob", LayerKind::softmax, "up")};
  EXPECT_THROW(Network::build(s), InvalidArgument);
  FcnArchitecture arch = architecture_for(Variant::desk);
  arch.num_skips = 3;
  EXPECT_THROW(make_fcn_spec(arch), std::exception);
}

TEST(Network, BilinearInitUpsamplesConstantsExactly) {
  Network net = build_network(Variant::desk);
  net.initialize(3);
  for (std::size_t p = 0; p < net.parameter_info().size(); ++p) {
    const auto& info = net.parameter_info()[p];
    if (info.init != ParamInit::bilinear) continue;
    const int k = info.shape[2];
    const int stride = info.stride;
    const Tensor in({3, 4, 4}, 1.0);
    const Tensor out = deconv_forward(in, net.parameters()[p], stride);
    // Away from the border every output pixel receives weights summing to 1.
    for (int y = k; y < out.dim(1) - k; ++y) {
      for (int x = k; x < out.dim(2) - k; ++x) EXPECT_NEAR(out.at(1, y, x), 1.0, 1e-12) << info.name;
    }
  }
  EXPECT_THROW(bilinear_init({3, 2, 4, 4}), ShapeMismatch);
  const Tensor b = bilinear_init({1, 1, 4, 4});
  EXPECT_NEAR(b[0], 0.0625, 1e-15);
  EXPECT_NEAR(b[5], 0.5625, 1e-15);
}

TEST(Network, GlorotRangeAndDeterminism) {
  const Tensor a = glorot_init({16, 8, 3, 3}, 5);
  const double limit = std::sqrt(6.0 / (8 * 9 + 16 * 9));
  for (const double v : a.data()) EXPECT_LE(std::abs(v), limit);
  EXPECT_EQ(a, glorot_init({16, 8, 3, 3}, 5));
  EXPECT_NE(a, glorot_init({16, 8, 3, 3}, 6));
}

TEST(Network, GradientProbeOnDeskNetwork) {
  Network net = build_network(Variant::desk);
  net.initialize(7);
  const auto r = probe::network_gradient(net, 64, 100, 7);
  EXPECT_EQ(r.checked, 100);
  EXPECT_LE(r.max_relative_error, 1e-4) << net.parameter_info()[r.worst_param].name;
}

TEST(Network, BackwardIsZeroForUnusedBranchesAndMatchesParamShapes) {
  Network net = build_network(Variant::desk_small);
  net.initialize(2);
  Rng rng(1);
  const Tensor in = oracle::random_tensor({3, 32, 32}, rng);
  const auto f = net_forward(net, in, false, 0);
  const auto g = net_backward(net, f.cache, Tensor(f.scores.shape(), 0.0));
  ASSERT_EQ(g.size(), net.parameters().size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(g[i].shape(), net.parameters()[i].shape());
    for (const double v : g[i].data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto dir = temp_dir("ckpt");
  Network net = build_network(Variant::desk);
  net.initialize(11);
  save_checkpoint(dir / "m", net);
  const Network back = load_checkpoint(dir / "m");
  EXPECT_EQ(back.spec(), net.spec());
  EXPECT_EQ(back.parameters(), net.parameters());
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto dir = temp_dir("ckpt_bad");
  Network net = build_network(Variant::desk_small);
  net.initialize(1);
  save_checkpoint(dir / "m", net);
  std::filesystem::resize_file(dir / "m.bin", std::filesystem::file_size(dir / "m.bin") - 8);
  EXPECT_THROW(load_checkpoint(dir / "m"), FormatViolation);
  EXPECT_THROW(load_checkpoint(dir / "nothing"), IoFailure);
  save_checkpoint(dir / "m", net);
  {
    std::ofstream out(dir / "m.bin", std::ios::app | std::ios::binary);
    out << "x";
  }
  EXPECT_THROW(load_checkpoint(dir / "m"), FormatViolation);
}
