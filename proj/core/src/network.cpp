#include "osmseg/network.hpp"

#include <cstdio>
#include <map>

#include <nlohmann/json.hpp>

#include "osmseg/error.hpp"
#include "osmseg/rng.hpp"
#include "osmseg/train.hpp"

namespace osmseg {

namespace {

constexpr std::string_view kData = "data";

std::string_view init_name(ParamInit i) {
  switch (i) {
    case ParamInit::glorot: return "glorot";
    case ParamInit::zero: return "zero";
    case ParamInit::bilinear: return "bilinear";
  }
  return "glorot";
}

ParamInit init_from_name(std::string_view s) {
  if (s == "glorot") return ParamInit::glorot;
  if (s == "zero") return ParamInit::zero;
  if (s == "bilinear") return ParamInit::bilinear;
  throw FormatViolation("unknown init '" + std::string(s) + "'");
}

bool has_params(LayerKind k) { return k == LayerKind::conv || k == LayerKind::deconv; }

}  // namespace

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2: return "maxpool2";
    case LayerKind::dropout: return "dropout";
    case LayerKind::deconv: return "deconv";
    case LayerKind::crop_sum_skip: return "crop_sum_skip";
    case LayerKind::crop: return "crop";
    case LayerKind::softmax: return "softmax";
  }
  return "conv";
}

LayerKind layer_kind_from_name(std::string_view name) {
  for (const auto k : {LayerKind::conv, LayerKind::relu, LayerKind::maxpool2, LayerKind::dropout,
                       LayerKind::deconv, LayerKind::crop_sum_skip, LayerKind::crop, LayerKind::softmax}) {
    if (to_string(k) == name) return k;
  }
  throw FormatViolation("unknown layer kind '" + std::string(name) + "'");
}

namespace {

nlohmann::ordered_json spec_json(const NetworkSpec& spec) {
  nlohmann::ordered_json j;
  j["name"] = spec.name;
  j["input_channels"] = spec.input_channels;
  j["num_classes"] = spec.num_classes;
  j["size_divisor"] = spec.size_divisor;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : spec.layers) {
    nlohmann::ordered_json lj;
    lj["name"] = l.name;
    lj["kind"] = std::string(to_string(l.kind));
    lj["input"] = l.input;
    if (!l.skip.empty()) lj["skip"] = l.skip;
    if (has_params(l.kind)) {
      lj["filters"] = l.filters;
      lj["kernel"] = l.kernel;
      lj["stride"] = l.stride;
      lj["pad"] = l.pad;
      lj["bias"] = l.bias;
      lj["init"] = std::string(init_name(l.init));
    }
    if (l.kind == LayerKind::dropout) lj["rate"] = l.dropout_rate;
    j["layers"].push_back(std::move(lj));
  }
  return j;
}

}  // namespace

std::string spec_to_json(const NetworkSpec& spec) { return spec_json(spec).dump(2) + "\n"; }

NetworkSpec spec_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    NetworkSpec spec;
    spec.name = j.at("name").get<std::string>();
    spec.input_channels = j.at("input_channels").get<int>();
    spec.num_classes = j.at("num_classes").get<int>();
    spec.size_divisor = j.at("size_divisor").get<int>();
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.name = lj.at("name").get<std::string>();
      l.kind = layer_kind_from_name(lj.at("kind").get<std::string>());
      l.input = lj.at("input").get<std::string>();
      l.skip = lj.value("skip", std::string());
      if (has_params(l.kind)) {
        l.filters = lj.at("filters").get<int>();
        l.kernel = lj.at("kernel").get<int>();
        l.stride = lj.at("stride").get<int>();
        l.pad = lj.at("pad").get<int>();
        l.bias = lj.at("bias").get<bool>();
        l.init = init_from_name(lj.at("init").get<std::string>());
      }
      if (l.kind == LayerKind::dropout) l.dropout_rate = lj.at("rate").get<double>();
      spec.layers.push_back(std::move(l));
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw FormatViolation(std::string("network spec: ") + e.what());
  }
}

std::string spec_hash(const NetworkSpec& spec) {
  const std::string canonical = spec_json(spec).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::fcn_2skip_original: return "fcn_2skip_original";
    case Variant::fcn_3skip_ours: return "fcn_3skip_ours";
    case Variant::desk: return "desk";
    case Variant::desk_small: return "desk_small";
  }
  return "desk";
}

Variant variant_from_name(std::string_view name) {
  for (const auto v : {Variant::fcn_2skip_original, Variant::fcn_3skip_ours, Variant::desk,
                       Variant::desk_small}) {
    if (to_string(v) == name) return v;
  }
  throw InvalidArgument("unknown network variant '" + std::string(name) + "'");
}

FcnArchitecture architecture_for(Variant v, int num_classes) {
  FcnArchitecture a;
  a.name = std::string(to_string(v));
  a.num_classes = num_classes;
  switch (v) {
    case Variant::fcn_2skip_original:
    case Variant::fcn_3skip_ours:
      // VGG-16 convolutional trunk.
      a.blocks = {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
      a.fc_channels = 4096;
      a.fc6_kernel = 7;
      a.num_skips = v == Variant::fcn_3skip_ours ? 3 : 2;
      break;
    case Variant::desk:
      a.blocks = {{1, 16}, {1, 32}, {1, 64}};
      a.fc_channels = 64;
      a.fc6_kernel = 3;
      a.num_skips = 2;
      break;
    case Variant::desk_small:
      a.blocks = {{1, 8}, {1, 16}};
      a.fc_channels = 16;
      a.fc6_kernel = 3;
      a.num_skips = 1;
      break;
  }
  return a;
}

NetworkSpec make_fcn_spec(const FcnArchitecture& arch) {
  const int n_blocks = static_cast<int>(arch.blocks.size());
  if (arch.num_skips < 0 || (n_blocks > 0 && arch.num_skips > n_blocks - 1) ||
      (n_blocks == 0 && arch.num_skips != 0)) {
    throw InvalidArgument("num_skips must be in [0, blocks - 1]");
  }
  if (arch.fc6_kernel < 1 || arch.fc6_kernel % 2 == 0) throw InvalidArgument("fc6 kernel must be odd");

  NetworkSpec spec;
  spec.name = arch.name;
  spec.input_channels = arch.input_channels;
  spec.num_classes = arch.num_classes;
  spec.size_divisor = 1 << n_blocks;

  auto conv = [](std::string name, std::string input, int filters, int kernel, ParamInit init) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = LayerKind::conv;
    l.input = std::move(input);
    l.filters = filters;
    l.kernel = kernel;
    l.pad = (kernel - 1) / 2;
    l.init = init;
    return l;
  };
  auto simple = [](std::string name, LayerKind kind, std::string input) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = kind;
    l.input = std::move(input);
    return l;
  };
  auto deconv = [](std::string name, std::string input, int filters, int factor) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = LayerKind::deconv;
    l.input = std::move(input);
    l.filters = filters;
    l.kernel = 2 * factor;
    l.stride = factor;
    l.bias = false;
    l.init = ParamInit::bilinear;
    return l;
  };

  auto& L = spec.layers;
  std::string current(kData);
  for (int b = 1; b <= n_blocks; ++b) {
    const auto& block = arch.blocks[static_cast<std::size_t>(b - 1)];
    for (int i = 1; i <= block.convs; ++i) {
      const std::string id = std::to_string(b) + "_" + std::to_string(i);
      L.push_back(conv("conv" + id, current, block.channels, 3, ParamInit::glorot));
      L.push_back(simple("relu" + id, LayerKind::relu, "conv" + id));
      current = "relu" + id;
    }
    L.push_back(simple("pool" + std::to_string(b), LayerKind::maxpool2, current));
    current = "pool" + std::to_string(b);
  }
  L.push_back(conv("fc6", current, arch.fc_channels, arch.fc6_kernel, ParamInit::glorot));
  L.push_back(simple("relu6", LayerKind::relu, "fc6"));
  L.push_back(simple("drop6", LayerKind::dropout, "relu6"));
  L.back().dropout_rate = arch.dropout_rate;
  L.push_back(conv("fc7", "drop6", arch.fc_channels, 1, ParamInit::glorot));
  L.push_back(simple("relu7", LayerKind::relu, "fc7"));
  L.push_back(simple("drop7", LayerKind::dropout, "relu7"));
  L.back().dropout_rate = arch.dropout_rate;
  L.push_back(conv("score_fr", "drop7", arch.num_classes, 1, ParamInit::glorot));
  current = "score_fr";

  for (int s = 1; s <= arch.num_skips; ++s) {
    const int pool = n_blocks - s;
    const std::string up = s == 1 ? "upscore2" : "upscore_pool" + std::to_string(pool + 1);
    const std::string score = "score_pool" + std::to_string(pool);
    const std::string fuse = "fuse_pool" + std::to_string(pool);
    L.push_back(deconv(up, current, arch.num_classes, 2));
    L.push_back(conv(score, "pool" + std::to_string(pool), arch.num_classes, 1, ParamInit::zero));
    LayerSpec f = simple(fuse, LayerKind::crop_sum_skip, up);
    f.skip = score;
    L.push_back(std::move(f));
    current = fuse;
  }
  const int factor = 1 << (n_blocks - arch.num_skips);
  if (factor > 1) {
    L.push_back(deconv("upscore_final", current, arch.num_classes, factor));
    current = L.back().name;
  }
  LayerSpec crop = simple("score", LayerKind::crop, current);
  crop.skip = std::string(kData);
  L.push_back(std::move(crop));
  L.push_back(simple("prob", LayerKind::softmax, "score"));
  return spec;
}

int Network::layer_index(std::string_view name) const {
  if (name == kData) return -1;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (spec_.layers[i].name == name) return static_cast<int>(i);
  }
  throw ShapeMismatch("unknown layer '" + std::string(name) + "'");
}

Network Network::build(NetworkSpec spec) {
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::softmax) {
    throw InvalidArgument("network must end with a softmax layer");
  }
  if (spec.size_divisor < 1 || spec.num_classes < 1 || spec.input_channels < 1) {
    throw InvalidArgument("invalid network header");
  }
  Network net;
  net.spec_ = std::move(spec);
  const auto& layers = net.spec_.layers;
  std::map<std::string, int, std::less<>> seen{{std::string(kData), -1}};
  std::vector<int> channels(layers.size());
  auto channels_of = [&](int idx) { return idx < 0 ? net.spec_.input_channels : channels[static_cast<std::size_t>(idx)]; };
  auto lookup = [&](const std::string& name, const std::string& user) {
    const auto it = seen.find(name);
    if (it == seen.end()) {
      throw ShapeMismatch("layer '" + user + "' references '" + name + "' before it is defined");
    }
    return it->second;
  };

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (seen.contains(l.name)) throw ShapeMismatch("duplicate layer name '" + l.name + "'");
    const int in = lookup(l.input, l.name);
    int skip = -2;
    if (l.kind == LayerKind::crop_sum_skip || l.kind == LayerKind::crop) skip = lookup(l.skip, l.name);
    net.input_index_.push_back(in);
    net.skip_index_.push_back(skip);
    net.first_param_.push_back(-1);

    const int c_in = channels_of(in);
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::deconv: {
        if (l.kernel < 1 || l.stride < 1 || l.pad < 0 || l.filters < 1) {
          throw InvalidArgument("layer '" + l.name + "' has invalid kernel/stride/pad/filters");
        }
        if (l.kind == LayerKind::deconv && l.kernel != 2 * l.stride) {
          throw InvalidArgument("deconv '" + l.name + "' kernel must be 2 * stride");
        }
        net.first_param_.back() = static_cast<int>(net.info_.size());
        ParameterInfo w;
        w.name = l.name + ".weight";
        w.shape = l.kind == LayerKind::conv ? std::vector<int>{l.filters, c_in, l.kernel, l.kernel}
                                            : std::vector<int>{c_in, l.filters, l.kernel, l.kernel};
        w.layer = static_cast<int>(i);
        w.init = l.init;
        w.stride = l.stride;
        net.info_.push_back(w);
        if (l.bias) {
          ParameterInfo b;
          b.name = l.name + ".bias";
          b.shape = {l.filters};
          b.is_bias = true;
          b.layer = static_cast<int>(i);
          b.init = ParamInit::zero;
          net.info_.push_back(b);
        }
        channels[i] = l.filters;
        break;
      }
      case LayerKind::dropout:
        if (!(l.dropout_rate >= 0.0 && l.dropout_rate < 1.0)) {
          throw InvalidArgument("dropout rate of '" + l.name + "' must be in [0, 1)");
        }
        channels[i] = c_in;
        break;
      case LayerKind::crop_sum_skip:
        if (channels_of(skip) != c_in) {
          throw ShapeMismatch("fusion '" + l.name + "' joins " + std::to_string(c_in) + " and " +
                              std::to_string(channels_of(skip)) + " channels");
        }
        if (skip >= static_cast<int>(i) || in >= static_cast<int>(i)) {
          throw ShapeMismatch("fusion '" + l.name + "' must follow its sources");
        }
        channels[i] = c_in;
        break;
      default:
        channels[i] = c_in;
    }
    seen.emplace(l.name, static_cast<int>(i));
  }
  if (channels[layers.size() - 1] != net.spec_.num_classes) {
    throw ShapeMismatch("network output has " + std::to_string(channels[layers.size() - 1]) +
                        " channels, expected " + std::to_string(net.spec_.num_classes));
  }
  return net;
}

std::vector<std::vector<int>> Network::infer_shapes(int height, int width) const {
  if (height <= 0 || width <= 0 || height % spec_.size_divisor != 0 || width % spec_.size_divisor != 0) {
    throw IncompatibleInputSize("input " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not a multiple of " + std::to_string(spec_.size_divisor));
  }
  const std::vector<int> data_shape{spec_.input_channels, height, width};
  std::vector<std::vector<int>> shapes(spec_.layers.size());
  auto shape_of = [&](int idx) -> const std::vector<int>& { return idx < 0 ? data_shape : shapes[static_cast<std::size_t>(idx)]; };
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    const auto& in = shape_of(input_index_[i]);
    switch (l.kind) {
      case LayerKind::conv: {
        auto extent = [&](int n) {
          const int span = n + 2 * l.pad - l.kernel;
          if (span < 0 || span % l.stride != 0) {
            throw ShapeMismatch("conv '" + l.name + "' does not tile a " + std::to_string(n) + "-pixel input");
          }
          return span / l.stride + 1;
        };
        shapes[i] = {l.filters, extent(in[1]), extent(in[2])};
        break;
      }
      case LayerKind::deconv:
        shapes[i] = {l.filters, (in[1] - 1) * l.stride + l.kernel, (in[2] - 1) * l.stride + l.kernel};
        break;
      case LayerKind::maxpool2:
        if (in[1] % 2 != 0 || in[2] % 2 != 0) {
          throw OddSpatialDim("pool '" + l.name + "' receives " + shape_string(in));
        }
        shapes[i] = {in[0], in[1] / 2, in[2] / 2};
        break;
      case LayerKind::crop_sum_skip:
      case LayerKind::crop: {
        const auto& ref = shape_of(skip_index_[i]);
        if (ref[1] > in[1] || ref[2] > in[2]) {
          throw ShapeMismatch("'" + l.name + "' cannot crop " + shape_string(in) + " to " + shape_string(ref));
        }
        shapes[i] = {in[0], ref[1], ref[2]};
        break;
      }
      default:
        shapes[i] = in;
    }
  }
  return shapes;
}

void Network::initialize(std::uint64_t seed) {
  values_.clear();
  values_.reserve(info_.size());
  for (std::size_t p = 0; p < info_.size(); ++p) {
    const auto& info = info_[p];
    if (info.is_bias || info.init == ParamInit::zero) {
      values_.emplace_back(info.shape);
    } else if (info.init == ParamInit::bilinear) {
      values_.push_back(bilinear_init(info.shape));
    } else {
      values_.push_back(glorot_init(info.shape, mix_seed(seed, p)));
    }
  }
}

void Network::zero_parameters() {
  values_.clear();
  for (const auto& info : info_) values_.emplace_back(info.shape);
}

Network build_network(Variant variant, int num_classes) {
  return Network::build(make_fcn_spec(architecture_for(variant, num_classes)));
}

std::uint64_t count_parameters(const Network& net) {
  std::uint64_t n = 0;
  for (const auto& info : net.parameter_info()) n += element_count(info.shape);
  return n;
}

struct ForwardPass {
  static ForwardResult run(const Network& net, const Tensor& input, bool training, std::uint64_t seed) {
    if (!net.allocated()) throw InvalidArgument("network parameters are not initialized");
    if (input.rank() != 3 || input.dim(0) != net.spec_.input_channels) {
      throw ShapeMismatch("network input " + shape_string(input.shape()));
    }
    net.infer_shapes(input.dim(1), input.dim(2));
    const auto& layers = net.spec_.layers;
    ForwardResult r;
    r.cache.input = input;
    r.cache.outputs.resize(layers.size());
    r.cache.argmax.resize(layers.size());
    r.cache.dropout.resize(layers.size());
    auto in_of = [&](int idx) -> const Tensor& {
      return idx < 0 ? r.cache.input : r.cache.outputs[static_cast<std::size_t>(idx)];
    };
    const Tensor no_bias;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      const Tensor& in = in_of(net.input_index_[i]);
      const int p = net.first_param_[i];
      switch (l.kind) {
        case LayerKind::conv:
          r.cache.outputs[i] = conv_forward(in, net.values_[static_cast<std::size_t>(p)],
                                            l.bias ? net.values_[static_cast<std::size_t>(p) + 1] : no_bias,
                                            l.stride, l.pad);
          break;
        case LayerKind::relu:
          r.cache.outputs[i] = relu(in);
          break;
        case LayerKind::maxpool2: {
          auto pooled = maxpool2(in);
          r.cache.outputs[i] = std::move(pooled.output);
          r.cache.argmax[i] = std::move(pooled.argmax);
          break;
        }
        case LayerKind::dropout: {
          auto d = dropout(in, l.dropout_rate, mix_seed(seed, i), training);
          r.cache.outputs[i] = std::move(d.output);
          d.output = Tensor();
          r.cache.dropout[i] = std::move(d);
          break;
        }
        case LayerKind::deconv:
          r.cache.outputs[i] = deconv_forward(in, net.values_[static_cast<std::size_t>(p)], l.stride);
          break;
        case LayerKind::crop_sum_skip:
          r.cache.outputs[i] = fuse_skip(in, in_of(net.skip_index_[i]));
          break;
        case LayerKind::crop: {
          const Tensor& ref = in_of(net.skip_index_[i]);
          r.cache.outputs[i] = center_crop(in, ref.dim(1), ref.dim(2));
          break;
        }
        case LayerKind::softmax:
          r.scores = in;
          r.cache.outputs[i] = softmax(in);
          break;
      }
    }
    r.probs = r.cache.outputs.back();
    return r;
  }

  static std::vector<Tensor> backward(const Network& net, const ForwardCache& cache, const Tensor& grad_scores) {
    const auto& layers = net.spec_.layers;
    if (cache.outputs.size() != layers.size()) throw ShapeMismatch("forward cache does not match network");
    std::vector<Tensor> pgrads(net.info_.size());
    std::vector<Tensor> grads(layers.size());
    auto in_of = [&](int idx) -> const Tensor& {
      return idx < 0 ? cache.input : cache.outputs[static_cast<std::size_t>(idx)];
    };
    auto accumulate = [&](int idx, Tensor g) {
      if (idx < 0) return;
      auto& slot = grads[static_cast<std::size_t>(idx)];
      if (slot.empty()) {
        slot = std::move(g);
      } else {
        slot += g;
      }
    };

    const std::size_t last = layers.size() - 1;
    if (grad_scores.shape() != in_of(net.input_index_[last]).shape()) {
      throw ShapeMismatch("grad_scores " + shape_string(grad_scores.shape()) + " does not match scores");
    }
    accumulate(net.input_index_[last], grad_scores);

    for (std::size_t ii = last; ii-- > 0;) {
      if (grads[ii].empty()) continue;
      const Tensor g = std::move(grads[ii]);
      grads[ii] = Tensor();
      const auto& l = layers[ii];
      const int in_idx = net.input_index_[ii];
      const Tensor& in = in_of(in_idx);
      const int p = net.first_param_[ii];
      switch (l.kind) {
        case LayerKind::conv: {
          auto cg = conv_backward(g, in, net.values_[static_cast<std::size_t>(p)], l.stride, l.pad, l.bias);
          pgrads[static_cast<std::size_t>(p)] = std::move(cg.weights);
          if (l.bias) pgrads[static_cast<std::size_t>(p) + 1] = std::move(cg.bias);
          accumulate(in_idx, std::move(cg.input));
          break;
        }
        case LayerKind::relu:
          accumulate(in_idx, relu_backward(g, in));
          break;
        case LayerKind::maxpool2:
          accumulate(in_idx, maxpool2_backward(g, cache.argmax[ii], in.shape()));
          break;
        case LayerKind::dropout:
          accumulate(in_idx, dropout_backward(g, cache.dropout[ii]));
          break;
        case LayerKind::deconv: {
          auto dg = deconv_backward(g, in, net.values_[static_cast<std::size_t>(p)], l.stride);
          pgrads[static_cast<std::size_t>(p)] = std::move(dg.weights);
          accumulate(in_idx, std::move(dg.input));
          break;
        }
        case LayerKind::crop_sum_skip:
          accumulate(net.skip_index_[ii], g);
          accumulate(in_idx, center_crop_backward(g, in.shape()));
          break;
        case LayerKind::crop:
          accumulate(in_idx, center_crop_backward(g, in.shape()));
          break;
        case LayerKind::softmax:
          throw InvalidArgument("softmax is only supported as the final layer");
      }
    }
    for (std::size_t p = 0; p < pgrads.size(); ++p) {
      if (pgrads[p].empty()) pgrads[p] = Tensor(net.info_[p].shape);
    }
    return pgrads;
  }
};

ForwardResult net_forward(const Network& net, const Tensor& input, bool training, std::uint64_t seed,
                          bool keep_cache) {
  ForwardResult r = ForwardPass::run(net, input, training, seed);
  if (!keep_cache) r.cache = ForwardCache{};
  return r;
}

std::vector<Tensor> net_backward(const Network& net, const ForwardCache& cache, const Tensor& grad_scores) {
  return ForwardPass::backward(net, cache, grad_scores);
}

}  // namespace osmseg
