#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "osmseg/layers.hpp"
#include "osmseg/tensor.hpp"

namespace osmseg {

enum class LayerKind { conv, relu, maxpool2, dropout, deconv, crop_sum_skip, crop, softmax };

std::string_view to_string(LayerKind k);
LayerKind layer_kind_from_name(std::string_view name);

enum class ParamInit { glorot, zero, bilinear };

// One node of the layer graph. `input` names the producing layer ("data" for
// the network input). crop_sum_skip adds `skip` after centre-cropping `input`
// to its size; crop trims `input` to the spatial size of `skip`.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::string input;
  std::string skip;
  int filters = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  double dropout_rate = 0.0;
  bool bias = true;
  ParamInit init = ParamInit::glorot;

  bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
  std::string name;
  int input_channels = 3;
  int num_classes = 3;
  int size_divisor = 1;  // input height/width must be a multiple of this
  std::vector<LayerSpec> layers;

  bool operator==(const NetworkSpec&) const = default;
};

std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& text);
// FNV-1a of the canonical JSON form, as 16 hex digits.
std::string spec_hash(const NetworkSpec& spec);

// VGG-16-style fully convolutional network description.
struct FcnArchitecture {
  std::string name;
  struct Block {
    int convs = 0;
    int channels = 0;
  };
  std::vector<Block> blocks;
  int fc_channels = 4096;
  int fc6_kernel = 7;
  // Skip fusions, taken from the pools just before the last one, moving
  // towards the input. The remaining factor is restored by one final
  // transposed convolution with kernel 2 * factor.
  int num_skips = 2;
  double dropout_rate = 0.5;
  int num_classes = 3;
  int input_channels = 3;
};

enum class Variant { fcn_2skip_original, fcn_3skip_ours, desk, desk_small };

std::string_view to_string(Variant v);
Variant variant_from_name(std::string_view name);

FcnArchitecture architecture_for(Variant v, int num_classes = 3);
NetworkSpec make_fcn_spec(const FcnArchitecture& arch);

struct ParameterInfo {
  std::string name;  // "<layer>.weight" / "<layer>.bias"
  std::vector<int> shape;
  bool is_bias = false;
  int layer = 0;
  ParamInit init = ParamInit::glorot;
  int stride = 1;  // deconv stride, for bilinear init
};

// Validates the layer graph and infers parameter shapes. Parameters are only
// allocated by initialize() or by loading a checkpoint, so very large
// networks can be built for counting and shape checks.
class Network {
 public:
  static Network build(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<ParameterInfo>& parameter_info() const { return info_; }
  std::vector<Tensor>& parameters() { return values_; }
  const std::vector<Tensor>& parameters() const { return values_; }
  bool allocated() const { return !values_.empty(); }

  // Glorot / zero / bilinear as declared per layer; biases start at zero.
  void initialize(std::uint64_t seed);
  void zero_parameters();

  // Index of the first parameter of `layer`, or -1.
  int param_index(int layer) const { return first_param_[static_cast<std::size_t>(layer)]; }
  int layer_index(std::string_view name) const;  // -1 for "data"

  // Output shape of every layer for an input of the given size. Throws
  // IncompatibleInputSize / OddSpatialDim / ShapeMismatch.
  std::vector<std::vector<int>> infer_shapes(int height, int width) const;

 private:
  NetworkSpec spec_;
  std::vector<ParameterInfo> info_;
  std::vector<int> first_param_;
  std::vector<int> input_index_;
  std::vector<int> skip_index_;
  std::vector<Tensor> values_;

  friend struct ForwardPass;
  friend class NetworkAccess;
};

Network build_network(Variant variant, int num_classes = 3);

// Sum of element counts over all declared parameter tensors.
std::uint64_t count_parameters(const Network& net);

struct ForwardCache {
  Tensor input;
  std::vector<Tensor> outputs;
  std::vector<std::vector<std::uint32_t>> argmax;
  std::vector<DropoutResult> dropout;
};

struct ForwardResult {
  Tensor scores;  // [K x H x W], pre-softmax
  Tensor probs;
  ForwardCache cache;
};

// Dropout draws are derived from `seed` and the layer index.
ForwardResult net_forward(const Network& net, const Tensor& input, bool training,
                          std::uint64_t seed, bool keep_cache = true);

// Gradient of the loss with respect to every parameter, aligned with
// parameter_info().
std::vector<Tensor> net_backward(const Network& net, const ForwardCache& cache,
                                 const Tensor& grad_scores);

// Checkpoint = `<stem>.json` (spec, hash, names, shapes) + `<stem>.bin`
// (little-endian float64, parameters concatenated in declaration order).
void save_checkpoint(const std::filesystem::path& stem, const Network& net);
Network load_checkpoint(const std::filesystem::path& stem);

}  // namespace osmseg
