#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ocsb/kernels.hpp"
#include "ocsb/tensor.hpp"

namespace ocsb {

class WeightStore;

enum class LayerKind {
  kConv,
  kDepthwiseConv,
  kPointwiseConv,
  kBatchNorm,
  kRelu,
  kRelu6,
  kPrelu,
  kMaxPool,
  kGap,
  kGdc,
  kFc,
  kFlatten,
  kDropout,
  kConcat,
  kResidualBegin,
  kResidualEnd,
};

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

/// True for layers that carry a weight matrix (conv, depthwise, pointwise, gdc, fc).
bool is_weight_layer(LayerKind kind);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  /// Producers of this layer's inputs; empty means the previous layer
  /// (or the graph input for the first layer).
  std::vector<std::string> from;
  int64_t out_channels = 0;  // conv kinds and fc
  int kernel = 1;            // conv kinds, gdc, maxpool window
  int stride = 1;
  Padding pad;
  int groups = 1;
  std::string begin;  // residual-end: matching residual-begin layer
};

/// One named parameter tensor a graph expects in its weight store.
struct ParamSpec {
  std::string name;
  std::vector<int64_t> dims;
  int64_t fan_in = 0;
  enum class Role { kWeight, kBias, kSlope, kBnGamma, kBnBeta, kBnMean, kBnVar } role;

  int64_t count() const;
};

/// A validated architecture description. Construct through build_network()
/// or parse_graph_manifest(); both run shape inference.
struct NetworkGraph {
  std::string arch_id;
  int version = 1;
  int64_t input_channels = 3;
  int64_t input_height = 113;
  int64_t input_width = 113;
  std::vector<LayerSpec> layers;
  std::string feature_layer;

  // Filled by shape inference.
  std::vector<Shape4> output_shapes;         // batch 1
  std::vector<std::vector<int>> input_index; // -1 is the graph input
  int feature_index = -1;
  int64_t feature_dim = 0;

  Shape4 input_shape(int64_t batch = 1) const {
    return {batch, input_channels, input_height, input_width};
  }
  int index_of(std::string_view layer) const;
  std::vector<ParamSpec> parameters() const;
};

/// The four architectures this toolkit ships.
inline constexpr std::string_view kArchitectures[] = {"squeezenet", "mobilenetv2",
                                                      "mobilefacenets", "mobiface"};

/// Built-in manifest text for an architecture (embedded at build time).
std::string_view builtin_manifest(std::string_view arch_id);

NetworkGraph build_network(std::string_view arch_id);
NetworkGraph parse_graph_manifest(std::string_view text);
std::string to_manifest(const NetworkGraph& g);

/// Runs shape inference and structural checks; throws ConfigError / ShapeError.
void infer_shapes(NetworkGraph& g);

/// Sum of all parameter tensor sizes (weights, biases, PReLU slopes, batch norm).
int64_t count_parameters(const NetworkGraph& g);

/// Number of weight layers on the longest input-to-output path. Parallel
/// branches (the two expand convolutions of a fire module) count once;
/// a fully connected layer counts like a convolution.
int conv_layer_count(const NetworkGraph& g);

/// Graph with weights bound from a store. Immutable; forward() may be called
/// concurrently from many threads.
class Network {
 public:
  Network(NetworkGraph graph, const WeightStore& weights);

  const NetworkGraph& graph() const { return graph_; }

  /// (N, 3, H, W) in; (N, feature_dim, 1, 1) out. When layer_ms is given it
  /// receives the wall time of every executed layer.
  Tensor forward(const Tensor& batch, std::vector<double>* layer_ms = nullptr) const;

  /// Single image (1, 3, H, W) to its feature vector.
  std::vector<float> features(const Tensor& image) const;

 private:
  struct Bound {
    ConvParams conv;
    std::vector<float> slopes;
    BnParams bn;
    Tensor fc_weight;
    std::vector<float> fc_bias;
    // A conv whose only consumer is an activation runs it in its epilogue;
    // the activation layer then passes its input through.
    Activation fused = Activation::kNone;
    int fused_with = -1;
    bool absorbed = false;
  };

  NetworkGraph graph_;
  std::vector<Bound> bound_;
  std::vector<int> last_use_;
};

/// Convenience: bind and run once.
std::vector<float> forward(const NetworkGraph& g, const WeightStore& w, const Tensor& image);

}  // namespace ocsb
