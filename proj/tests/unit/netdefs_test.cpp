#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "ocsb/error.hpp"
#include "ocsb/kernels.hpp"
#include "ocsb/netdefs.hpp"
#include "ocsb/parallel.hpp"
#include "ocsb/weightstore.hpp"
#include "test_support.hpp"

using namespace ocsb;
using namespace ocsbtest;

namespace {

struct Expected {
  std::string arch;
  int conv_layers;
  int64_t feature_dim;
  double params;  // 0 when there is no reference
};

// Reference values: conv-layer count, vector size and parameter count per network.
const Expected kTable[] = {
    {"squeezenet", 18, 1000, 1.24e6},
    {"mobilenetv2", 53, 1280, 3.5e6},
    {"mobilefacenets", 50, 512, 0.99e6},
    {"mobiface", 45, 512, 0},
};

// Layer-by-layer executor using only the unfused kernels.
Tensor reference_forward(const NetworkGraph& g, const WeightStore& w, const Tensor& x) {
  std::vector<Tensor> v(g.layers.size());
  auto in = [&](size_t i, size_t k) -> const Tensor& {
    const int j = g.input_index[i][k];
    return j < 0 ? x : v[static_cast<size_t>(j)];
  };
  auto rec = [&](const std::string& n) { return w.at(n); };
  for (size_t i = 0; i <= static_cast<size_t>(g.feature_index); ++i) {
    const LayerSpec& l = g.layers[i];
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kDepthwiseConv:
      case LayerKind::kPointwiseConv: {
        const auto k = rec(l.name + ".weight");
        ConvParams p;
        p.kernel = Tensor({k.dims[0], k.dims[1], k.dims[2], k.dims[3]}, k.data);
        p.bias = rec(l.name + ".bias").data;
        p.stride_h = p.stride_w = l.stride;
        p.pad = l.pad;
        p.groups = l.groups;
        v[i] = conv2d(in(i, 0), p);
        break;
      }
      case LayerKind::kGdc: {
        const auto k = rec(l.name + ".weight");
        v[i] = global_depthwise_conv(in(i, 0), Tensor({k.dims[0], k.dims[1], k.dims[2], k.dims[3]}, k.data),
                                     rec(l.name + ".bias").data);
        break;
      }
      case LayerKind::kFc: {
        const auto k = rec(l.name + ".weight");
        v[i] = fully_connected(in(i, 0), k.data, rec(l.name + ".bias").data, k.dims[0]);
        break;
      }
      case LayerKind::kRelu: v[i] = relu(in(i, 0)); break;
      case LayerKind::kRelu6: v[i] = relu6(in(i, 0)); break;
      case LayerKind::kPrelu: v[i] = prelu(in(i, 0), rec(l.name + ".slope").data); break;
      case LayerKind::kMaxPool:
        v[i] = max_pool(in(i, 0), {l.kernel, l.kernel, l.stride, l.stride, l.pad});
        break;
      case LayerKind::kGap: v[i] = global_avg_pool(in(i, 0)); break;
      case LayerKind::kFlatten: {
        const Shape4 s = in(i, 0).shape();
        v[i] = in(i, 0).reshaped({s.n, s.c * s.h * s.w, 1, 1});
        break;
      }
      case LayerKind::kConcat: {
        std::vector<const Tensor*> parts;
        for (size_t k = 0; k < g.input_index[i].size(); ++k) parts.push_back(&in(i, k));
        v[i] = concat_channels(parts);
        break;
      }
      case LayerKind::kResidualEnd: v[i] = residual_add(in(i, 1), in(i, 0)); break;
      case LayerKind::kBatchNorm: {
        BnParams bn{rec(l.name + ".gamma").data, rec(l.name + ".beta").data,
                    rec(l.name + ".mean").data, rec(l.name + ".var").data, w.header.bn_epsilon};
        v[i] = batchnorm(in(i, 0), bn);
        break;
      }
      default: v[i] = in(i, 0); break;
    }
  }
  const Tensor& f = v[static_cast<size_t>(g.feature_index)];
  return f.reshaped({f.shape().n, f.shape().c * f.shape().h * f.shape().w, 1, 1});
}

Tensor random_input(uint64_t seed, const NetworkGraph& g, int64_t batch = 1) {
  Gen gen(seed);
  return gen.tensor(g.input_shape(batch), 0.0f, 1.0f);
}

const char* kTinyResidual = R"(ocsb-graph 1
arch tiny
input 3 9 9
feature %FEATURE%
layer stem conv out=8 k=3 s=1 pad=1
layer stem_act relu6
layer blk_in residual-begin
layer blk_expand pointwise-conv out=16
layer blk_expand_act relu6
layer blk_dw depthwise-conv out=16 k=3 s=1 pad=1
layer blk_dw_act relu6
layer blk_project pointwise-conv out=8
layer blk_add residual-end begin=blk_in
)";

std::string tiny_manifest(const std::string& feature) {
  std::string text = kTinyResidual;
  text.replace(text.find("%FEATURE%"), 9, feature);
  return text;
}

}  // namespace

TEST(Netdefs, TableConformance) {
  for (const auto& e : kTable) {
    SCOPED_TRACE(e.arch);
    const NetworkGraph g = build_network(e.arch);
    EXPECT_EQ(conv_layer_count(g), e.conv_layers);
    EXPECT_EQ(g.feature_dim, e.feature_dim);
    EXPECT_EQ(g.input_shape(), (Shape4{1, 3, 113, 113}));
    if (e.params > 0) {
      EXPECT_NEAR(static_cast<double>(count_parameters(g)), e.params, 0.02 * e.params);
    }
  }
}

TEST(Netdefs, ParameterCountsAreStable) {
  EXPECT_EQ(count_parameters(build_network("squeezenet")), 1235496);
  EXPECT_EQ(count_parameters(build_network("mobilenetv2")), 3487816);
  EXPECT_EQ(count_parameters(build_network("mobilefacenets")), 993344);
  EXPECT_EQ(count_parameters(build_network("mobiface")), 14983424);
}

TEST(Netdefs, FirstConvStride) {
  for (const char* arch : {"squeezenet", "mobilenetv2"}) {
    const NetworkGraph g = build_network(arch);
    EXPECT_EQ(g.layers.front().kind, LayerKind::kConv) << arch;
    EXPECT_EQ(g.layers.front().stride, 1) << arch;
  }
  // Face networks keep their own fast down-sampling stem.
  for (const char* arch : {"mobilefacenets", "mobiface"}) {
    EXPECT_EQ(build_network(arch).layers.front().stride, 2) << arch;
  }
}

TEST(Netdefs, UnknownArchitecture) {
  EXPECT_THROW(build_network("resnet50"), ConfigError);
  EXPECT_THROW(builtin_manifest("vgg"), ConfigError);
}

TEST(Netdefs, ManifestRoundTrip) {
  for (std::string_view arch : kArchitectures) {
    const NetworkGraph g = build_network(arch);
    const std::string text = to_manifest(g);
    const NetworkGraph back = parse_graph_manifest(text);
    EXPECT_EQ(to_manifest(back), text);
    EXPECT_EQ(back.feature_dim, g.feature_dim);
    EXPECT_EQ(count_parameters(back), count_parameters(g));
    ASSERT_EQ(back.layers.size(), g.layers.size());
    for (size_t i = 0; i < g.layers.size(); ++i) {
      EXPECT_EQ(back.output_shapes[i], g.output_shapes[i]) << g.layers[i].name;
    }
  }
}

TEST(Netdefs, LayerKindNamesRoundTrip) {
  for (int k = 0; k <= static_cast<int>(LayerKind::kResidualEnd); ++k) {
    const auto kind = static_cast<LayerKind>(k);
    EXPECT_EQ(parse_layer_kind(to_string(kind)), kind);
  }
  EXPECT_THROW(parse_layer_kind("softmax"), ConfigError);
}

TEST(Netdefs, ManifestErrors) {
  const std::string head = "ocsb-graph 1\narch t\ninput 3 8 8\nfeature a\n";
  auto parse = [&](const std::string& body) { return parse_graph_manifest(head + body); };
  EXPECT_THROW(parse("layer a conv out=4 k=3\nlayer a relu\n"), ConfigError);       // duplicate name
  EXPECT_THROW(parse("layer a conv out=4 from=zz\n"), ConfigError);                 // unknown input
  EXPECT_THROW(parse("layer a conv out=4 wat=1\n"), ConfigError);                   // unknown attribute
  EXPECT_THROW(parse("layer a conv out=x\n"), ConfigError);                         // not a number
  EXPECT_THROW(parse("layer a conv out=4 k=9\n"), ConfigError);                     // zero-sized
  EXPECT_THROW(parse("layer a depthwise-conv out=4 k=3\n"), ShapeError);            // dw channels
  EXPECT_THROW(parse("layer a pointwise-conv out=4 k=3\n"), ConfigError);           // pw geometry
  EXPECT_THROW(parse("layer b conv out=4\n"), ConfigError);                         // missing feature
  EXPECT_THROW(parse("layer a residual-end begin=nope\n"), ConfigError);
  EXPECT_THROW(parse("layer r residual-begin\nlayer a conv out=5\n"
                     "layer e residual-end begin=r\n"), ShapeError);                 // endpoints differ
  EXPECT_THROW(parse_graph_manifest("arch t\ninput 3 8 8\nfeature a\nlayer a relu\n"), ConfigError);
  EXPECT_THROW(parse_graph_manifest("ocsb-graph 2\narch t\n"), ConfigError);
  EXPECT_THROW(parse_graph_manifest("ocsb-graph 1\nlayer a relu\n"), ConfigError);
  EXPECT_THROW(parse("bogus line\n"), ConfigError);
}

TEST(Netdefs, ParameterSpecsMatchRandomInit) {
  for (std::string_view arch : kArchitectures) {
    const NetworkGraph g = build_network(arch);
    const WeightStore w = random_init(g, 5);
    EXPECT_EQ(w.total_values(), count_parameters(g)) << arch;
  }
}

TEST(Netdefs, ForwardOutputLengths) {
  for (const auto& e : kTable) {
    const NetworkGraph g = build_network(e.arch);
    const Network net(g, random_init(g, 1));
    const auto f = net.features(random_input(2, g));
    EXPECT_EQ(static_cast<int64_t>(f.size()), e.feature_dim) << e.arch;
    EXPECT_TRUE(std::all_of(f.begin(), f.end(), [](float v) { return std::isfinite(v); }));
  }
}

TEST(Netdefs, ZeroWeightsZeroImageGivesZeroVector) {
  for (std::string_view arch : kArchitectures) {
    const NetworkGraph g = build_network(arch);
    WeightStore zero;
    zero.header.arch_id = g.arch_id;
    for (const ParamSpec& p : g.parameters()) {
      zero.add({p.name, p.dims, std::vector<float>(static_cast<size_t>(p.count()), 0.0f)});
    }
    const auto f = Network(g, zero).features(Tensor(g.input_shape()));
    for (float v : f) ASSERT_EQ(v, 0.0f) << arch;
  }
}

TEST(Netdefs, FusedNetworkMatchesUnfusedReferenceBitForBit) {
  for (std::string_view arch : kArchitectures) {
    const NetworkGraph g = build_network(arch);
    const WeightStore w = random_init(g, 3);
    const Tensor x = random_input(4, g);
    EXPECT_TRUE(bit_equal(Network(g, w).forward(x), reference_forward(g, w, x))) << arch;
  }
}

TEST(Netdefs, DeterministicAcrossRunsAndWorkers) {
  const NetworkGraph g = build_network("mobilefacenets");
  const Network net(g, random_init(g, 7));
  const Tensor x = random_input(8, g);
  const auto ref = net.features(x);
  for (int run = 0; run < 10; ++run) EXPECT_EQ(net.features(x), ref);
  for (int jobs : {1, 2, 8}) {
    std::vector<std::vector<float>> outs(8);
    parallel_for(8, jobs, [&](int64_t i) { outs[static_cast<size_t>(i)] = net.features(x); });
    for (const auto& o : outs) EXPECT_EQ(o, ref) << "jobs " << jobs;
  }
}

TEST(Netdefs, BatchPackingInvariance) {
  for (std::string_view arch : {"squeezenet", "mobiface"}) {
    const NetworkGraph g = build_network(arch);
    const Network net(g, random_init(g, 9));
    const Tensor batch = random_input(10, g, 3);
    const Tensor out = net.forward(batch);
    for (int64_t n = 0; n < 3; ++n) {
      const auto single = net.features(batch.batch_slice(n));
      std::span<const float> row(out.plane(n, 0), single.size());
      EXPECT_LE(rel_error(row, single), 1e-6) << arch;
    }
  }
}

TEST(Netdefs, ResidualBlockWithZeroWeightsIsIdentity) {
  const NetworkGraph block = parse_graph_manifest(tiny_manifest("blk_add"));
  const NetworkGraph stem = parse_graph_manifest(tiny_manifest("stem_act"));
  WeightStore w = random_init(block, 11);
  WeightStore zeroed;
  zeroed.header = w.header;
  for (const auto& r : w.records()) {
    TensorRecord copy = r;
    if (r.name.starts_with("blk_")) std::fill(copy.data.begin(), copy.data.end(), 0.0f);
    zeroed.add(std::move(copy));
  }
  const Tensor x = random_input(12, block);
  EXPECT_EQ(Network(block, zeroed).features(x), Network(stem, zeroed).features(x));
}

TEST(Netdefs, UniformGdcReproducesGap) {
  const NetworkGraph g = build_network("mobilefacenets");
  std::string text(builtin_manifest("mobilefacenets"));
  const std::string gdc_line = "layer gdc gdc k=7";
  ASSERT_NE(text.find(gdc_line), std::string::npos);
  text.replace(text.find(gdc_line), gdc_line.size(), "layer gdc gap");
  const NetworkGraph gap = parse_graph_manifest(text);

  WeightStore w = random_init(g, 13);
  WeightStore uniform;
  uniform.header = w.header;
  for (const auto& r : w.records()) {
    TensorRecord copy = r;
    if (r.name == "gdc.weight") std::fill(copy.data.begin(), copy.data.end(), 1.0f / 49.0f);
    if (r.name == "gdc.bias") std::fill(copy.data.begin(), copy.data.end(), 0.0f);
    uniform.add(std::move(copy));
  }
  const Tensor x = random_input(14, g);
  const auto a = Network(g, uniform).features(x);
  const auto b = Network(gap, uniform).features(x);
  EXPECT_LE(rel_error(a, b), 1e-6);
}

TEST(Netdefs, ForwardRejectsBadInputAndWeights) {
  const NetworkGraph g = build_network("squeezenet");
  const Network net(g, random_init(g, 1));
  EXPECT_THROW(net.forward(Tensor({1, 3, 112, 112})), ShapeError);
  EXPECT_THROW(net.features(Tensor(g.input_shape(2))), ShapeError);
  EXPECT_THROW(Network(build_network("mobilenetv2"), random_init(g, 1)), ValidationError);
}

TEST(Netdefs, LayerTimingHook) {
  const NetworkGraph g = build_network("mobilefacenets");
  const Network net(g, random_init(g, 1));
  std::vector<double> ms;
  net.forward(random_input(1, g), &ms);
  EXPECT_EQ(ms.size(), static_cast<size_t>(g.feature_index + 1));
  for (double t : ms) EXPECT_GE(t, 0.0);
}
