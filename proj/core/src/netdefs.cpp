#include "ocsb/netdefs.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <set>
#include <sstream>
#include <utility>

#include "ocsb/error.hpp"
#include "ocsb/weightstore.hpp"

namespace ocsb {
namespace {

struct KindName {
  LayerKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::kConv, "conv"},
    {LayerKind::kDepthwiseConv, "depthwise-conv"},
    {LayerKind::kPointwiseConv, "pointwise-conv"},
    {LayerKind::kBatchNorm, "bn"},
    {LayerKind::kRelu, "relu"},
    {LayerKind::kRelu6, "relu6"},
    {LayerKind::kPrelu, "prelu"},
    {LayerKind::kMaxPool, "maxpool"},
    {LayerKind::kGap, "gap"},
    {LayerKind::kGdc, "gdc"},
    {LayerKind::kFc, "fc"},
    {LayerKind::kFlatten, "flatten"},
    {LayerKind::kDropout, "dropout"},
    {LayerKind::kConcat, "concat"},
    {LayerKind::kResidualBegin, "residual-begin"},
    {LayerKind::kResidualEnd, "residual-end"},
};

bool is_conv_kind(LayerKind k) {
  return k == LayerKind::kConv || k == LayerKind::kDepthwiseConv ||
         k == LayerKind::kPointwiseConv;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (start <= s.size()) {
    const size_t pos = s.find(sep, start);
    const size_t end = pos == std::string_view::npos ? s.size() : pos;
    out.push_back(s.substr(start, end - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

int64_t to_int(std::string_view text, int line_no) {
  int64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("graph manifest line " + std::to_string(line_no) + ": '" +
                      std::string(text) + "' is not an integer");
  }
  return v;
}

std::string pad_text(const Padding& p) {
  if (p.top == p.bottom && p.top == p.left && p.top == p.right) return std::to_string(p.top);
  return std::to_string(p.top) + "," + std::to_string(p.bottom) + "," + std::to_string(p.left) +
         "," + std::to_string(p.right);
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (const auto& kn : kKindNames) {
    if (kn.name == text) return kn.kind;
  }
  throw ConfigError("unknown layer kind '" + std::string(text) + "'");
}

bool is_weight_layer(LayerKind kind) {
  return is_conv_kind(kind) || kind == LayerKind::kGdc || kind == LayerKind::kFc;
}

int64_t ParamSpec::count() const {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

int NetworkGraph::index_of(std::string_view layer) const {
  for (size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == layer) return static_cast<int>(i);
  }
  return -1;
}

NetworkGraph parse_graph_manifest(std::string_view text) {
  NetworkGraph g;
  bool saw_magic = false;
  int line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = tokens(line);
    if (tok.empty()) continue;
    const std::string_view key = tok[0];
    auto need = [&](size_t n) {
      if (tok.size() != n) {
        throw ConfigError("graph manifest line " + std::to_string(line_no) + ": '" +
                          std::string(key) + "' takes " + std::to_string(n - 1) + " values");
      }
    };
    if (key == "ocsb-graph") {
      need(2);
      g.version = static_cast<int>(to_int(tok[1], line_no));
      if (g.version != 1) {
        throw ConfigError("graph manifest version " + std::to_string(g.version) +
                          " is not supported");
      }
      saw_magic = true;
    } else if (key == "arch") {
      need(2);
      g.arch_id = std::string(tok[1]);
    } else if (key == "input") {
      need(4);
      g.input_channels = to_int(tok[1], line_no);
      g.input_height = to_int(tok[2], line_no);
      g.input_width = to_int(tok[3], line_no);
    } else if (key == "feature") {
      need(2);
      g.feature_layer = std::string(tok[1]);
    } else if (key == "layer") {
      if (tok.size() < 3) {
        throw ConfigError("graph manifest line " + std::to_string(line_no) +
                          ": layer needs a name and a kind");
      }
      LayerSpec layer;
      layer.name = std::string(tok[1]);
      layer.kind = parse_layer_kind(tok[2]);
      for (size_t i = 3; i < tok.size(); ++i) {
        const auto eq = tok[i].find('=');
        if (eq == std::string_view::npos) {
          throw ConfigError("graph manifest line " + std::to_string(line_no) +
                            ": expected key=value, got '" + std::string(tok[i]) + "'");
        }
        const std::string_view k = tok[i].substr(0, eq);
        const std::string_view v = tok[i].substr(eq + 1);
        if (k == "out") {
          layer.out_channels = to_int(v, line_no);
        } else if (k == "k") {
          layer.kernel = static_cast<int>(to_int(v, line_no));
        } else if (k == "s") {
          layer.stride = static_cast<int>(to_int(v, line_no));
        } else if (k == "groups") {
          layer.groups = static_cast<int>(to_int(v, line_no));
        } else if (k == "pad") {
          const auto parts = split(v, ',');
          if (parts.size() == 1) {
            layer.pad = Padding::uniform(static_cast<int>(to_int(parts[0], line_no)));
          } else if (parts.size() == 4) {
            layer.pad = {static_cast<int>(to_int(parts[0], line_no)),
                         static_cast<int>(to_int(parts[1], line_no)),
                         static_cast<int>(to_int(parts[2], line_no)),
                         static_cast<int>(to_int(parts[3], line_no))};
          } else {
            throw ConfigError("graph manifest line " + std::to_string(line_no) +
                              ": pad takes 1 or 4 values");
          }
        } else if (k == "from") {
          for (auto part : split(v, ',')) layer.from.emplace_back(part);
        } else if (k == "begin") {
          layer.begin = std::string(v);
        } else {
          throw ConfigError("graph manifest line " + std::to_string(line_no) +
                            ": unknown attribute '" + std::string(k) + "'");
        }
      }
      g.layers.push_back(std::move(layer));
    } else {
      throw ConfigError("graph manifest line " + std::to_string(line_no) + ": unknown key '" +
                        std::string(key) + "'");
    }
  }
  if (!saw_magic) throw ConfigError("graph manifest: missing 'ocsb-graph' version line");
  if (g.arch_id.empty()) throw ConfigError("graph manifest: missing 'arch'");
  infer_shapes(g);
  return g;
}

std::string to_manifest(const NetworkGraph& g) {
  std::ostringstream os;
  os << "ocsb-graph " << g.version << "\n";
  os << "arch " << g.arch_id << "\n";
  os << "input " << g.input_channels << " " << g.input_height << " " << g.input_width << "\n";
  os << "feature " << g.feature_layer << "\n\n";
  for (const LayerSpec& l : g.layers) {
    os << "layer " << l.name << " " << to_string(l.kind);
    if (l.out_channels > 0 && l.kind != LayerKind::kGdc) os << " out=" << l.out_channels;
    const bool windowed = is_conv_kind(l.kind) || l.kind == LayerKind::kMaxPool ||
                          l.kind == LayerKind::kGdc;
    if (windowed && l.kernel != 1) os << " k=" << l.kernel;
    if (windowed && l.stride != 1) os << " s=" << l.stride;
    if (windowed && l.pad != Padding{}) os << " pad=" << pad_text(l.pad);
    if (l.kind == LayerKind::kConv && l.groups != 1) os << " groups=" << l.groups;
    if (!l.from.empty()) {
      os << " from=";
      for (size_t i = 0; i < l.from.size(); ++i) os << (i ? "," : "") << l.from[i];
    }
    if (!l.begin.empty()) os << " begin=" << l.begin;
    os << "\n";
  }
  return os.str();
}

void infer_shapes(NetworkGraph& g) {
  if (g.layers.empty()) throw ConfigError(g.arch_id + ": graph has no layers");
  if (g.input_channels <= 0 || g.input_height <= 0 || g.input_width <= 0) {
    throw ConfigError(g.arch_id + ": input dims must be positive");
  }
  g.output_shapes.assign(g.layers.size(), Shape4{});
  g.input_index.assign(g.layers.size(), {});
  std::set<std::string, std::less<>> seen;
  const Shape4 input = g.input_shape();

  for (size_t i = 0; i < g.layers.size(); ++i) {
    LayerSpec& l = g.layers[i];
    const std::string at = g.arch_id + "/" + l.name;
    if (!seen.insert(l.name).second) throw ConfigError(at + ": duplicate layer name");

    auto& idx = g.input_index[i];
    if (l.from.empty()) {
      idx.push_back(static_cast<int>(i) - 1);
    } else {
      for (const std::string& src : l.from) {
        const int j = g.index_of(src);
        if (j < 0 || j >= static_cast<int>(i)) {
          throw ConfigError(at + ": input '" + src + "' is not an earlier layer");
        }
        idx.push_back(j);
      }
    }
    if (l.kind == LayerKind::kResidualEnd) {
      const int b = g.index_of(l.begin);
      if (b < 0 || b >= static_cast<int>(i) ||
          g.layers[static_cast<size_t>(b)].kind != LayerKind::kResidualBegin) {
        throw ConfigError(at + ": residual-end needs an earlier residual-begin, got '" + l.begin +
                          "'");
      }
      idx.push_back(b);
    }
    if (l.kind != LayerKind::kConcat && l.kind != LayerKind::kResidualEnd && idx.size() != 1) {
      throw ConfigError(at + ": " + std::string(to_string(l.kind)) + " takes one input");
    }
    auto shape_of = [&](int j) { return j < 0 ? input : g.output_shapes[static_cast<size_t>(j)]; };
    const Shape4 in = shape_of(idx[0]);
    Shape4 out = in;

    switch (l.kind) {
      case LayerKind::kPointwiseConv:
        if (l.kernel != 1 || l.stride != 1 || l.pad != Padding{}) {
          throw ConfigError(at + ": pointwise-conv must be 1x1, stride 1, unpadded");
        }
        [[fallthrough]];
      case LayerKind::kDepthwiseConv:
      case LayerKind::kConv: {
        if (l.kind == LayerKind::kDepthwiseConv) {
          if (l.out_channels == 0) l.out_channels = in.c;
          if (l.out_channels != in.c) {
            throw ShapeError(at + ": depthwise-conv must keep " + std::to_string(in.c) +
                             " channels");
          }
          l.groups = static_cast<int>(in.c);
        }
        if (l.out_channels <= 0 || l.kernel <= 0 || l.stride <= 0 || l.groups <= 0) {
          throw ConfigError(at + ": out, k, s and groups must be positive");
        }
        if (in.c % l.groups != 0 || l.out_channels % l.groups != 0) {
          throw ShapeError(at + ": channels " + std::to_string(in.c) + "->" +
                           std::to_string(l.out_channels) + " not divisible by groups " +
                           std::to_string(l.groups));
        }
        out = {1, l.out_channels,
               window_output_extent(in.h, l.pad.top + l.pad.bottom, l.kernel, l.stride),
               window_output_extent(in.w, l.pad.left + l.pad.right, l.kernel, l.stride)};
        break;
      }
      case LayerKind::kMaxPool:
        out = {1, in.c, window_output_extent(in.h, l.pad.top + l.pad.bottom, l.kernel, l.stride),
               window_output_extent(in.w, l.pad.left + l.pad.right, l.kernel, l.stride)};
        break;
      case LayerKind::kGap:
        out = {1, in.c, 1, 1};
        break;
      case LayerKind::kGdc:
        if (in.h != l.kernel || in.w != l.kernel) {
          throw ShapeError(at + ": gdc kernel " + std::to_string(l.kernel) +
                           " does not cover input " + std::to_string(in.h) + "x" +
                           std::to_string(in.w));
        }
        out = {1, in.c, 1, 1};
        break;
      case LayerKind::kFc:
        if (l.out_channels <= 0) throw ConfigError(at + ": fc needs out > 0");
        out = {1, l.out_channels, 1, 1};
        break;
      case LayerKind::kFlatten:
        out = {1, in.c * in.h * in.w, 1, 1};
        break;
      case LayerKind::kConcat: {
        if (idx.size() < 2) throw ConfigError(at + ": concat needs at least two inputs");
        int64_t c = 0;
        for (int j : idx) {
          const Shape4 s = shape_of(j);
          if (s.h != in.h || s.w != in.w) {
            throw ShapeError(at + ": concat inputs differ spatially (" + s.str() + " vs " +
                             in.str() + ")");
          }
          c += s.c;
        }
        out = {1, c, in.h, in.w};
        break;
      }
      case LayerKind::kResidualEnd: {
        const Shape4 other = shape_of(idx[1]);
        if (other != in) {
          throw ShapeError(at + ": residual endpoints differ (" + in.str() + " vs " +
                           other.str() + ")");
        }
        break;
      }
      case LayerKind::kBatchNorm:
      case LayerKind::kRelu:
      case LayerKind::kRelu6:
      case LayerKind::kPrelu:
      case LayerKind::kDropout:
      case LayerKind::kResidualBegin:
        break;
    }
    if (out.c <= 0 || out.h <= 0 || out.w <= 0) {
      throw ConfigError(at + ": zero-sized output from input " + in.str());
    }
    g.output_shapes[i] = out;
  }

  // Every residual-begin must be closed exactly once.
  for (size_t i = 0; i < g.layers.size(); ++i) {
    if (g.layers[i].kind != LayerKind::kResidualBegin) continue;
    int ends = 0;
    for (const LayerSpec& l : g.layers) ends += l.kind == LayerKind::kResidualEnd && l.begin == g.layers[i].name;
    if (ends != 1) {
      throw ConfigError(g.arch_id + "/" + g.layers[i].name + ": residual-begin closed " +
                        std::to_string(ends) + " times");
    }
  }

  if (g.feature_layer.empty()) g.feature_layer = g.layers.back().name;
  g.feature_index = g.index_of(g.feature_layer);
  if (g.feature_index < 0) {
    throw ConfigError(g.arch_id + ": feature layer '" + g.feature_layer + "' not in graph");
  }
  const Shape4 fs = g.output_shapes[static_cast<size_t>(g.feature_index)];
  g.feature_dim = fs.c * fs.h * fs.w;
}

std::vector<ParamSpec> NetworkGraph::parameters() const {
  std::vector<ParamSpec> out;
  using Role = ParamSpec::Role;
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const int src = input_index.empty() ? -1 : input_index[i][0];
    const Shape4 in = src < 0 ? input_shape() : output_shapes[static_cast<size_t>(src)];
    if (is_conv_kind(l.kind)) {
      const int64_t cin_g = in.c / l.groups;
      const int64_t fan_in = cin_g * l.kernel * l.kernel;
      out.push_back({l.name + ".weight", {l.out_channels, cin_g, l.kernel, l.kernel}, fan_in, Role::kWeight});
      out.push_back({l.name + ".bias", {l.out_channels}, fan_in, Role::kBias});
    } else if (l.kind == LayerKind::kGdc) {
      const int64_t fan_in = int64_t{l.kernel} * l.kernel;
      out.push_back({l.name + ".weight", {in.c, 1, l.kernel, l.kernel}, fan_in, Role::kWeight});
      out.push_back({l.name + ".bias", {in.c}, fan_in, Role::kBias});
    } else if (l.kind == LayerKind::kFc) {
      const int64_t fan_in = in.c * in.h * in.w;
      out.push_back({l.name + ".weight", {l.out_channels, fan_in}, fan_in, Role::kWeight});
      out.push_back({l.name + ".bias", {l.out_channels}, fan_in, Role::kBias});
    } else if (l.kind == LayerKind::kPrelu) {
      out.push_back({l.name + ".slope", {in.c}, 0, Role::kSlope});
    } else if (l.kind == LayerKind::kBatchNorm) {
      out.push_back({l.name + ".gamma", {in.c}, 0, Role::kBnGamma});
      out.push_back({l.name + ".beta", {in.c}, 0, Role::kBnBeta});
      out.push_back({l.name + ".mean", {in.c}, 0, Role::kBnMean});
      out.push_back({l.name + ".var", {in.c}, 0, Role::kBnVar});
    }
  }
  return out;
}

int64_t count_parameters(const NetworkGraph& g) {
  int64_t total = 0;
  for (const ParamSpec& p : g.parameters()) total += p.count();
  return total;
}

int conv_layer_count(const NetworkGraph& g) {
  std::vector<int> depth(g.layers.size(), 0);
  int best = 0;
  for (size_t i = 0; i < g.layers.size(); ++i) {
    int d = 0;
    for (int j : g.input_index[i]) d = std::max(d, j < 0 ? 0 : depth[static_cast<size_t>(j)]);
    depth[i] = d + (is_weight_layer(g.layers[i].kind) ? 1 : 0);
    best = std::max(best, depth[i]);
  }
  return best;
}

NetworkGraph build_network(std::string_view arch_id) {
  NetworkGraph g = parse_graph_manifest(builtin_manifest(arch_id));
  if (g.arch_id != arch_id) {
    throw ConfigError("manifest for '" + std::string(arch_id) + "' declares arch '" + g.arch_id +
                      "'");
  }
  return g;
}

// ---------------------------------------------------------------------------
// Execution

namespace {

std::vector<float> record_values(const WeightStore& w, const std::string& name) {
  return w.at(name).data;
}

}  // namespace

Network::Network(NetworkGraph graph, const WeightStore& weights) : graph_(std::move(graph)) {
  require_valid(weights, graph_);
  const size_t n = graph_.layers.size();
  bound_.resize(n);
  last_use_.assign(n, -1);
  for (size_t i = 0; i < n; ++i) {
    for (int j : graph_.input_index[i]) {
      if (j >= 0) last_use_[static_cast<size_t>(j)] = static_cast<int>(i);
    }
  }
  for (size_t i = 0; i < n; ++i) {
    const LayerSpec& l = graph_.layers[i];
    Bound& b = bound_[i];
    if (is_conv_kind(l.kind) || l.kind == LayerKind::kGdc) {
      const TensorRecord& k = weights.at(l.name + ".weight");
      b.conv.kernel = Tensor({k.dims[0], k.dims[1], k.dims[2], k.dims[3]}, k.data);
      b.conv.bias = record_values(weights, l.name + ".bias");
      b.conv.stride_h = b.conv.stride_w = l.stride;
      b.conv.pad = l.pad;
      b.conv.groups = l.kind == LayerKind::kGdc ? 1 : l.groups;
    } else if (l.kind == LayerKind::kFc) {
      const TensorRecord& k = weights.at(l.name + ".weight");
      b.fc_weight = Tensor({k.dims[0], k.dims[1], 1, 1}, k.data);
      b.fc_bias = record_values(weights, l.name + ".bias");
    } else if (l.kind == LayerKind::kPrelu) {
      b.slopes = record_values(weights, l.name + ".slope");
    } else if (l.kind == LayerKind::kBatchNorm) {
      b.bn.gamma = record_values(weights, l.name + ".gamma");
      b.bn.beta = record_values(weights, l.name + ".beta");
      b.bn.running_mean = record_values(weights, l.name + ".mean");
      b.bn.running_var = record_values(weights, l.name + ".var");
      b.bn.epsilon = weights.header.bn_epsilon;
    }
  }
  for (size_t i = 0; i + 1 < n; ++i) {
    const LayerSpec& next = graph_.layers[i + 1];
    if (!is_conv_kind(graph_.layers[i].kind) || static_cast<int>(i) == graph_.feature_index) continue;
    if (last_use_[i] != static_cast<int>(i + 1) || graph_.input_index[i + 1].size() != 1) continue;
    Activation act = Activation::kNone;
    if (next.kind == LayerKind::kRelu) act = Activation::kRelu;
    else if (next.kind == LayerKind::kRelu6) act = Activation::kRelu6;
    else if (next.kind == LayerKind::kPrelu) act = Activation::kPrelu;
    if (act == Activation::kNone) continue;
    bound_[i].fused = act;
    bound_[i].fused_with = static_cast<int>(i + 1);
    bound_[i + 1].absorbed = true;
  }
}

Tensor Network::forward(const Tensor& batch, std::vector<double>* layer_ms) const {
  const Shape4 expect = graph_.input_shape(batch.shape().n);
  if (batch.shape() != expect || batch.shape().n <= 0) {
    throw ShapeError(graph_.arch_id + ": input " + batch.shape().str() + " does not match " +
                     graph_.input_shape().str());
  }
  const auto stop = static_cast<size_t>(graph_.feature_index);
  std::vector<Tensor> values(stop + 1);

  auto take = [&](int j, size_t consumer) -> Tensor {
    if (j < 0) return batch;
    auto& v = values[static_cast<size_t>(j)];
    // Steal the producer's buffer when this layer is its last consumer.
    if (last_use_[static_cast<size_t>(j)] == static_cast<int>(consumer) &&
        static_cast<size_t>(j) != stop) {
      return std::move(v);
    }
    return v;
  };
  auto view = [&](int j) -> const Tensor& {
    return j < 0 ? batch : values[static_cast<size_t>(j)];
  };

  if (layer_ms != nullptr) layer_ms->assign(stop + 1, 0.0);
  for (size_t i = 0; i <= stop; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const LayerSpec& l = graph_.layers[i];
    const Bound& b = bound_[i];
    const auto& idx = graph_.input_index[i];
    Tensor out;
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kDepthwiseConv:
      case LayerKind::kPointwiseConv:
        if (b.fused != Activation::kNone) {
          const Bound& act = bound_[static_cast<size_t>(b.fused_with)];
          out = conv2d(view(idx[0]), b.conv, Epilogue{b.fused, act.slopes}, l.name);
        } else {
          out = conv2d(view(idx[0]), b.conv, l.name);
        }
        break;
      case LayerKind::kGdc:
        out = global_depthwise_conv(view(idx[0]), b.conv.kernel, b.conv.bias);
        break;
      case LayerKind::kFc:
        out = fully_connected(view(idx[0]), b.fc_weight.values(), b.fc_bias,
                              l.out_channels);
        break;
      case LayerKind::kBatchNorm:
        out = batchnorm(take(idx[0], i), b.bn);
        break;
      case LayerKind::kRelu:
        out = b.absorbed ? take(idx[0], i) : relu(take(idx[0], i));
        break;
      case LayerKind::kRelu6:
        out = b.absorbed ? take(idx[0], i) : relu6(take(idx[0], i));
        break;
      case LayerKind::kPrelu:
        out = b.absorbed ? take(idx[0], i) : prelu(take(idx[0], i), b.slopes);
        break;
      case LayerKind::kMaxPool: {
        PoolParams p;
        p.window_h = p.window_w = l.kernel;
        p.stride_h = p.stride_w = l.stride;
        p.pad = l.pad;
        out = max_pool(view(idx[0]), p);
        break;
      }
      case LayerKind::kGap:
        out = global_avg_pool(view(idx[0]));
        break;
      case LayerKind::kFlatten: {
        Tensor t = take(idx[0], i);
        const Shape4 s = t.shape();
        out = std::move(t).reshaped({s.n, s.c * s.h * s.w, 1, 1});
        break;
      }
      case LayerKind::kDropout:
      case LayerKind::kResidualBegin:
        out = take(idx[0], i);
        break;
      case LayerKind::kConcat: {
        std::vector<const Tensor*> parts;
        for (int j : idx) parts.push_back(&view(j));
        out = concat_channels(parts);
        break;
      }
      case LayerKind::kResidualEnd:
        out = residual_add(view(idx[1]), view(idx[0]));
        break;
    }
    values[i] = std::move(out);
    // Release inputs nobody reads any more.
    for (int j : idx) {
      if (j >= 0 && last_use_[static_cast<size_t>(j)] == static_cast<int>(i)) {
        values[static_cast<size_t>(j)] = Tensor{};
      }
    }
    if (layer_ms != nullptr) {
      (*layer_ms)[i] =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
  }
  Tensor feat = std::move(values[stop]);
  const Shape4 s = feat.shape();
  return std::move(feat).reshaped({s.n, s.c * s.h * s.w, 1, 1});
}

std::vector<float> Network::features(const Tensor& image) const {
  if (image.shape().n != 1) throw ShapeError("features() takes a single image");
  Tensor out = forward(image);
  return {out.values().begin(), out.values().end()};
}

std::vector<float> forward(const NetworkGraph& g, const WeightStore& w, const Tensor& image) {
  return Network(g, w).features(image);
}

}  // namespace ocsb
