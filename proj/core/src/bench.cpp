#include "ocsb/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>

#include "json.hpp"

#include "ocsb/error.hpp"
#include "ocsb/weightstore.hpp"

namespace ocsb {

LatencyStats summarize_latency(std::vector<double> samples) {
  if (samples.empty()) throw ValidationError("no latency samples");
  std::sort(samples.begin(), samples.end());
  LatencyStats s;
  s.runs = static_cast<int>(samples.size());
  const size_t n = samples.size();
  s.median_ms = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  s.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  const auto rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95_ms = samples[std::max<size_t>(rank, 1) - 1];
  return s;
}

namespace {

Tensor bench_input(const NetworkGraph& g) {
  Tensor t(g.input_shape(1));
  uint32_t state = 12345;
  for (float& v : t.values()) {
    state = state * 1664525u + 1013904223u;
    v = static_cast<float>(state >> 8) / 16777216.0f;
  }
  return t;
}

}  // namespace

LatencyStats measure_latency(const Network& net, int warmup, int runs) {
  if (runs < 10) throw ValidationError("latency needs at least 10 runs, got " + std::to_string(runs));
  if (warmup < 0) throw ValidationError("negative warmup count");
  const Tensor input = bench_input(net.graph());
  for (int i = 0; i < warmup; ++i) (void)net.forward(input);
  std::vector<double> samples;
  samples.reserve(static_cast<size_t>(runs));
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor out = net.forward(input);
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    if (out.empty()) throw Error("forward pass produced no output");
  }
  LatencyStats s = summarize_latency(std::move(samples));
  s.warmup = warmup;
  return s;
}

ThroughputStats measure_throughput(const Network& net, int workers, int64_t images) {
  if (workers < 1) throw ValidationError("throughput needs at least one worker");
  if (images < 1) throw ValidationError("throughput needs at least one image");
  const Tensor input = bench_input(net.graph());
  std::atomic<int64_t> next{0};
  const auto t0 = std::chrono::steady_clock::now();
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (next.fetch_add(1) < images) (void)net.forward(input);
      });
    }
  }
  const auto t1 = std::chrono::steady_clock::now();
  ThroughputStats s;
  s.workers = workers;
  s.images = images;
  s.seconds = std::chrono::duration<double>(t1 - t0).count();
  s.images_per_second = s.seconds > 0.0 ? static_cast<double>(images) / s.seconds : 0.0;
  return s;
}

std::string hardware_descriptor(const std::string& note) {
  std::string model = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  std::string out = model + ", " + std::to_string(std::thread::hardware_concurrency()) +
                    " logical cores, ";
#if defined(__clang__)
  out += "clang " __clang_version__;
#elif defined(__GNUC__)
  out += "gcc " __VERSION__;
#endif
  if (!note.empty()) out += " | " + note;
  return out;
}

TableReference table_reference(std::string_view arch_id) {
  if (arch_id == "mobilenetv2") return {13.0, 3.5, 53, 1280, 19.7};
  if (arch_id == "squeezenet") return {4.41, 1.24, 18, 1000, 6.2};
  if (arch_id == "mobilefacenets") return {4.0, 0.99, 50, 512, 29.2};
  if (arch_id == "mobiface") return {11.3, std::nullopt, 45, 512, 17.5};
  throw ConfigError("no reference values for '" + std::string(arch_id) + "'");
}

std::vector<SizeRow> size_report(const std::vector<std::string>& archs) {
  std::vector<SizeRow> rows;
  for (const auto& a : archs) {
    const NetworkGraph g = build_network(a);
    SizeRow r;
    r.arch_id = a;
    r.parameters = count_parameters(g);
    r.weight_file_bytes = static_cast<int64_t>(encode_weights(random_init(g, 0)).size());
    r.feature_dim = g.feature_dim;
    r.conv_layers = conv_layer_count(g);
    r.reference = table_reference(a);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string BenchReport::to_json() const {
  nlohmann::json j;
  j["hardware"] = hardware;
  auto& sz = j["sizes"] = nlohmann::json::array();
  for (const SizeRow& r : sizes) {
    nlohmann::json ref{{"size_mb", r.reference.size_mb},
                       {"conv_layers", r.reference.conv_layers},
                       {"feature_dim", r.reference.feature_dim},
                       {"latency_ms", r.reference.latency_ms}};
    ref["params_m"] = r.reference.params_m ? nlohmann::json(*r.reference.params_m) : nlohmann::json(nullptr);
    sz.push_back({{"arch", r.arch_id},
                  {"parameters", r.parameters},
                  {"weight_file_bytes", r.weight_file_bytes},
                  {"feature_dim", r.feature_dim},
                  {"conv_layers", r.conv_layers},
                  {"reference", ref}});
  }
  auto& lat = j["latency"] = nlohmann::json::array();
  for (const BenchRow& r : latency) {
    nlohmann::json row{{"arch", r.arch_id},
                       {"median_ms", r.latency.median_ms},
                       {"mean_ms", r.latency.mean_ms},
                       {"p95_ms", r.latency.p95_ms},
                       {"runs", r.latency.runs},
                       {"warmup", r.latency.warmup},
                       {"reference_ms", r.reference_ms}};
    if (r.throughput) {
      row["throughput"] = {{"workers", r.throughput->workers},
                           {"images", r.throughput->images},
                           {"seconds", r.throughput->seconds},
                           {"images_per_second", r.throughput->images_per_second}};
    }
    lat.push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

std::string BenchReport::to_table() const {
  std::string out = "hardware: " + hardware + "\n";
  char buf[200];
  if (!sizes.empty()) {
    out += "\narch             params   (ref)  file MB  (ref)  convs (ref)  dim  (ref)\n";
    for (const SizeRow& r : sizes) {
      char ref_params[16] = "   n/a";
      if (r.reference.params_m) std::snprintf(ref_params, sizeof ref_params, "%5.2fM", *r.reference.params_m);
      std::snprintf(buf, sizeof buf, "%-15s %7.3fM %s  %7.2f %6.2f  %5d %5d %5lld %5lld\n",
                    r.arch_id.c_str(), static_cast<double>(r.parameters) / 1e6, ref_params,
                    static_cast<double>(r.weight_file_bytes) / 1e6, r.reference.size_mb, r.conv_layers,
                    r.reference.conv_layers, static_cast<long long>(r.feature_dim),
                    static_cast<long long>(r.reference.feature_dim));
      out += buf;
    }
  }
  if (!latency.empty()) {
    out += "\narch            median ms  mean ms   p95 ms  runs  ref ms  throughput\n";
    for (const BenchRow& r : latency) {
      std::snprintf(buf, sizeof buf, "%-15s %9.2f %8.2f %8.2f %5d %7.1f", r.arch_id.c_str(),
                    r.latency.median_ms, r.latency.mean_ms, r.latency.p95_ms, r.latency.runs,
                    r.reference_ms);
      out += buf;
      if (r.throughput) {
        std::snprintf(buf, sizeof buf, "  %.1f img/s (%d workers)", r.throughput->images_per_second,
                      r.throughput->workers);
        out += buf;
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace ocsb
