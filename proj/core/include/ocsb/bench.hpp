#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ocsb/netdefs.hpp"

namespace ocsb {

struct LatencyStats {
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  int runs = 0;
  int warmup = 0;
};

/// Order statistics over raw samples (p95 by nearest rank).
LatencyStats summarize_latency(std::vector<double> samples_ms);

/// Single-image forward passes on the calling thread. The input tensor is
/// built once; timing covers only Network::forward. Requires runs >= 10.
LatencyStats measure_latency(const Network& net, int warmup = 5, int runs = 100);

struct ThroughputStats {
  int workers = 1;
  int64_t images = 0;
  double seconds = 0.0;
  double images_per_second = 0.0;
};

/// `workers` threads each running single-image forward passes.
ThroughputStats measure_throughput(const Network& net, int workers, int64_t images);

/// CPU model, logical cores and compiler, plus an optional user note.
std::string hardware_descriptor(const std::string& note = {});

/// Reference values per architecture for the size table.
struct TableReference {
  double size_mb = 0.0;
  std::optional<double> params_m;
  int conv_layers = 0;
  int64_t feature_dim = 0;
  double latency_ms = 0.0;
};
TableReference table_reference(std::string_view arch_id);

struct SizeRow {
  std::string arch_id;
  int64_t parameters = 0;
  int64_t weight_file_bytes = 0;
  int64_t feature_dim = 0;
  int conv_layers = 0;
  TableReference reference;
};

/// One row per architecture. File size is that of a random-init OCWB file.
std::vector<SizeRow> size_report(const std::vector<std::string>& archs);

struct BenchRow {
  std::string arch_id;
  LatencyStats latency;
  std::optional<ThroughputStats> throughput;
  double reference_ms = 0.0;
};

struct BenchReport {
  std::string hardware;
  std::vector<SizeRow> sizes;
  std::vector<BenchRow> latency;

  std::string to_json() const;
  std::string to_table() const;
};

}  // namespace ocsb
