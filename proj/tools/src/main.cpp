#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ocsb/bench.hpp"
#include "ocsb/dataset.hpp"
#include "ocsb/error.hpp"
#include "ocsb/evalproto.hpp"
#include "ocsb/netdefs.hpp"
#include "ocsb/parallel.hpp"
#include "ocsb/pipeline.hpp"
#include "ocsb/svm.hpp"
#include "ocsb/weightstore.hpp"

namespace fs = std::filesystem;
using namespace ocsb;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitProtocol = 3;

struct Globals {
  uint64_t seed = 0;
  std::optional<int> jobs;
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
}

void warn_all(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

// Weights from a file, or seeded random_init when no file is given.
WeightStore load_or_init(const std::string& arch, const std::string& weights, uint64_t seed) {
  if (!weights.empty()) return read_weights(weights);
  std::cerr << "note: no --weights given, using random_init(seed " << seed << ")\n";
  return random_init(build_network(arch), seed);
}

RoiProtocol protocol_for(const std::string& roi, const std::string& fusion) {
  if (fusion != "none" && fusion != "lr-average") {
    throw ValidationError("unknown fusion '" + fusion + "' (expected none or lr-average)");
  }
  if (roi == "face") {
    if (fusion != "none") throw ValidationError("--fusion lr-average needs --roi ocular");
    return RoiProtocol::kFace;
  }
  if (roi == "ocular") return fusion == "none" ? RoiProtocol::kOcular : RoiProtocol::kOcularLr;
  throw ValidationError("unknown roi '" + roi + "' (expected face or ocular)");
}

struct PreprocessArgs {
  std::string manifest, out_dir, rois = "face";
  bool augment = false;
};

int run_preprocess(const Globals& g, const PreprocessArgs& a) {
  const DatasetManifest m = read_manifest(a.manifest);
  const auto summary =
      preprocess(m, a.out_dir, parse_roi_selection(a.rois), a.augment, resolve_jobs(g.jobs));
  warn_all(summary.warnings);
  std::cout << summary.images << " images, " << summary.crops << " crops written to "
            << (fs::path(a.out_dir) / "crops.csv").string() << "\n";
  return 0;
}

struct ExtractArgs {
  std::string manifest, arch, weights, out, rois = "face";
  bool augment = false;
};

int run_extract(const Globals& g, const ExtractArgs& a) {
  const DatasetManifest m = read_manifest(a.manifest);
  const WeightStore w = load_or_init(a.arch, a.weights, g.seed);
  const Network net(build_network(a.arch), w);
  ExtractOptions opt;
  opt.rois = parse_roi_selection(a.rois);
  opt.augment = a.augment;
  opt.jobs = resolve_jobs(g.jobs);
  const FeatureBank bank = export_features(m, net, w.header.normalization, opt, a.out);
  warn_all(bank.warnings);
  std::cout << bank.samples.size() << " images, " << bank.feature_dim << "-d features written to "
            << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string features, task = "gender", roi = "face", fusion = "none", out;
  double C = 1.0;
  bool l2 = false;
};

int run_train(const Globals& g, const TrainArgs& a) {
  const FeatureBank bank = read_feature_csv(a.features);
  const Task task = parse_task(a.task);
  const RoiProtocol roi = protocol_for(a.roi, a.fusion);
  std::vector<size_t> all(bank.samples.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  const LabeledRows rows = training_rows(bank, all, task, roi, true);
  if (rows.y.empty()) throw ValidationError("no labeled rows for task " + a.task);
  SvmOptions opt;
  opt.C = a.C;
  opt.seed = g.seed;
  opt.l2_normalize = a.l2;
  const SvmModel model =
      train_ovo(rows.x, rows.y, class_count(task), opt, resolve_jobs(g.jobs), class_names(task));
  save_svm_model(model, bank.arch_id, a.out);
  std::cout << model.machines.size() << " binary machines trained on " << rows.x.rows()
            << " rows, saved to " << a.out << "\n";
  return 0;
}

struct PredictArgs {
  std::string features, model, roi = "face", fusion = "none", out;
};

int run_predict(const PredictArgs& a) {
  const FeatureBank bank = read_feature_csv(a.features);
  const SvmModel model = load_svm_model(a.model);
  const RoiProtocol roi = protocol_for(a.roi, a.fusion);
  std::string table = "sample_id,roi,prediction\n";
  for (const FeatureSample& s : bank.samples) {
    auto emit = [&](std::string_view which, const std::vector<float>& d) {
      const int label = predict(model, d).label;
      table += csv::escape(s.id) + ',' + std::string(which) + ',' +
               csv::escape(model.class_names[static_cast<size_t>(label)]) + '\n';
    };
    if (roi == RoiProtocol::kFace) {
      emit("face", s.identity(kRoiFace));
    } else if (roi == RoiProtocol::kOcular) {
      emit("left", s.identity(kRoiLeft));
      emit("right", s.identity(kRoiRight));
    } else {
      emit("lr", fuse_lr(s.identity(kRoiLeft), s.identity(kRoiRight)));
    }
  }
  if (a.out.empty()) std::cout << table;
  else write_file(a.out, table);
  return 0;
}

struct EvalArgs {
  std::string manifest, features, arch, weights, task = "gender", roi = "face", fusion = "none",
      out_dir;
  double C = 1.0;
  bool augment = true;
  bool l2 = false;
};

int run_eval(const Globals& g, const EvalArgs& a) {
  const Task task = parse_task(a.task);
  const RoiProtocol roi = protocol_for(a.roi, a.fusion);
  const int jobs = resolve_jobs(g.jobs);
  FeatureBank bank;
  if (!a.features.empty()) {
    bank = read_feature_csv(a.features);
  } else {
    if (a.manifest.empty() || a.arch.empty()) {
      throw ValidationError("eval needs --features, or --manifest with --arch");
    }
    const DatasetManifest m = read_manifest(a.manifest);
    const WeightStore w = load_or_init(a.arch, a.weights, g.seed);
    const Network net(build_network(a.arch), w);
    ExtractOptions opt;
    opt.rois = roi == RoiProtocol::kFace ? RoiSelection::kFace : RoiSelection::kOcular;
    opt.augment = a.augment;
    opt.jobs = jobs;
    bank = build_feature_bank(m, net, w.header.normalization, opt);
  }
  warn_all(bank.warnings);
  CvConfig cfg;
  cfg.task = task;
  cfg.roi = roi;
  cfg.svm.C = a.C;
  cfg.svm.seed = g.seed;
  cfg.svm.l2_normalize = a.l2;
  cfg.augment = a.augment;
  cfg.jobs = jobs;
  const MetricsReport report = cross_validate(bank, cfg);
  std::cout << report.to_table();
  if (!a.out_dir.empty()) {
    write_file(fs::path(a.out_dir) / "report.json", report.to_json());
    write_file(fs::path(a.out_dir) / "report.txt", report.to_table());
  }
  return 0;
}

struct BenchArgs {
  std::vector<std::string> archs;
  std::string weights, hardware_note, json;
  int warmup = 5;
  int runs = 100;
  bool throughput = false;
  int64_t throughput_images = 64;
  bool size_only = false;
};

int run_bench(const Globals& g, BenchArgs a) {
  if (a.archs.empty() || (a.archs.size() == 1 && a.archs[0] == "all")) {
    a.archs.assign(std::begin(kArchitectures), std::end(kArchitectures));
  }
  if (!a.weights.empty() && a.archs.size() != 1) {
    throw ValidationError("--weights needs exactly one --arch");
  }
  BenchReport report;
  report.hardware = hardware_descriptor(a.hardware_note);
  report.sizes = size_report(a.archs);
  if (!a.size_only) {
    const int workers = resolve_jobs(g.jobs);
    for (const auto& arch : a.archs) {
      const Network net(build_network(arch), load_or_init(arch, a.weights, g.seed));
      BenchRow row;
      row.arch_id = arch;
      row.latency = measure_latency(net, a.warmup, a.runs);
      row.reference_ms = table_reference(arch).latency_ms;
      if (a.throughput) row.throughput = measure_throughput(net, workers, a.throughput_images);
      report.latency.push_back(row);
    }
  }
  std::cout << report.to_table();
  if (!a.json.empty()) write_file(a.json, report.to_json());
  return 0;
}

struct InitArgs {
  std::string arch, out;
};

int run_init(const Globals& g, const InitArgs& a) {
  write_weights(random_init(build_network(a.arch), g.seed), a.out);
  std::cout << "random_init weights for " << a.arch << " written to " << a.out << "\n";
  return 0;
}

struct GraphArgs {
  std::string arch;
  bool dump = false;
};

int run_graph(const GraphArgs& a) {
  const NetworkGraph g = build_network(a.arch);
  if (a.dump) {
    std::cout << to_manifest(g);
    return 0;
  }
  std::cout << g.arch_id << ": " << g.layers.size() << " layers, " << conv_layer_count(g)
            << " conv layers, " << count_parameters(g) << " parameters, feature '" << g.feature_layer
            << "' (" << g.feature_dim << "-d)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ocsb: age and gender prediction from face and ocular crops with mobile CNNs"};
  app.require_subcommand(1);
  app.set_help_flag();
  app.set_help_all_flag("-h,--help", "Print this help message with every subcommand and exit");
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for random_init and SVM training")->default_val(0);
  app.add_option("--jobs", g.jobs, "Worker threads for per-image stages (falls back to $OCSB_JOBS, then 1)");

  const std::vector<std::string> archs(std::begin(kArchitectures), std::end(kArchitectures));
  auto arch_check = CLI::IsMember(archs);
  auto add_sub = [&](const char* name, const char* desc) {
    CLI::App* s = app.add_subcommand(name, desc);
    return s;
  };

  PreprocessArgs pre;
  auto* s_pre = add_sub("preprocess", "Align and crop manifest images, writing PNG crops and crops.csv");
  s_pre->add_option("--manifest", pre.manifest, "Dataset manifest CSV")->required();
  s_pre->add_option("--out-dir", pre.out_dir, "Output directory")->required();
  s_pre->add_option("--rois", pre.rois, "Crops to write")->check(CLI::IsMember({"face", "ocular", "both"}))->capture_default_str();
  s_pre->add_flag("--augment", pre.augment, "Also write the six mirror x gamma variants");

  ExtractArgs ex;
  auto* s_ex = add_sub("extract", "Write a feature table for every manifest image");
  s_ex->add_option("--manifest", ex.manifest, "Dataset manifest CSV")->required();
  s_ex->add_option("--arch", ex.arch, "Network")->required()->check(arch_check);
  s_ex->add_option("--weights", ex.weights, "OCWB weights (default: random_init with --seed)");
  s_ex->add_option("--out", ex.out, "Feature CSV to write")->required();
  s_ex->add_option("--rois", ex.rois, "Crops to describe")->check(CLI::IsMember({"face", "ocular", "both"}))->capture_default_str();
  s_ex->add_flag("--augment", ex.augment, "Describe all six augmented variants");

  TrainArgs tr;
  auto* s_tr = add_sub("train-svm", "Train a one-vs-one linear SVM head on a feature table");
  s_tr->add_option("--features", tr.features, "Feature CSV from extract")->required();
  s_tr->add_option("--task", tr.task, "Label to learn")->check(CLI::IsMember({"gender", "age"}))->capture_default_str();
  s_tr->add_option("--roi", tr.roi, "Descriptor source")->check(CLI::IsMember({"face", "ocular"}))->capture_default_str();
  s_tr->add_option("--fusion", tr.fusion, "Left/right eye fusion")->check(CLI::IsMember({"none", "lr-average"}))->capture_default_str();
  s_tr->add_option("--C", tr.C, "SVM regularization constant")->capture_default_str();
  s_tr->add_flag("--l2-normalize", tr.l2, "Scale descriptors to unit L2 norm");
  s_tr->add_option("--out", tr.out, "Model file (OCWB with an SVM section)")->required();

  PredictArgs pr;
  auto* s_pr = add_sub("predict", "Classify the untouched descriptors of a feature table");
  s_pr->add_option("--features", pr.features, "Feature CSV from extract")->required();
  s_pr->add_option("--model", pr.model, "Model file from train-svm")->required();
  s_pr->add_option("--roi", pr.roi, "Descriptor source")->check(CLI::IsMember({"face", "ocular"}))->capture_default_str();
  s_pr->add_option("--fusion", pr.fusion, "Left/right eye fusion")->check(CLI::IsMember({"none", "lr-average"}))->capture_default_str();
  s_pr->add_option("--out", pr.out, "Predictions CSV (default: stdout)");

  EvalArgs ev;
  auto* s_ev = add_sub("eval", "Run the five-fold protocol and write metrics reports");
  s_ev->add_option("--manifest", ev.manifest, "Dataset manifest CSV");
  s_ev->add_option("--features", ev.features, "Precomputed feature CSV instead of --manifest");
  s_ev->add_option("--arch", ev.arch, "Network")->check(arch_check);
  s_ev->add_option("--weights", ev.weights, "OCWB weights (default: random_init with --seed)");
  s_ev->add_option("--task", ev.task, "Label to predict")->check(CLI::IsMember({"gender", "age"}))->capture_default_str();
  s_ev->add_option("--roi", ev.roi, "Descriptor source")->check(CLI::IsMember({"face", "ocular"}))->capture_default_str();
  s_ev->add_option("--fusion", ev.fusion, "Left/right eye fusion")->check(CLI::IsMember({"none", "lr-average"}))->capture_default_str();
  s_ev->add_option("--C", ev.C, "SVM regularization constant")->capture_default_str();
  s_ev->add_flag("--augment,!--no-augment", ev.augment, "Train on the six augmented variants (default on)");
  s_ev->add_flag("--l2-normalize", ev.l2, "Scale descriptors to unit L2 norm");
  s_ev->add_option("--out-dir", ev.out_dir, "Directory for report.json and report.txt");

  BenchArgs be;
  auto* s_be = add_sub("bench", "Model size table and single-image CPU latency");
  s_be->add_option("--arch", be.archs, "Networks to measure (repeatable, or 'all')");
  s_be->add_option("--weights", be.weights, "OCWB weights for a single --arch");
  s_be->add_option("--warmup", be.warmup, "Untimed forward passes")->capture_default_str();
  s_be->add_option("--runs", be.runs, "Timed forward passes (at least 10)")->capture_default_str();
  s_be->add_flag("--throughput", be.throughput, "Also measure multi-worker throughput with --jobs workers");
  s_be->add_option("--throughput-images", be.throughput_images, "Images for the throughput run")->capture_default_str();
  s_be->add_flag("--size-only", be.size_only, "Skip latency, print the size table only");
  s_be->add_option("--hardware-note", be.hardware_note, "Free text appended to the hardware descriptor");
  s_be->add_option("--json", be.json, "Write the report as JSON");

  InitArgs in;
  auto* s_in = add_sub("init-weights", "Write random_init weights for a network (uses --seed)");
  s_in->add_option("--arch", in.arch, "Network")->required()->check(arch_check);
  s_in->add_option("--out", in.out, "OCWB file to write")->required();

  GraphArgs gr;
  auto* s_gr = add_sub("graph", "Summarize or print a network's graph manifest");
  s_gr->add_option("--arch", gr.arch, "Network")->required()->check(arch_check);
  s_gr->add_flag("--dump", gr.dump, "Print the full manifest text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*s_pre) return run_preprocess(g, pre);
    if (*s_ex) return run_extract(g, ex);
    if (*s_tr) return run_train(g, tr);
    if (*s_pr) return run_predict(pr);
    if (*s_ev) return run_eval(g, ev);
    if (*s_be) return run_bench(g, be);
    if (*s_in) return run_init(g, in);
    if (*s_gr) return run_graph(gr);
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
