#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "logitds/checkpoint.hpp"
#include "logitds/data_io.hpp"
#include "logitds/errors.hpp"
#include "logitds/ood_eval.hpp"
#include "logitds/posterior.hpp"
#include "logitds/scores.hpp"
#include "logitds/trainer.hpp"
#include "logitds/variational_net.hpp"

namespace logitds::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, data_error = 3, numeric_error = 4 };

/// Merged flag/config-file values for one invocation. Unset optionals fall back to
/// the preset.
struct RunConfig {
  std::string preset = "blobs";
  std::string data;
  std::vector<std::string> ood;
  std::string checkpoint;
  std::string logits;  // score: external posterior tensor instead of a checkpoint
  std::string out_dir = ".";
  std::vector<std::string> scores;
  std::optional<int> samples;
  std::optional<std::size_t> n;
  std::optional<double> epsilon;
  std::optional<double> pi;
  std::optional<double> lr;
  std::optional<int> batch;
  std::optional<int> epochs;
  std::uint64_t seed = 0;
  int threads = 1;
};

// ---------------------------------------------------------------------------
// Presets.

struct Preset {
  std::string name;
  Architecture arch;
  TrainConfig train;
  int samples = 500;
  std::size_t n = 5000;
  std::string default_data;
  std::vector<std::string> default_ood;
};

// Desk-scale surrogate: three blobs 3 units from the origin (10 sigma apart).
// The OoD ring sits in the empty region they enclose, 3 sigma from every center.
// Rings outside the blobs are not used: there the softplus net extrapolates with
// growing confidence and every score, PE and MI included, ranks them as iD.
struct BlobGeometry {
  std::vector<Point2> centers{{0.0, 3.0}, {-2.598076211353316, -1.5}, {2.598076211353316, -1.5}};
  double sigma = 0.5;
  int n_per_class = 500;
  double ring_radius = 1.5;
  double ring_noise = 0.25;
  int ring_count = 1500;
};

inline Preset preset(const std::string& name) {
  Preset p;
  p.name = name;
  if (name == "blobs") {
    p.arch = Architecture::mlp(2, {32, 32}, 3);
    p.samples = 500;
    p.n = 1000;
    p.default_data = "blobs";
    p.default_ood = {"ring"};
  } else if (name == "mnist-mlp") {
    p.arch = Architecture::mlp(784, {400, 400}, 10);
  } else if (name == "mnist-lenet") {
    p.arch = Architecture::lenet5(10);
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected blobs, mnist-mlp, mnist-lenet)");
  }
  return p;
}

/// Preset defaults overridden by explicit flags.
inline TrainConfig effective_train_config(const RunConfig& rc, const Preset& p) {
  TrainConfig t = p.train;
  t.seed = rc.seed;
  if (rc.lr) t.learning_rate = *rc.lr;
  if (rc.batch) t.batch_size = *rc.batch;
  if (rc.epochs) t.epochs = *rc.epochs;
  if (rc.pi) t.pi = *rc.pi;
  t.check();
  return t;
}

// ---------------------------------------------------------------------------
// Dataset specs: "blobs", "ring", a directory holding MNIST-style IDX files
// ({train,t10k}-{images-idx3,labels-idx1}-ubyte), or a single IDX image file.
// "TAG=spec" overrides the tag used in reports.

enum class Split { train, test };

inline LabeledDataset load_dataset(const std::string& spec_in, Split split, std::uint64_t seed) {
  std::string spec = spec_in;
  std::string tag;
  if (const auto eq = spec.find('='); eq != std::string::npos) {
    tag = spec.substr(0, eq);
    spec = spec.substr(eq + 1);
  }
  LabeledDataset d;
  const BlobGeometry g;
  if (spec == "blobs") {
    // Training and test draws use disjoint streams.
    d = make_gaussian_blobs(g.centers, g.n_per_class, g.sigma,
                            derive_seed(seed, StreamTag::synthetic, {split == Split::train ? 1u : 2u}), "blobs");
  } else if (spec == "ring") {
    d = make_ring_ood(g.ring_radius, g.ring_count, g.ring_noise, derive_seed(seed, StreamTag::synthetic, {3}), "ring");
  } else if (spec.empty()) {
    throw ConfigError("dataset: empty spec");
  } else if (fs::is_directory(spec)) {
    const std::string prefix = split == Split::train ? "train" : "t10k";
    const fs::path dir(spec);
    d = load_idx_dataset(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"),
                         dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string());
  } else if (fs::is_regular_file(spec)) {
    IdxImages img = load_idx_images(spec);
    d = {std::move(img.pixels), std::vector<int>(img.count, 0), 1, fs::path(spec).stem().string(),
         Shape{1, img.rows, img.cols}};
  } else {
    throw DataError("dataset '" + spec + "' not found");
  }
  if (!tag.empty()) d.tag = tag;
  return d;
}

// ---------------------------------------------------------------------------
// Output helpers.

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + p.string());
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline Json arch_json(const Architecture& a) {
  Json layers = Json::array();
  for (const auto& l : a.layers()) {
    Json j{{"kind", to_string(l.kind)}};
    if (l.kind == LayerKind::dense || l.kind == LayerKind::conv2d) {
      j["in"] = l.in;
      j["out"] = l.out;
    }
    if (l.kind == LayerKind::conv2d || l.kind == LayerKind::maxpool) {
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
    }
    layers.push_back(std::move(j));
  }
  const Shape& in = a.input_shape();
  return {{"input", {in.channels, in.height, in.width}}, {"layers", layers}};
}

/// Long-format score CSV with the run config on a leading comment line.
inline std::string scores_csv(const Json& config, const std::vector<DatasetScores>& sets) {
  std::ostringstream os;
  os << "# config: " << config.dump() << '\n';
  os << "input_index,dataset_tag,score_name,value,orientation\n";
  for (const auto& set : sets) {
    for (const auto& s : set.scores) {
      for (std::size_t i = 0; i < s.values.size(); ++i) {
        os << i << ',' << set.tag << ',' << s.name << ',' << format_real(s.values[i]) << ','
           << to_string(s.orientation) << '\n';
      }
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands.

struct TrainOutputs {
  fs::path checkpoint;
  fs::path report_json;
  fs::path epochs_csv;
  TrainReport report;
};

inline TrainOutputs cmd_train(const RunConfig& rc) {
  const Preset p = preset(rc.preset);
  const TrainConfig tc = effective_train_config(rc, p);
  const std::string data_spec = rc.data.empty() ? p.default_data : rc.data;
  if (data_spec.empty()) {
    throw ConfigError("train: --data is required for preset '" + p.name + "'");
  }
  // Load everything before touching the output directory.
  const LabeledDataset data = load_dataset(data_spec, Split::train, rc.seed);
  if (data.inputs.cols() != p.arch.input_size()) {
    throw DataError("train: dataset '" + data.tag + "' has " + std::to_string(data.inputs.cols()) +
                    " features; preset '" + p.name + "' expects " + std::to_string(p.arch.input_size()));
  }

  const Json config{{"command", "train"},
                    {"preset", p.name},
                    {"data", data_spec},
                    {"normalization", "unit_interval"},
                    {"architecture", arch_json(p.arch)},
                    {"lr", tc.learning_rate},
                    {"batch", tc.batch_size},
                    {"epochs", tc.epochs},
                    {"pi", tc.pi},
                    {"val_fraction", tc.val_fraction},
                    {"mc_draws", tc.mc_draws},
                    {"val_samples", tc.val_samples},
                    {"prior_variance", 0.01},
                    {"seed", rc.seed}};
  const std::string metadata = config.dump();

  fs::create_directories(rc.out_dir);
  TrainOutputs out;
  out.checkpoint = fs::path(rc.out_dir) / "checkpoint.bin";
  out.report_json = fs::path(rc.out_dir) / "train_report.json";
  out.epochs_csv = fs::path(rc.out_dir) / "train_epochs.csv";

  std::vector<Json> saves;
  auto sink = [&](const VariationalParams& params, int epoch, double acc) {
    save_checkpoint(out.checkpoint, {params, metadata});
    saves.push_back({{"epoch", epoch}, {"val_accuracy", acc}});
  };
  out.report = train(init_params(p.arch, rc.seed), data, tc, sink);
  out.report.checkpoint_path = out.checkpoint.filename().string();

  Json epochs = Json::array();
  std::ostringstream csv;
  csv << "# config: " << metadata << '\n' << "epoch,loss,val_accuracy\n";
  for (const auto& e : out.report.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"val_accuracy", e.val_accuracy}});
    csv << e.epoch << ',' << format_real(e.loss) << ',' << format_real(e.val_accuracy) << '\n';
  }
  const Json report{{"config", config},
                    {"config_hash", hex64(fnv1a64(metadata))},
                    {"init_val_accuracy", out.report.init_val_accuracy},
                    {"best_epoch", out.report.best_epoch},
                    {"best_val_accuracy", out.report.best_val_accuracy},
                    {"checkpoint", out.report.checkpoint_path},
                    {"checkpoint_saves", saves},
                    {"epochs", epochs}};
  write_file(out.report_json, report.dump(2) + "\n");
  write_file(out.epochs_csv, csv.str());
  return out;
}

struct LoadedCheckpoint {
  Checkpoint ck;
  std::string file_hash;
};

inline LoadedCheckpoint load_for_eval(const std::string& path) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  const std::string bytes = read_file(path);
  return {decode_checkpoint(bytes), hex64(fnv1a64(bytes))};
}

inline std::string checkpoint_preset(const Checkpoint& ck) {
  const Json meta = Json::parse(ck.metadata, nullptr, false);
  return meta.is_object() && meta.contains("preset") ? meta["preset"].get<std::string>() : std::string();
}

struct ScoreOutputs {
  fs::path csv;
  std::vector<DatasetScores> scores;
};

inline ScoreOutputs cmd_score(const RunConfig& rc) {
  for (const auto& s : rc.scores) score_info(s);
  const double eps = rc.epsilon.value_or(kDefaultEpsilon);
  Json config{{"command", "score"}, {"epsilon", eps}, {"scores", rc.scores}, {"seed", rc.seed}};

  PosteriorLogits pl;
  std::string tag;
  if (!rc.logits.empty()) {
    pl = load_posterior_logits(rc.logits);
    tag = fs::path(rc.logits).stem().string();
    config["logits"] = tag;
    config["logits_hash"] = hex64(fnv1a64(read_file(rc.logits)));
  } else {
    const LoadedCheckpoint lc = load_for_eval(rc.checkpoint);
    const std::string pname = checkpoint_preset(lc.ck);
    const Preset p = preset(pname.empty() ? rc.preset : pname);
    const std::string data_spec = rc.data.empty() ? p.default_data : rc.data;
    if (data_spec.empty()) throw ConfigError("score: --data is required");
    const int M = rc.samples.value_or(p.samples);
    if (M < 2) throw ConfigError("score: --samples must be >= 2");
    const LabeledDataset d = load_dataset(data_spec, Split::test, rc.seed);
    if (d.inputs.cols() != lc.ck.params.arch.input_size()) {
      throw ConfigError("score: dataset '" + d.tag + "' has " + std::to_string(d.inputs.cols()) +
                        " features; checkpoint expects " + std::to_string(lc.ck.params.arch.input_size()));
    }
    tag = d.tag;
    config["checkpoint_hash"] = lc.file_hash;
    config["data"] = data_spec;
    config["samples"] = M;
    pl = sample_posterior_logits(lc.ck.params, d.inputs, M, derive_seed(rc.seed, StreamTag::posterior), rc.threads);
  }
  ScoreOutputs out;
  out.scores.push_back({tag, true, compute_scores(pl, eps, rc.scores)});
  fs::create_directories(rc.out_dir);
  out.csv = fs::path(rc.out_dir) / "scores.csv";
  write_file(out.csv, scores_csv(config, out.scores));
  return out;
}

struct EvaluateOutputs {
  fs::path report_json;
  fs::path report_txt;
  fs::path scores_csv;
  BenchmarkResult result;
};

inline EvaluateOutputs cmd_evaluate(const RunConfig& rc) {
  for (const auto& s : rc.scores) score_info(s);
  const LoadedCheckpoint lc = load_for_eval(rc.checkpoint);
  const std::string pname = checkpoint_preset(lc.ck);
  const Preset p = preset(pname.empty() ? rc.preset : pname);
  const std::string id_spec = rc.data.empty() ? p.default_data : rc.data;
  const std::vector<std::string> ood_specs = rc.ood.empty() ? p.default_ood : rc.ood;
  if (id_spec.empty() || ood_specs.empty()) {
    throw ConfigError("evaluate: need --data and at least one --ood");
  }

  BenchmarkConfig bc;
  bc.models = rc.samples.value_or(p.samples);
  bc.n = rc.n.value_or(p.n);
  bc.epsilon = rc.epsilon.value_or(kDefaultEpsilon);
  bc.seed = rc.seed;
  bc.scores = rc.scores;
  bc.threads = rc.threads;

  const LabeledDataset id = load_dataset(id_spec, Split::test, rc.seed);
  if (id.inputs.cols() != lc.ck.params.arch.input_size()) {
    throw ConfigError("evaluate: dataset '" + id.tag + "' does not match checkpoint input size");
  }
  std::vector<LabeledDataset> oods;
  std::vector<DatasetError> load_errors;
  for (const auto& s : ood_specs) {
    try {
      oods.push_back(load_dataset(s, Split::test, rc.seed));
    } catch (const std::exception& e) {
      load_errors.push_back({s, e.what()});
    }
  }
  if (oods.empty()) {
    throw DataError("evaluate: no OoD dataset could be loaded: " + load_errors.front().message);
  }

  EvaluateOutputs out;
  out.result = run_benchmark(lc.ck.params, id, oods, bc);
  out.result.report.errors.insert(out.result.report.errors.begin(), load_errors.begin(), load_errors.end());

  const Json config{{"command", "evaluate"}, {"preset", p.name},       {"checkpoint_hash", lc.file_hash},
                    {"data", id_spec},       {"ood", ood_specs},       {"samples", bc.models},
                    {"n", bc.n},             {"epsilon", bc.epsilon},  {"scores", bc.scores},
                    {"seed", rc.seed}};
  Json report = to_json(out.result.report);
  report["config"] = config;

  fs::create_directories(rc.out_dir);
  out.report_json = fs::path(rc.out_dir) / "report.json";
  out.report_txt = fs::path(rc.out_dir) / "report.txt";
  out.scores_csv = fs::path(rc.out_dir) / "eval_scores.csv";
  write_file(out.report_json, report.dump(2) + "\n");
  write_file(out.report_txt, "# config: " + config.dump() + "\n" + format_table(out.result.report));
  write_file(out.scores_csv, scores_csv(config, out.result.scores));
  return out;
}

}  // namespace logitds::cli
