#include "evitransfer/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "evitransfer/error.hpp"
#include "evitransfer/random.hpp"
#include "evitransfer/resampling.hpp"

namespace evt {

using nlohmann::json;

namespace {

// Stage seeds derived from the master seed.
enum SeedStream : std::uint64_t {
  kSeedSynth = 1,
  kSeedSampling,
  kSeedSplit,
  kSeedWeights,
  kSeedInitTrain,
  kSeedScreening,
  kSeedHeads,
  kSeedTransferTrain,
  kSeedDetector,
  kSeedRotation,
};

constexpr const char* kGroundTruthWarning =
    "ground-truth labels are used as evidence; this isolates the sampling strategy and is not a "
    "realistic deployment";

}  // namespace

const char* to_string(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::None: return "none";
    case SamplingStrategy::Oversample: return "oversample";
    case SamplingStrategy::Undersample: return "undersample";
    case SamplingStrategy::Combine: return "combine";
  }
  return "?";
}

const char* to_string(DetectorKind d) {
  switch (d) {
    case DetectorKind::KMeans: return "kmeans";
    case DetectorKind::Agglomerative: return "agglo";
    case DetectorKind::Ocsvm: return "ocsvm";
  }
  return "?";
}

const char* to_string(TaskMode m) {
  return m == TaskMode::Rotation ? "rotation" : "ground-truth-as-evidence";
}

const char* to_string(EvaluationMode m) { return m == EvaluationMode::Split ? "split" : "full"; }

SamplingStrategy sampling_from_string(const std::string& s) {
  for (auto v : {SamplingStrategy::None, SamplingStrategy::Oversample,
                 SamplingStrategy::Undersample, SamplingStrategy::Combine})
    if (s == to_string(v)) return v;
  fail(ErrorKind::Config, "unknown sampling strategy '" + s + "'");
}

DetectorKind detector_from_string(const std::string& s) {
  if (s == "kmeans") return DetectorKind::KMeans;
  if (s == "agglo" || s == "agglomerative") return DetectorKind::Agglomerative;
  if (s == "ocsvm") return DetectorKind::Ocsvm;
  fail(ErrorKind::Config, "unknown detector '" + s + "'");
}

namespace {

TaskMode mode_from_string(const std::string& s) {
  if (s == "ground-truth-as-evidence") return TaskMode::GroundTruthAsEvidence;
  if (s == "rotation") return TaskMode::Rotation;
  fail(ErrorKind::Config, "unknown task mode '" + s + "'");
}

EvaluationMode evaluation_from_string(const std::string& s) {
  if (s == "full") return EvaluationMode::Full;
  if (s == "split") return EvaluationMode::Split;
  fail(ErrorKind::Config, "unknown evaluation mode '" + s + "'");
}

SsimMode ssim_mode_from_string(const std::string& s) {
  if (s == "global") return SsimMode::Global;
  if (s == "windowed") return SsimMode::Windowed;
  fail(ErrorKind::Config, "unknown SSIM mode '" + s + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  const bool files = !feature_file.empty() || !catalog_file.empty();
  require(synth.has_value() != files, ErrorKind::Config,
          "exactly one data source (synth or feature_file + catalog_file) is required");
  if (files)
    require(!feature_file.empty() && !catalog_file.empty(), ErrorKind::Config,
            "file data source needs both feature_file and catalog_file");
  if (synth) synth->validate();
  if (mode == TaskMode::GroundTruthAsEvidence)
    require(!severe_types.empty(), ErrorKind::Config, "severe_types may not be empty");
  if (mode == TaskMode::Rotation)
    RotationSpec{rotation_ground_truth, rotation_evidence, nonsevere_target, 0}.validate();
  require(target_ratio > 0.0, ErrorKind::Config, "target_ratio must be positive");
  require(smote_k >= 1 && enn_k >= 1, ErrorKind::Config, "neighbour counts must be >= 1");
  require(latent_dim >= 1, ErrorKind::Config, "latent_dim must be >= 1");
  require(corruption_rate >= 0.0 && corruption_rate < 1.0, ErrorKind::Config,
          "corruption_rate must lie in [0, 1)");
  require(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
  require(adam.learning_rate > 0.0, ErrorKind::Config, "learning_rate must be positive");
  ssim_config().validate();
  require(lambda >= 0.0, ErrorKind::Config, "lambda must be >= 0");
  require(screening_threshold > 0.0 && screening_threshold <= 1.0, ErrorKind::Config,
          "screening_threshold must lie in (0, 1]");
  require(!screening || screening_epochs > 0, ErrorKind::Config,
          "screening with a zero iteration budget is inconclusive");
  require(n_init >= 1, ErrorKind::Config, "n_init must be >= 1");
  require(nu > 0.0 && nu <= 1.0, ErrorKind::Config, "nu must lie in (0, 1]");
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::Config,
          "train_fraction must lie in (0, 1)");
}

SsimConfig ExperimentConfig::ssim_config() const {
  SsimConfig cfg = SsimConfig::global();
  cfg.mode = ssim_mode;
  cfg.window_size = ssim_window;
  return cfg;
}

bool operator==(const SynthConfig& a, const SynthConfig& b) {
  return a.days == b.days && a.event_days == b.event_days && a.feature_dim == b.feature_dim &&
         a.overlap == b.overlap && a.regime_amplitude == b.regime_amplitude &&
         a.severe_shift == b.severe_shift && a.type_shift == b.type_shift &&
         a.noise == b.noise && a.start == b.start;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return config_to_json(a) == config_to_json(b) && a.output_dir == b.output_dir;
}

namespace {

json types_to_json(const std::vector<EventType>& types) {
  json out = json::array();
  for (auto t : types) out.push_back(to_string(t));
  return out;
}

json config_json(const ExperimentConfig& c, bool with_output) {
  json j;
  j["seed"] = c.seed;
  if (with_output) j["output_dir"] = c.output_dir;
  if (c.synth) {
    json events = json::object();
    for (const auto& [type, n] : c.synth->event_days) events[to_string(type)] = n;
    j["data"] = {{"source", "synth"},
                 {"synth",
                  {{"days", c.synth->days},
                   {"event_days", events},
                   {"feature_dim", c.synth->feature_dim},
                   {"overlap", c.synth->overlap},
                   {"regime_amplitude", c.synth->regime_amplitude},
                   {"severe_shift", c.synth->severe_shift},
                   {"type_shift", c.synth->type_shift},
                   {"noise", c.synth->noise},
                   {"start", c.synth->start}}}};
  } else {
    j["data"] = {{"source", "files"},
                 {"feature_file", c.feature_file},
                 {"catalog_file", c.catalog_file}};
  }
  j["task"] = {{"mode", to_string(c.mode)},
               {"severe_types", types_to_json(c.severe_types)},
               {"rotation",
                {{"ground_truth", to_string(c.rotation_ground_truth)},
                 {"evidence", types_to_json(c.rotation_evidence)},
                 {"nonsevere_target", c.nonsevere_target}}},
               {"rotation_types", types_to_json(c.rotation_types)}};
  j["sampling"] = {{"strategy", to_string(c.sampling)},
                   {"target_ratio", c.target_ratio},
                   {"smote_k", c.smote_k},
                   {"enn_k", c.enn_k}};
  j["autoencoder"] = {{"hidden", c.hidden},
                      {"latent_dim", c.latent_dim},
                      {"corruption_rate", c.corruption_rate}};
  j["training"] = {{"init_epochs", c.init_epochs},
                   {"transfer_epochs", c.transfer_epochs},
                   {"batch_size", c.batch_size},
                   {"learning_rate", c.adam.learning_rate},
                   {"beta1", c.adam.beta1},
                   {"beta2", c.adam.beta2},
                   {"epsilon", c.adam.epsilon},
                   {"ssim_mode", c.ssim_mode == SsimMode::Global ? "global" : "windowed"},
                   {"ssim_window", c.ssim_window},
                   {"denoise_transfer", c.denoise_transfer}};
  j["transfer"] = {{"lambda", c.lambda},
                   {"screening", c.screening},
                   {"screening_epochs", c.screening_epochs},
                   {"screening_threshold", c.screening_threshold},
                   {"screening_hidden", c.screening_hidden},
                   {"screening_learning_rate", c.screening_learning_rate}};
  j["detector"] = {{"kind", to_string(c.detector)},
                   {"n_init", c.n_init},
                   {"linkage", to_string(c.linkage)},
                   {"nu", c.nu},
                   {"ocsvm_iterations", c.ocsvm_iterations}};
  j["evaluation"] = {{"mode", to_string(c.evaluation)}, {"train_fraction", c.train_fraction}};
  return j;
}

// Reads declared keys from one JSON object, rejecting anything unexpected.
class Section {
 public:
  Section(json obj, std::string name) : name_(std::move(name)), obj_(std::move(obj)) {}

  // The object stored under `key`, or an empty one when absent.
  Section child(const std::string& key) {
    seen_.insert(key);
    const std::string path = name_.empty() ? key : name_ + "." + key;
    if (!obj_.contains(key)) return Section(json::object(), path);
    require(obj_.at(key).is_object(), ErrorKind::Config, "'" + path + "' must be an object");
    return Section(obj_.at(key), path);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::Config, "'" + qualified(key) + "' has the wrong type");
    }
  }

  bool has(const std::string& key) const { return obj_.contains(key); }
  const json& raw() const { return obj_; }
  void mark(const std::string& key) { seen_.insert(key); }

  void finish() const {
    for (const auto& [key, value] : obj_.items())
      require(seen_.count(key) > 0, ErrorKind::Config,
              "unknown configuration key '" + qualified(key) + "'");
  }

 private:
  std::string qualified(const std::string& key) const {
    return name_.empty() ? key : name_ + "." + key;
  }

  std::string name_;
  json obj_;
  std::set<std::string> seen_;
};

std::vector<EventType> read_types(Section& s, const std::string& key,
                                  std::vector<EventType> fallback) {
  std::vector<std::string> names;
  s.read(key, names);
  if (!s.has(key)) return fallback;
  std::vector<EventType> out;
  for (const auto& n : names) {
    try {
      out.push_back(event_type_from_string(n));
    } catch (const Error&) {
      fail(ErrorKind::Config, "unknown event type '" + n + "'");
    }
  }
  return out;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& config) {
  return config_json(config, true).dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("malformed config JSON: ") + e.what());
  }
  require(root.is_object(), ErrorKind::Config, "config must be a JSON object");
  ExperimentConfig c;
  Section top(root, "");
  top.read("seed", c.seed);
  top.read("output_dir", c.output_dir);

  Section data = top.child("data");
  std::string source = "synth";
  data.read("source", source);
  if (source == "synth") {
    require(!data.has("feature_file") && !data.has("catalog_file"), ErrorKind::Config,
            "exactly one data source may be given");
    SynthConfig sc;
    Section s = data.child("synth");
    s.read("days", sc.days);
    if (s.has("event_days")) {
      s.mark("event_days");
      require(s.raw().at("event_days").is_object(), ErrorKind::Config,
              "'data.synth.event_days' must be an object");
      sc.event_days.clear();
      for (const auto& [name, n] : s.raw().at("event_days").items()) {
        require(n.is_number_unsigned(), ErrorKind::Config, "event day counts must be unsigned");
        try {
          sc.event_days[event_type_from_string(name)] = n.get<std::size_t>();
        } catch (const Error&) {
          fail(ErrorKind::Config, "unknown event type '" + name + "'");
        }
      }
    }
    s.read("feature_dim", sc.feature_dim);
    s.read("overlap", sc.overlap);
    s.read("regime_amplitude", sc.regime_amplitude);
    s.read("severe_shift", sc.severe_shift);
    s.read("type_shift", sc.type_shift);
    s.read("noise", sc.noise);
    s.read("start", sc.start);
    s.finish();
    c.synth = sc;
  } else if (source == "files") {
    require(!data.has("synth"), ErrorKind::Config, "exactly one data source may be given");
    c.synth.reset();
    data.read("feature_file", c.feature_file);
    data.read("catalog_file", c.catalog_file);
  } else {
    fail(ErrorKind::Config, "unknown data source '" + source + "'");
  }
  data.finish();

  Section task = top.child("task");
  std::string mode = to_string(c.mode);
  task.read("mode", mode);
  c.mode = mode_from_string(mode);
  c.severe_types = read_types(task, "severe_types", c.severe_types);
  c.rotation_types = read_types(task, "rotation_types", c.rotation_types);
  {
    Section rot = task.child("rotation");
    std::string gt = to_string(c.rotation_ground_truth);
    rot.read("ground_truth", gt);
    try {
      c.rotation_ground_truth = event_type_from_string(gt);
    } catch (const Error&) {
      fail(ErrorKind::Config, "unknown event type '" + gt + "'");
    }
    c.rotation_evidence = read_types(rot, "evidence", c.rotation_evidence);
    rot.read("nonsevere_target", c.nonsevere_target);
    rot.finish();
  }
  task.finish();

  Section sampling = top.child("sampling");
  std::string strategy = to_string(c.sampling);
  sampling.read("strategy", strategy);
  c.sampling = sampling_from_string(strategy);
  sampling.read("target_ratio", c.target_ratio);
  sampling.read("smote_k", c.smote_k);
  sampling.read("enn_k", c.enn_k);
  sampling.finish();

  Section ae = top.child("autoencoder");
  ae.read("hidden", c.hidden);
  ae.read("latent_dim", c.latent_dim);
  ae.read("corruption_rate", c.corruption_rate);
  ae.finish();

  Section tr = top.child("training");
  tr.read("init_epochs", c.init_epochs);
  tr.read("transfer_epochs", c.transfer_epochs);
  tr.read("batch_size", c.batch_size);
  tr.read("learning_rate", c.adam.learning_rate);
  tr.read("beta1", c.adam.beta1);
  tr.read("beta2", c.adam.beta2);
  tr.read("epsilon", c.adam.epsilon);
  std::string ssim_mode = c.ssim_mode == SsimMode::Global ? "global" : "windowed";
  tr.read("ssim_mode", ssim_mode);
  c.ssim_mode = ssim_mode_from_string(ssim_mode);
  tr.read("ssim_window", c.ssim_window);
  tr.read("denoise_transfer", c.denoise_transfer);
  tr.finish();

  Section tf = top.child("transfer");
  tf.read("lambda", c.lambda);
  tf.read("screening", c.screening);
  tf.read("screening_epochs", c.screening_epochs);
  tf.read("screening_threshold", c.screening_threshold);
  tf.read("screening_hidden", c.screening_hidden);
  tf.read("screening_learning_rate", c.screening_learning_rate);
  tf.finish();

  Section det = top.child("detector");
  std::string kind = to_string(c.detector);
  det.read("kind", kind);
  c.detector = detector_from_string(kind);
  det.read("n_init", c.n_init);
  std::string linkage = to_string(c.linkage);
  det.read("linkage", linkage);
  c.linkage = linkage_from_string(linkage);
  det.read("nu", c.nu);
  det.read("ocsvm_iterations", c.ocsvm_iterations);
  det.finish();

  Section ev = top.child("evaluation");
  std::string eval_mode = to_string(c.evaluation);
  ev.read("mode", eval_mode);
  c.evaluation = evaluation_from_string(eval_mode);
  ev.read("train_fraction", c.train_fraction);
  ev.finish();
  top.finish();

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string canonical = config_json(config, false).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    fail(e.kind(), std::string("stage '") + name + "': " + e.detail());
  }
}

struct LoadedData {
  FeatureMatrix features;
  EventCatalog catalog;
};

LoadedData load_data(const ExperimentConfig& c) {
  if (c.synth) {
    auto synth = synth_generate(*c.synth, mix_seed(c.seed, kSeedSynth));
    return {std::move(synth.features), std::move(synth.catalog)};
  }
  return {load_feature_matrix(c.feature_file), ingest_event_catalog(c.catalog_file)};
}

std::vector<int> run_detector(const ExperimentConfig& c, const Matrix& latents) {
  const auto seed = mix_seed(c.seed, kSeedDetector);
  switch (c.detector) {
    case DetectorKind::KMeans:
      return kmeans_fit(latents, 2, seed, c.n_init).assignments;
    case DetectorKind::Agglomerative:
      return agglomerative_fit(latents, 2, c.linkage).labels;
    case DetectorKind::Ocsvm: {
      OcsvmConfig oc;
      oc.iterations = c.ocsvm_iterations;
      return ocsvm_score(ocsvm_fit(latents, c.nu, oc), latents).anomalous;
    }
  }
  return {};
}

std::vector<std::size_t> training_rows(const ExperimentConfig& c, const std::vector<int>& labels) {
  if (c.evaluation == EvaluationMode::Full) return iota_indices(labels.size());
  // Stratified split, kept in row order.
  Rng rng(mix_seed(c.seed, kSeedSplit));
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<std::size_t> rows;
  for (auto& [label, idx] : by_class) {
    rng.shuffle(idx);
    const auto keep = static_cast<std::size_t>(
        std::llround(c.train_fraction * static_cast<double>(idx.size())));
    rows.insert(rows.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(rows.begin(), rows.end());
  require(!rows.empty(), ErrorKind::Count, "training split is empty");
  return rows;
}

LabeledDataset apply_sampling(const ExperimentConfig& c, const LabeledDataset& ds) {
  const auto seed = mix_seed(c.seed, kSeedSampling);
  const SmoteConfig smote{c.smote_k, c.target_ratio};
  const EnnConfig enn{c.enn_k};
  switch (c.sampling) {
    case SamplingStrategy::None: return ds;
    case SamplingStrategy::Oversample: return smote_oversample(ds, smote, seed);
    case SamplingStrategy::Undersample: return random_undersample(ds, c.target_ratio, seed);
    case SamplingStrategy::Combine: return smoteenn(ds, smote, enn, seed);
  }
  return ds;
}

TrainConfig train_config(const ExperimentConfig& c, std::size_t epochs, SeedStream stream,
                         bool denoise) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = c.batch_size;
  tc.adam = c.adam;
  tc.ssim = c.ssim_config();
  tc.seed = mix_seed(c.seed, stream);
  tc.denoise = denoise;
  return tc;
}

ScreeningConfig screening_config(const ExperimentConfig& c) {
  ScreeningConfig sc;
  sc.epochs = c.screening_epochs;
  sc.threshold = c.screening_threshold;
  sc.hidden = c.screening_hidden;
  sc.batch_size = c.batch_size;
  sc.adam.learning_rate = c.screening_learning_rate;
  sc.seed = mix_seed(c.seed, kSeedScreening);
  return sc;
}

struct TaskData {
  LabeledDataset dataset;
  EvidenceSet evidence;
  std::string cell;
  std::vector<std::string> notes;
};

TaskData build_task(const ExperimentConfig& c, const LoadedData& data) {
  TaskData task;
  if (c.mode == TaskMode::GroundTruthAsEvidence) {
    auto labels = expand_event_labels(data.catalog, data.features, c.severe_types);
    for (auto& w : labels.warnings) task.notes.push_back(w);
    LabeledDataset ds(data.features.values, std::move(labels.labels));
    task.dataset = stage("sampling", [&] { return apply_sampling(c, ds); });
    task.evidence.add("ground-truth", one_hot(task.dataset.labels, 2));
    task.cell = to_string(c.sampling);
    task.notes.push_back(std::string("warning: ") + kGroundTruthWarning);
  } else {
    RotationSpec spec{c.rotation_ground_truth, c.rotation_evidence, c.nonsevere_target,
                      mix_seed(c.seed, kSeedRotation)};
    auto exp = build_rotation_experiment(data.features, data.catalog, spec);
    task.dataset = std::move(exp.dataset);
    task.evidence = std::move(exp.evidence);
    task.cell = std::string(to_string(c.rotation_ground_truth));
    for (auto t : c.rotation_evidence) task.cell += std::string("|") + to_string(t);
    if (c.sampling != SamplingStrategy::None)
      task.notes.push_back(std::string("sampling strategy '") + to_string(c.sampling) +
                           "' not applied: the rotation protocol under-samples the non-severe "
                           "pool itself");
  }
  return task;
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& c) {
  stage("config", [&] { c.validate(); });
  PipelineResult result;
  result.config_hash = config_hash(c);
  result.seed = c.seed;
  result.mode = c.mode;

  const auto data = stage("data", [&] { return load_data(c); });
  auto task = stage("task", [&] { return build_task(c, data); });
  result.cell = task.cell;
  result.notes = task.notes;
  result.labels = task.dataset.labels;
  const Matrix& x = task.dataset.features;

  const auto train_rows = stage("split", [&] { return training_rows(c, result.labels); });
  const Matrix x_train = x.select_rows(train_rows);
  const EvidenceSet evidence_train = task.evidence.select_rows(train_rows);

  result.init_model = stage("init-train", [&] {
    AutoencoderConfig ac;
    ac.input_dim = x.cols();
    ac.hidden = c.hidden;
    ac.latent_dim = c.latent_dim;
    ac.corruption_rate = c.corruption_rate;
    ac.seed = mix_seed(c.seed, kSeedWeights);
    auto init = train_init(make_autoencoder(ac), x,
                           train_config(c, c.init_epochs, kSeedInitTrain, true));
    result.init_curve = std::move(init.loss_curve);
    return std::move(init.model);
  });

  result.baseline_latents = encode(result.init_model, x);
  result.baseline = stage("baseline-detect", [&] {
    return evaluate_detection(run_detector(c, result.baseline_latents), result.labels);
  });

  EvidenceSet accepted;
  stage("screening", [&] {
    for (std::size_t j = 0; j < evidence_train.size(); ++j) {
      if (c.screening) {
        auto verdict = screen_evidence(evidence_train.sources[j], evidence_train.names[j], x_train,
                                       screening_config(c));
        result.screening.push_back(verdict);
        if (!verdict.accepted) continue;
      }
      accepted.add(evidence_train.names[j], evidence_train.sources[j]);
    }
  });
  result.evidence_used = accepted.names;

  if (accepted.size() == 0) {
    result.notes.push_back("no evidence source passed screening; transfer arm equals baseline");
    result.transfer_model = result.init_model;
    result.transfer_latents = result.baseline_latents;
    result.transfer = result.baseline;
    return result;
  }

  result.transfer_model = stage("transfer-train", [&] {
    auto model = attach_evidence_heads(result.init_model, accepted, mix_seed(c.seed, kSeedHeads));
    TransferConfig tc{c.lambda, accepted.size()};
    auto out = train_transfer(std::move(model), x_train, accepted, tc,
                              train_config(c, c.transfer_epochs, kSeedTransferTrain,
                                           c.denoise_transfer));
    result.transfer_curves = std::move(out.curves);
    return std::move(out.model);
  });
  result.transfer_latents = encode(result.transfer_model, x);
  result.transfer = stage("transfer-detect", [&] {
    return evaluate_detection(run_detector(c, result.transfer_latents), result.labels);
  });
  return result;
}

SuiteResult run_rotation_suite(const ExperimentConfig& config) {
  require(config.rotation_types.size() >= 2, ErrorKind::Config,
          "rotation suite needs at least two event types");
  SuiteResult suite;
  suite.kind = "rotation";
  suite.config_hash = config_hash(config);
  suite.seed = config.seed;
  for (auto truth : config.rotation_types) {
    for (auto ev : config.rotation_types) {
      if (truth == ev) continue;
      ExperimentConfig cell = config;
      cell.mode = TaskMode::Rotation;
      cell.sampling = SamplingStrategy::None;
      cell.rotation_ground_truth = truth;
      cell.rotation_evidence = {ev};
      SuiteCell out;
      out.name = std::string(to_string(truth)) + "|" + to_string(ev);
      try {
        out.result = run_pipeline(cell);
      } catch (const Error& e) {
        out.error = e.what();
      }
      suite.cells.push_back(std::move(out));
    }
  }
  return suite;
}

SuiteResult run_sampling_comparison(const ExperimentConfig& config) {
  SuiteResult suite;
  suite.kind = "sampling";
  suite.config_hash = config_hash(config);
  suite.seed = config.seed;
  for (auto strategy : {SamplingStrategy::Oversample, SamplingStrategy::Undersample,
                        SamplingStrategy::Combine}) {
    ExperimentConfig cell = config;
    cell.mode = TaskMode::GroundTruthAsEvidence;
    cell.sampling = strategy;
    SuiteCell out;
    out.name = to_string(strategy);
    try {
      out.result = run_pipeline(cell);
    } catch (const Error& e) {
      out.error = e.what();
    }
    suite.cells.push_back(std::move(out));
  }
  return suite;
}

ScreeningRun run_screening(const ExperimentConfig& c) {
  stage("config", [&] { c.validate(); });
  require(c.screening_epochs > 0, ErrorKind::Config,
          "screening with a zero iteration budget is inconclusive");
  const auto data = stage("data", [&] { return load_data(c); });
  const auto task = stage("task", [&] { return build_task(c, data); });
  ScreeningRun run;
  run.config_hash = config_hash(c);
  stage("screening", [&] {
    for (std::size_t j = 0; j < task.evidence.size(); ++j)
      run.verdicts.push_back(screen_evidence(task.evidence.sources[j], task.evidence.names[j],
                                             task.dataset.features, screening_config(c)));
  });
  return run;
}

namespace {

double round6(double v) { return std::round(v * 1e6) / 1e6; }

std::string fixed6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", round6(v) == 0.0 ? 0.0 : v);
  return buf;
}

std::string signed6(double v) {
  char buf[48];
  const double r = round6(v);
  std::snprintf(buf, sizeof buf, "%+.6f", r == 0.0 ? 0.0 : r);
  return buf;
}

void put(std::ostringstream& out, const std::string& key, const std::string& value) {
  out << key << " = " << value << '\n';
}

void put_metrics(std::ostringstream& out, const std::string& prefix, const DetectionReport& r) {
  put(out, prefix + "anomalous.precision", fixed6(r.anomalous.precision));
  put(out, prefix + "anomalous.recall", fixed6(r.anomalous.recall));
  put(out, prefix + "anomalous.f1", fixed6(r.anomalous.f1));
  put(out, prefix + "anomalous.degenerate", r.anomalous.degenerate ? "true" : "false");
  put(out, prefix + "micro.precision", fixed6(r.micro.precision));
  put(out, prefix + "micro.recall", fixed6(r.micro.recall));
  put(out, prefix + "micro.f1", fixed6(r.micro.f1));
  put(out, prefix + "confusion.tp", std::to_string(r.confusion.tp));
  put(out, prefix + "confusion.fp", std::to_string(r.confusion.fp));
  put(out, prefix + "confusion.fn", std::to_string(r.confusion.fn));
  put(out, prefix + "confusion.tn", std::to_string(r.confusion.tn));
  std::string mapping;
  for (const auto& [cluster, label] : r.cluster_to_label) {
    if (!mapping.empty()) mapping += ",";
    mapping += std::to_string(cluster) + "->" + std::to_string(label);
  }
  put(out, prefix + "mapping", mapping);
}

void put_deltas(std::ostringstream& out, const std::string& prefix, const DetectionReport& b,
                const DetectionReport& t) {
  auto d = [](double tv, double bv) { return signed6(round6(tv) - round6(bv)); };
  put(out, prefix + "anomalous.precision", d(t.anomalous.precision, b.anomalous.precision));
  put(out, prefix + "anomalous.recall", d(t.anomalous.recall, b.anomalous.recall));
  put(out, prefix + "anomalous.f1", d(t.anomalous.f1, b.anomalous.f1));
  put(out, prefix + "micro.precision", d(t.micro.precision, b.micro.precision));
  put(out, prefix + "micro.recall", d(t.micro.recall, b.micro.recall));
  put(out, prefix + "micro.f1", d(t.micro.f1, b.micro.f1));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

// Writes into a staging directory and moves the finished files into `dir`.
void staged_write(const std::filesystem::path& dir,
                  const std::function<void(const std::filesystem::path&)>& writer) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::Io, "cannot create output directory '" + dir.string() + "'");
  const fs::path staging = dir / ".staging";
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  require(!ec, ErrorKind::Io, "cannot create staging directory in '" + dir.string() + "'");
  try {
    writer(staging);
    std::vector<fs::path> entries;
    for (const auto& e : fs::recursive_directory_iterator(staging))
      if (e.is_regular_file()) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& src : entries) {
      const fs::path dst = dir / fs::relative(src, staging);
      fs::create_directories(dst.parent_path());
      fs::rename(src, dst);
    }
    fs::remove_all(staging);
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
}

void write_pipeline_files(const PipelineResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.txt", format_report(r));
  export_latent_projection(r.baseline_latents, r.labels, dir / "baseline_projection.tsv");
  export_latent_projection(r.transfer_latents, r.labels, dir / "transfer_projection.tsv");
}

std::string cell_dir_name(const std::string& cell) {
  std::string out = cell;
  std::replace(out.begin(), out.end(), '|', '-');
  return out;
}

}  // namespace

std::string format_report(const PipelineResult& r) {
  std::ostringstream out;
  out << "# evitransfer detection report\n";
  put(out, "format_version", "1");
  put(out, "config_hash", r.config_hash);
  put(out, "seed", std::to_string(r.seed));
  put(out, "mode", to_string(r.mode));
  put(out, "cell", r.cell);
  put(out, "samples", std::to_string(r.labels.size()));
  std::string used;
  for (const auto& n : r.evidence_used) used += (used.empty() ? "" : ",") + n;
  put(out, "evidence", used.empty() ? "none" : used);
  for (std::size_t i = 0; i < r.notes.size(); ++i) put(out, "note." + std::to_string(i), r.notes[i]);
  for (const auto& v : r.screening) {
    put(out, "screening." + v.source + ".entropy_ratio", fixed6(v.entropy_ratio));
    put(out, "screening." + v.source + ".accepted", v.accepted ? "true" : "false");
  }
  out << "\n[baseline]\n";
  put_metrics(out, "", r.baseline);
  out << "\n[transfer]\n";
  put_metrics(out, "", r.transfer);
  out << "\n[delta]\n";
  put_deltas(out, "", r.baseline, r.transfer);
  return out.str();
}

std::string format_suite_summary(const SuiteResult& s) {
  std::ostringstream out;
  out << "# evitransfer " << s.kind << " summary\n";
  put(out, "format_version", "1");
  put(out, "config_hash", s.config_hash);
  put(out, "seed", std::to_string(s.seed));
  put(out, "cells", std::to_string(s.cells.size()));
  for (const auto& cell : s.cells) {
    out << "\n[" << cell.name << "]\n";
    if (!cell.result) {
      put(out, "status", "failed");
      put(out, "error", cell.error);
      continue;
    }
    put(out, "status", "ok");
    const auto& r = *cell.result;
    for (const auto& [prefix, rep] :
         {std::pair<std::string, const DetectionReport*>{"baseline.", &r.baseline},
          {"transfer.", &r.transfer}}) {
      put(out, prefix + "anomalous.precision", fixed6(rep->anomalous.precision));
      put(out, prefix + "anomalous.recall", fixed6(rep->anomalous.recall));
      put(out, prefix + "anomalous.f1", fixed6(rep->anomalous.f1));
      put(out, prefix + "micro.precision", fixed6(rep->micro.precision));
      put(out, prefix + "micro.recall", fixed6(rep->micro.recall));
      put(out, prefix + "micro.f1", fixed6(rep->micro.f1));
    }
    put_deltas(out, "delta.", r.baseline, r.transfer);
  }
  return out.str();
}

void emit_report(const PipelineResult& result, const std::filesystem::path& dir) {
  staged_write(dir, [&](const std::filesystem::path& staging) {
    write_pipeline_files(result, staging);
  });
}

void emit_suite(const SuiteResult& suite, const std::filesystem::path& dir) {
  require(!suite.cells.empty(), ErrorKind::Config, "suite has no cells to report");
  staged_write(dir, [&](const std::filesystem::path& staging) {
    write_text(staging / (suite.kind + "_summary.txt"), format_suite_summary(suite));
    for (const auto& cell : suite.cells)
      if (cell.result) write_pipeline_files(*cell.result, staging / cell_dir_name(cell.name));
  });
}

void emit_screening(const ScreeningRun& run, const std::filesystem::path& dir) {
  std::ostringstream out;
  out << "# evitransfer screening report\n";
  put(out, "format_version", "1");
  put(out, "config_hash", run.config_hash);
  for (const auto& v : run.verdicts) {
    out << "\n[" << v.source << "]\n";
    put(out, "mean_entropy", fixed6(v.mean_entropy));
    put(out, "entropy_ratio", fixed6(v.entropy_ratio));
    put(out, "accepted", v.accepted ? "true" : "false");
  }
  staged_write(dir, [&](const std::filesystem::path& staging) {
    write_text(staging / "screening.txt", out.str());
  });
}

ParsedReport parse_report_text(const std::string& text) {
  ParsedReport out;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      require(line.back() == ']', ErrorKind::Data,
              "report line " + std::to_string(line_no) + ": malformed section header");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find(" = ");
    require(eq != std::string::npos, ErrorKind::Data,
            "report line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = line.substr(0, eq);
    out[section.empty() ? key : section + "." + key] = line.substr(eq + 3);
  }
  return out;
}

ParsedReport parse_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open report '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_report_text(ss.str());
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Alignment:
    case ErrorKind::Mapping:
      return 2;
    case ErrorKind::Data:
    case ErrorKind::Count:
    case ErrorKind::Shape:
    case ErrorKind::Check:
      return 3;
    case ErrorKind::Numeric:
      return 4;
    case ErrorKind::Io:
      return 1;
  }
  return 1;
}

}  // namespace evt
