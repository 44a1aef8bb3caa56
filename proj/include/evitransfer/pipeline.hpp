#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evitransfer/autoencoder.hpp"
#include "evitransfer/dataio.hpp"
#include "evitransfer/detectors.hpp"
#include "evitransfer/error.hpp"
#include "evitransfer/evaluation.hpp"

namespace evt {

enum class SamplingStrategy { None, Oversample, Undersample, Combine };
enum class DetectorKind { KMeans, Agglomerative, Ocsvm };
enum class TaskMode { GroundTruthAsEvidence, Rotation };
enum class EvaluationMode { Full, Split };

const char* to_string(SamplingStrategy s);
const char* to_string(DetectorKind d);
const char* to_string(TaskMode m);
const char* to_string(EvaluationMode m);
SamplingStrategy sampling_from_string(const std::string& s);
DetectorKind detector_from_string(const std::string& s);

/// Every tunable of an experiment. Hyperparameters that the method leaves
/// open appear here explicitly so that reports document them.
struct ExperimentConfig {
  // Data source: either the synthetic generator or a feature file plus catalog.
  std::optional<SynthConfig> synth = SynthConfig{};
  std::string feature_file;
  std::string catalog_file;

  TaskMode mode = TaskMode::GroundTruthAsEvidence;
  std::vector<EventType> severe_types{EventType::Flood, EventType::Tornado, EventType::Windstorm};
  EventType rotation_ground_truth = EventType::Windstorm;
  std::vector<EventType> rotation_evidence{EventType::Flood};
  std::size_t nonsevere_target = 500;
  std::vector<EventType> rotation_types{EventType::Flood, EventType::Tornado, EventType::Windstorm};

  SamplingStrategy sampling = SamplingStrategy::Undersample;
  double target_ratio = 1.0;
  std::size_t smote_k = 5;
  std::size_t enn_k = 3;

  std::vector<std::size_t> hidden{512, 256};
  std::size_t latent_dim = 10;
  double corruption_rate = 0.2;
  std::size_t init_epochs = 100;
  std::size_t transfer_epochs = 100;
  std::size_t batch_size = 32;
  AdamConfig adam{};
  SsimMode ssim_mode = SsimMode::Global;
  std::size_t ssim_window = 0;
  bool denoise_transfer = true;

  double lambda = 0.1;
  bool screening = true;
  std::size_t screening_epochs = 50;
  double screening_threshold = 0.9;
  std::size_t screening_hidden = 8;
  double screening_learning_rate = 1e-2;

  DetectorKind detector = DetectorKind::KMeans;
  std::size_t n_init = 10;
  Linkage linkage = Linkage::Ward;
  double nu = 0.5;
  std::size_t ocsvm_iterations = 5000;

  EvaluationMode evaluation = EvaluationMode::Full;
  double train_fraction = 0.7;

  std::uint64_t seed = 0;
  std::string output_dir = "out";

  void validate() const;
  SsimConfig ssim_config() const;
};

bool operator==(const SynthConfig& a, const SynthConfig& b);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a over the canonical serialisation, excluding the output directory.
std::string config_hash(const ExperimentConfig& config);

struct PipelineResult {
  std::string config_hash;
  std::uint64_t seed = 0;
  TaskMode mode = TaskMode::GroundTruthAsEvidence;
  std::string cell;  // experiment label, e.g. "windstorm|flood"
  DetectionReport baseline;
  DetectionReport transfer;
  std::vector<ScreeningVerdict> screening;
  std::vector<std::string> evidence_used;
  std::vector<std::string> notes;
  std::vector<double> init_curve;
  TransferCurves transfer_curves;
  Matrix baseline_latents;
  Matrix transfer_latents;
  std::vector<int> labels;
  AutoencoderModel init_model;
  AutoencoderModel transfer_model;
};

/// Baseline (detector on initial latents) and evidence-transfer (same detector
/// on transferred latents) arms from one shared initialisation model.
PipelineResult run_pipeline(const ExperimentConfig& config);

struct SuiteCell {
  std::string name;
  std::optional<PipelineResult> result;
  std::string error;  // set when the cell failed
};

struct SuiteResult {
  std::string kind;  // "rotation" or "sampling"
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<SuiteCell> cells;
};

/// One run per ordered (ground truth, evidence) pair of `rotation_types`.
SuiteResult run_rotation_suite(const ExperimentConfig& config);

/// The ground-truth-as-evidence protocol under each of the three strategies.
SuiteResult run_sampling_comparison(const ExperimentConfig& config);

struct ScreeningRun {
  std::string config_hash;
  std::vector<ScreeningVerdict> verdicts;
};

/// Screens the evidence sources the configured task would use.
ScreeningRun run_screening(const ExperimentConfig& config);

/// Writes report.txt plus baseline/transfer projection files into `dir`.
/// Files are staged and moved into place only when all writes succeed.
void emit_report(const PipelineResult& result, const std::filesystem::path& dir);
void emit_suite(const SuiteResult& suite, const std::filesystem::path& dir);
void emit_screening(const ScreeningRun& run, const std::filesystem::path& dir);

std::string format_report(const PipelineResult& result);
std::string format_suite_summary(const SuiteResult& suite);

/// "section.key" -> value for every key = value line of a report file.
using ParsedReport = std::map<std::string, std::string>;
ParsedReport parse_report(const std::filesystem::path& path);
ParsedReport parse_report_text(const std::string& text);

/// Exit-code convention shared by the CLI and the C API.
int exit_code_for(ErrorKind kind);

}  // namespace evt
