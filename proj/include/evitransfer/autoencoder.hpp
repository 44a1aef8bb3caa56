#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "evitransfer/losses.hpp"
#include "evitransfer/tensor.hpp"

namespace evt {

struct AutoencoderConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden{512, 256};
  std::size_t latent_dim = 10;
  double corruption_rate = 0.2;
  Activation hidden_activation = Activation::ReLU;
  Activation output_activation = Activation::Sigmoid;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const AutoencoderConfig&, const AutoencoderConfig&) = default;
};

/// Softmax layer on the latent code, one per evidence source.
struct EvidenceHead {
  std::string name;
  DenseLayer layer;
  friend bool operator==(const EvidenceHead&, const EvidenceHead&) = default;
};

/// Denoising stacked autoencoder. The decoder mirrors the encoder widths.
struct AutoencoderModel {
  AutoencoderConfig config;
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> decoder;
  std::vector<EvidenceHead> heads;

  std::size_t input_dim() const { return encoder.front().in_width(); }
  std::size_t latent_dim() const { return encoder.back().out_width(); }

  void validate() const;
  friend bool operator==(const AutoencoderModel&, const AutoencoderModel&) = default;
};

AutoencoderModel make_autoencoder(const AutoencoderConfig& config);

/// K categorical evidence sources, each a one-hot N x C_j matrix.
struct EvidenceSet {
  std::vector<Matrix> sources;
  std::vector<std::string> names;

  std::size_t size() const noexcept { return sources.size(); }
  std::size_t rows() const noexcept { return sources.empty() ? 0 : sources.front().rows(); }

  void add(std::string name, Matrix one_hot_labels);
  EvidenceSet select_rows(std::span<const std::size_t> indices) const;
  void validate() const;
};

Matrix one_hot(std::span<const int> labels, std::size_t classes);

/// Zero-masks each entry independently with probability `rate`.
Matrix corrupt_input(const Matrix& batch, double rate, std::uint64_t seed);
Matrix corrupt_input(const Matrix& batch, double rate, Rng& rng);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  AdamConfig adam{};
  SsimConfig ssim = SsimConfig::global();
  std::uint64_t seed = 0;
  // Corrupt inputs during training; the rate comes from the model config.
  bool denoise = true;
};

struct InitResult {
  AutoencoderModel model;
  std::vector<double> loss_curve;  // mean reconstruction loss per epoch
};

/// Unsupervised reconstruction training under the SSIM loss. Never reads any
/// evidence, and leaves evidence heads untouched.
InitResult train_init(AutoencoderModel model, const Matrix& data, const TrainConfig& config);

Matrix encode(const AutoencoderModel& model, const Matrix& data);
Matrix reconstruct(const AutoencoderModel& model, const Matrix& data);
double reconstruction_loss(const AutoencoderModel& model, const Matrix& data,
                           const SsimConfig& ssim = SsimConfig::global());
/// Softmax outputs of head `head_index` for `data`.
Matrix head_probabilities(const AutoencoderModel& model, std::size_t head_index,
                          const Matrix& data);

/// Replaces any existing heads with freshly initialized ones, one per source.
AutoencoderModel attach_evidence_heads(AutoencoderModel model, const EvidenceSet& evidence,
                                       std::uint64_t seed);

/// Loss terms and parameter gradients of the joint objective for one batch.
/// With no evidence (or lambda = 0) this is the plain reconstruction objective.
struct JointGradients {
  double ae_loss = 0.0;
  std::vector<double> ce_losses;
  double total = 0.0;
  std::vector<ParamGrads> encoder;
  std::vector<ParamGrads> decoder;
  std::vector<ParamGrads> heads;
};

JointGradients joint_loss_and_gradients(const AutoencoderModel& model, const Matrix& input,
                                        const Matrix& target, const EvidenceSet* evidence,
                                        const TransferConfig& transfer, const SsimConfig& ssim);

struct TransferCurves {
  std::vector<double> ae_loss;
  std::vector<std::vector<double>> ce_loss;  // [source][epoch]
  std::vector<double> total;
};

struct TransferResult {
  AutoencoderModel model;
  TransferCurves curves;
};

/// Joint optimisation of reconstruction and the evidence cross-entropies,
/// continuing from an initialised model with heads attached.
TransferResult train_transfer(AutoencoderModel model, const Matrix& data,
                              const EvidenceSet& evidence, const TransferConfig& transfer,
                              const TrainConfig& config);

struct ScreeningConfig {
  std::size_t epochs = 50;
  double threshold = 0.9;
  std::size_t hidden = 8;
  std::size_t batch_size = 32;
  AdamConfig adam{1e-2};
  std::uint64_t seed = 0;
};

struct ScreeningVerdict {
  std::string source;
  double mean_entropy = 0.0;
  double entropy_ratio = 0.0;  // mean entropy / ln(classes)
  bool accepted = false;

  friend bool operator==(const ScreeningVerdict&, const ScreeningVerdict&) = default;
};

/// Trains a small iteration-limited evidence network from the data to one
/// source. Evidence that does not correspond to the data leaves its softmax
/// close to uniform, which shows up as a high entropy ratio.
ScreeningVerdict screen_evidence(const Matrix& evidence, const std::string& source_name,
                                 const Matrix& data, const ScreeningConfig& config);

void save_checkpoint(const AutoencoderModel& model, const std::filesystem::path& path);
AutoencoderModel load_checkpoint(const std::filesystem::path& path);

}  // namespace evt
