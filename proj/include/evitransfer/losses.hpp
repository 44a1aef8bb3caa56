#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evitransfer/tensor.hpp"

namespace evt {

enum class SsimMode { Global, Windowed };

struct SsimConfig {
  double dynamic_range = 1.0;
  double c1 = 1e-4;  // (0.01 L)^2
  double c2 = 9e-4;  // (0.03 L)^2
  SsimMode mode = SsimMode::Global;
  std::size_t window_size = 0;

  static SsimConfig global(double dynamic_range = 1.0);
  /// Averages SSIM over consecutive non-overlapping windows; a trailing
  /// remainder shorter than two values is folded into the previous window.
  static SsimConfig windowed(std::size_t window_size, double dynamic_range = 1.0);

  void validate() const;
};

double ssim(std::span<const double> x, std::span<const double> x_prime, const SsimConfig& cfg);

/// SSIM and its gradient with respect to x_prime.
double ssim_with_grad(std::span<const double> x, std::span<const double> x_prime,
                      const SsimConfig& cfg, std::span<double> grad_x_prime);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;
};

/// Mean over rows of (1 - SSIM(x_i, x'_i)); the gradient is w.r.t. the
/// reconstruction batch.
LossAndGrad ssim_loss(const Matrix& batch_x, const Matrix& batch_x_prime, const SsimConfig& cfg);

inline constexpr double kLogClip = 1e-12;

/// Mean over rows of -sum_c V log(Q + clip). The returned gradient is with
/// respect to the head logits, (Q - V) / N.
LossAndGrad softmax_cross_entropy(const Matrix& evidence, const Matrix& head_output);

/// Per-row cross-entropy terms, used for diagnostics on subsets of samples.
std::vector<double> cross_entropy_rows(const Matrix& evidence, const Matrix& head_output);

struct TransferConfig {
  double lambda = 0.1;
  std::size_t evidence_count = 1;

  void validate() const;
};

/// ae_loss + lambda * mean(ce_losses).
double evidence_transfer_loss(double ae_loss, std::span<const double> ce_losses,
                              const TransferConfig& cfg);

}  // namespace evt
