#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "evitransfer/random.hpp"

namespace evt {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  Matrix select_rows(std::span<const std::size_t> indices) const;
  Matrix transpose() const;
  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_at(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_bt(const Matrix& a, const Matrix& b);

Matrix vstack(const Matrix& top, const Matrix& bottom);
double squared_distance(std::span<const double> a, std::span<const double> b);
double dot(std::span<const double> a, std::span<const double> b);

enum class Activation { Linear, ReLU, Sigmoid, Softmax };

const char* to_string(Activation act);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
  Matrix weights;  // in x out
  std::vector<double> bias;
  Activation activation = Activation::Linear;

  std::size_t in_width() const noexcept { return weights.rows(); }
  std::size_t out_width() const noexcept { return weights.cols(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Glorot-uniform weights, zero bias.
DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng);

struct ParamGrads {
  Matrix weights;
  std::vector<double> bias;
};

struct BackwardResult {
  ParamGrads params;
  Matrix input_grad;
};

/// input * W + b, before the activation.
Matrix dense_preactivation(const DenseLayer& layer, const Matrix& input);
Matrix apply_activation(Activation act, Matrix pre);

Matrix dense_forward(const DenseLayer& layer, const Matrix& input);

/// Gradients of the layer output chained with `upstream_grad` (dL/d output).
BackwardResult dense_backward(const DenseLayer& layer, const Matrix& input,
                              const Matrix& upstream_grad);
/// Same as above, reusing an already computed forward output.
BackwardResult dense_backward(const DenseLayer& layer, const Matrix& input,
                              const Matrix& output, const Matrix& upstream_grad);
/// Backward through the affine part only; `pre_grad` is dL/d(preactivation).
BackwardResult affine_backward(const DenseLayer& layer, const Matrix& input,
                               const Matrix& pre_grad);

/// Row-wise numerically stable softmax.
Matrix softmax_rows(const Matrix& logits);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// A named view onto one parameter tensor and its gradient.
struct ParamBlock {
  std::string name;
  std::span<double> params;
  std::span<const double> grads;
};

/// Adam with bias correction. Moments are allocated lazily per block on the
/// first step; block order and sizes must stay fixed afterwards.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config = {});

  void step(std::span<const ParamBlock> blocks);

  std::uint64_t step_count() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

struct GradCheckBlock {
  std::string name;
  std::span<double> params;
  std::span<const double> analytic;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Gradients smaller than this are compared in absolute terms.
  double floor = 1e-6;
};

struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
  };
  std::vector<Entry> blocks;
  double max_relative_error = 0.0;

  bool passed(double tolerance) const noexcept { return max_relative_error < tolerance; }
};

/// Compares analytic gradients to central finite differences. `loss` must read
/// the parameters through the spans in `blocks`, which are perturbed in place
/// and restored afterwards.
GradCheckReport grad_check(const std::function<double()>& loss,
                           std::span<const GradCheckBlock> blocks,
                           GradCheckOptions options = {});

double relative_error(double analytic, double numeric, double floor);

}  // namespace evt
