#include "evitransfer/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "evitransfer/error.hpp"

namespace evt {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, ErrorKind::Shape,
          "matrix data length " + std::to_string(data_.size()) + " != " +
              std::to_string(rows) + "x" + std::to_string(cols));
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, ErrorKind::Shape, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < rows_, ErrorKind::Shape, "row index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

Matrix Matrix::transpose() const {
  Matrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorKind::Shape,
          "matmul " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " +
              std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* src = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), ErrorKind::Shape, "matmul_at row mismatch");
  Matrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* brow = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* dst = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += aki * brow[j];
    }
  }
  return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), ErrorKind::Shape, "matmul_bt column mismatch");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.empty()) return bottom;
  if (bottom.empty()) return top;
  require(top.cols() == bottom.cols(), ErrorKind::Shape, "vstack column mismatch");
  std::vector<double> data(top.storage());
  data.insert(data.end(), bottom.storage().begin(), bottom.storage().end());
  return Matrix(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

const char* to_string(Activation act) {
  switch (act) {
    case Activation::Linear: return "linear";
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "linear") return Activation::Linear;
  if (name == "relu") return Activation::ReLU;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "softmax") return Activation::Softmax;
  fail(ErrorKind::Config, "unknown activation '" + name + "'");
}

DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  require(in > 0 && out > 0, ErrorKind::Config, "layer widths must be positive");
  DenseLayer layer;
  layer.weights = Matrix(in, out);
  layer.bias.assign(out, 0.0);
  layer.activation = act;
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : layer.weights.values()) w = rng.uniform(-limit, limit);
  return layer;
}

Matrix dense_preactivation(const DenseLayer& layer, const Matrix& input) {
  require(input.cols() == layer.in_width(), ErrorKind::Shape,
          "dense input width " + std::to_string(input.cols()) + ", layer expects " +
              std::to_string(layer.in_width()));
  Matrix pre = matmul(input, layer.weights);
  for (std::size_t r = 0; r < pre.rows(); ++r) {
    auto row = pre.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
  }
  return pre;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

Matrix apply_activation(Activation act, Matrix pre) {
  switch (act) {
    case Activation::Linear:
      return pre;
    case Activation::ReLU:
      for (double& v : pre.values()) v = v > 0.0 ? v : 0.0;
      return pre;
    case Activation::Sigmoid:
      for (double& v : pre.values()) v = 1.0 / (1.0 + std::exp(-v));
      return pre;
    case Activation::Softmax:
      return softmax_rows(pre);
  }
  return pre;
}

Matrix dense_forward(const DenseLayer& layer, const Matrix& input) {
  return apply_activation(layer.activation, dense_preactivation(layer, input));
}

BackwardResult affine_backward(const DenseLayer& layer, const Matrix& input,
                               const Matrix& pre_grad) {
  require(pre_grad.rows() == input.rows() && pre_grad.cols() == layer.out_width(),
          ErrorKind::Shape, "upstream gradient shape does not match layer output");
  BackwardResult out;
  out.params.weights = matmul_at(input, pre_grad);
  out.params.bias.assign(layer.out_width(), 0.0);
  for (std::size_t r = 0; r < pre_grad.rows(); ++r) {
    auto row = pre_grad.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out.params.bias[c] += row[c];
  }
  out.input_grad = matmul_bt(pre_grad, layer.weights);
  return out;
}

BackwardResult dense_backward(const DenseLayer& layer, const Matrix& input,
                              const Matrix& upstream_grad) {
  return dense_backward(layer, input, dense_forward(layer, input), upstream_grad);
}

BackwardResult dense_backward(const DenseLayer& layer, const Matrix& input,
                              const Matrix& output, const Matrix& upstream_grad) {
  require(upstream_grad.rows() == output.rows() && upstream_grad.cols() == output.cols(),
          ErrorKind::Shape, "upstream gradient shape does not match forward output");
  Matrix pre_grad = upstream_grad;
  switch (layer.activation) {
    case Activation::Linear:
      break;
    case Activation::ReLU: {
      auto g = pre_grad.values();
      auto y = output.values();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(y[i] > 0.0)) g[i] = 0.0;
      break;
    }
    case Activation::Sigmoid: {
      auto g = pre_grad.values();
      auto y = output.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
      break;
    }
    case Activation::Softmax:
      for (std::size_t r = 0; r < pre_grad.rows(); ++r) {
        auto g = pre_grad.row(r);
        auto y = output.row(r);
        const double inner = dot(g, y);
        for (std::size_t c = 0; c < g.size(); ++c) g[c] = y[c] * (g[c] - inner);
      }
      break;
  }
  return affine_backward(layer, input, pre_grad);
}

AdamOptimizer::AdamOptimizer(AdamConfig config) : config_(config) {
  require(config_.learning_rate > 0.0, ErrorKind::Config, "learning rate must be positive");
  require(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 &&
              config_.beta2 < 1.0,
          ErrorKind::Config, "Adam betas must lie in [0, 1)");
  require(config_.epsilon > 0.0, ErrorKind::Config, "Adam epsilon must be positive");
}

void AdamOptimizer::step(std::span<const ParamBlock> blocks) {
  if (m_.empty()) {
    for (const auto& b : blocks) {
      m_.emplace_back(b.params.size(), 0.0);
      v_.emplace_back(b.params.size(), 0.0);
    }
  }
  require(blocks.size() == m_.size(), ErrorKind::Shape, "Adam block count changed");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    require(b.params.size() == m_[i].size() && b.grads.size() == b.params.size(),
            ErrorKind::Shape, "Adam block '" + b.name + "' shape mismatch");
    for (double g : b.grads)
      if (std::isnan(g)) fail(ErrorKind::Numeric, "NaN gradient in parameter block '" + b.name + "'");
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < b.params.size(); ++j) {
      const double g = b.grads[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      b.params[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport grad_check(const std::function<double()>& loss,
                           std::span<const GradCheckBlock> blocks, GradCheckOptions options) {
  const double base = loss();
  require(std::isfinite(base), ErrorKind::Check, "loss is not finite at the check point");
  require(loss() == base, ErrorKind::Check, "loss is not deterministic between evaluations");

  GradCheckReport report;
  for (const auto& block : blocks) {
    require(block.params.size() == block.analytic.size(), ErrorKind::Shape,
            "gradient block '" + block.name + "' size mismatch");
    GradCheckReport::Entry entry{block.name, 0.0, 0};
    for (std::size_t i = 0; i < block.params.size(); ++i) {
      const double saved = block.params[i];
      block.params[i] = saved + options.step;
      const double up = loss();
      block.params[i] = saved - options.step;
      const double down = loss();
      block.params[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = relative_error(block.analytic[i], numeric, options.floor);
      if (err > entry.max_relative_error) {
        entry.max_relative_error = err;
        entry.worst_index = i;
      }
    }
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.blocks.push_back(std::move(entry));
  }
  return report;
}

}  // namespace evt
