#include "evitransfer/losses.hpp"

#include <cmath>
#include <string>

#include "evitransfer/error.hpp"

namespace evt {

namespace {

struct Window {
  std::size_t begin;
  std::size_t length;
};

std::vector<Window> windows_for(std::size_t n, const SsimConfig& cfg) {
  if (cfg.mode == SsimMode::Global || cfg.window_size >= n) return {{0, n}};
  std::vector<Window> out;
  for (std::size_t b = 0; b < n; b += cfg.window_size)
    out.push_back({b, std::min(cfg.window_size, n - b)});
  if (out.size() > 1 && out.back().length < 2) {
    out[out.size() - 2].length += out.back().length;
    out.pop_back();
  }
  return out;
}

// SSIM on one window, accumulating scale * dSSIM/dy into grad when given.
double window_ssim(std::span<const double> x, std::span<const double> y, double c1, double c2,
                   std::span<double> grad, double scale) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cxy += dx * dy;
  }
  vx /= n;
  vy /= n;
  cxy /= n;

  const double a1 = 2.0 * mx * my + c1;
  const double a2 = 2.0 * cxy + c2;
  const double b1 = mx * mx + my * my + c1;
  const double b2 = vx + vy + c2;
  const double s = (a1 * a2) / (b1 * b2);

  if (!grad.empty()) {
    // dS/dy_i = [a2 dA1 + a1 dA2] / (b1 b2) - S (dB1 / b1 + dB2 / b2), with
    // dA1 = 2 mx / n, dA2 = 2 (x_i - mx) / n, dB1 = 2 my / n, dB2 = 2 (y_i - my) / n.
    const double denom = b1 * b2;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double da1 = 2.0 * mx / n;
      const double da2 = 2.0 * (x[i] - mx) / n;
      const double db1 = 2.0 * my / n;
      const double db2 = 2.0 * (y[i] - my) / n;
      const double d = (a2 * da1 + a1 * da2) / denom - s * (db1 / b1 + db2 / b2);
      grad[i] += scale * d;
    }
  }
  return s;
}

double ssim_impl(std::span<const double> x, std::span<const double> y, const SsimConfig& cfg,
                 std::span<double> grad) {
  require(x.size() == y.size(), ErrorKind::Shape,
          "ssim length mismatch " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  require(!x.empty(), ErrorKind::Shape, "ssim of empty vectors");
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  const auto wins = windows_for(x.size(), cfg);
  const double scale = 1.0 / static_cast<double>(wins.size());
  double total = 0.0;
  for (const auto& w : wins) {
    total += window_ssim(x.subspan(w.begin, w.length), y.subspan(w.begin, w.length), cfg.c1,
                         cfg.c2, grad.empty() ? grad : grad.subspan(w.begin, w.length), scale);
  }
  return total * scale;
}

}  // namespace

SsimConfig SsimConfig::global(double dynamic_range) {
  SsimConfig cfg;
  cfg.dynamic_range = dynamic_range;
  cfg.c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  cfg.c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  return cfg;
}

SsimConfig SsimConfig::windowed(std::size_t window_size, double dynamic_range) {
  SsimConfig cfg = global(dynamic_range);
  cfg.mode = SsimMode::Windowed;
  cfg.window_size = window_size;
  cfg.validate();
  return cfg;
}

void SsimConfig::validate() const {
  require(dynamic_range > 0.0, ErrorKind::Config, "SSIM dynamic range must be positive");
  require(c1 > 0.0 && c2 > 0.0, ErrorKind::Config, "SSIM stabilizers must be positive");
  if (mode == SsimMode::Windowed)
    require(window_size >= 2, ErrorKind::Config, "SSIM window size must be at least 2");
}

double ssim(std::span<const double> x, std::span<const double> x_prime, const SsimConfig& cfg) {
  return ssim_impl(x, x_prime, cfg, {});
}

double ssim_with_grad(std::span<const double> x, std::span<const double> x_prime,
                      const SsimConfig& cfg, std::span<double> grad_x_prime) {
  require(grad_x_prime.size() == x_prime.size(), ErrorKind::Shape, "ssim gradient buffer size");
  return ssim_impl(x, x_prime, cfg, grad_x_prime);
}

LossAndGrad ssim_loss(const Matrix& batch_x, const Matrix& batch_x_prime, const SsimConfig& cfg) {
  require(batch_x.rows() > 0, ErrorKind::Count, "empty batch");
  require(batch_x.rows() == batch_x_prime.rows() && batch_x.cols() == batch_x_prime.cols(),
          ErrorKind::Shape, "ssim_loss batch shapes differ");
  const double n = static_cast<double>(batch_x.rows());
  LossAndGrad out{0.0, Matrix(batch_x.rows(), batch_x.cols())};
  for (std::size_t r = 0; r < batch_x.rows(); ++r) {
    auto g = out.grad.row(r);
    const double s = ssim_impl(batch_x.row(r), batch_x_prime.row(r), cfg, g);
    out.loss += 1.0 - s;
    for (double& v : g) v = -v / n;
  }
  out.loss /= n;
  return out;
}

namespace {

void check_ce_shapes(const Matrix& evidence, const Matrix& q) {
  require(evidence.rows() == q.rows(), ErrorKind::Shape, "cross-entropy row mismatch");
  require(evidence.cols() == q.cols(), ErrorKind::Shape,
          "cross-entropy class count " + std::to_string(evidence.cols()) + " vs head width " +
              std::to_string(q.cols()));
  require(evidence.rows() > 0, ErrorKind::Count, "empty batch");
}

}  // namespace

std::vector<double> cross_entropy_rows(const Matrix& evidence, const Matrix& head_output) {
  check_ce_shapes(evidence, head_output);
  std::vector<double> out(evidence.rows(), 0.0);
  for (std::size_t r = 0; r < evidence.rows(); ++r) {
    auto v = evidence.row(r);
    auto q = head_output.row(r);
    double h = 0.0;
    for (std::size_t c = 0; c < v.size(); ++c)
      if (v[c] != 0.0) h -= v[c] * std::log(q[c] + kLogClip);
    out[r] = h;
  }
  return out;
}

LossAndGrad softmax_cross_entropy(const Matrix& evidence, const Matrix& head_output) {
  const auto rows = cross_entropy_rows(evidence, head_output);
  const double n = static_cast<double>(evidence.rows());
  LossAndGrad out{0.0, Matrix(evidence.rows(), evidence.cols())};
  for (double h : rows) out.loss += h;
  out.loss /= n;
  auto g = out.grad.values();
  auto q = head_output.values();
  auto v = evidence.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (q[i] - v[i]) / n;
  return out;
}

void TransferConfig::validate() const {
  require(evidence_count >= 1, ErrorKind::Config, "evidence transfer needs at least one source");
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorKind::Config, "lambda must be >= 0");
}

double evidence_transfer_loss(double ae_loss, std::span<const double> ce_losses,
                              const TransferConfig& cfg) {
  cfg.validate();
  require(ce_losses.size() == cfg.evidence_count, ErrorKind::Config,
          "expected " + std::to_string(cfg.evidence_count) + " cross-entropy terms, got " +
              std::to_string(ce_losses.size()));
  double sum = 0.0;
  for (double h : ce_losses) sum += h;
  return ae_loss + cfg.lambda * (sum / static_cast<double>(cfg.evidence_count));
}

}  // namespace evt
