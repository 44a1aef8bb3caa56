// Reference computations used by the tests. These are written directly from
// the defining formulas and share no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), Vec(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.front().size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

inline double mean(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Two-pass population statistics.
inline double ssim(const Vec& x, const Vec& y, double c1, double c2) {
  const double mx = mean(x), my = mean(y);
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cxy += (x[i] - mx) * (y[i] - my);
  }
  const double n = static_cast<double>(x.size());
  vx /= n;
  vy /= n;
  cxy /= n;
  return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

inline double cross_entropy(const Vec& v, const Vec& q) {
  double h = 0.0;
  for (std::size_t c = 0; c < v.size(); ++c) h -= v[c] * std::log(q[c] + 1e-12);
  return h;
}

inline Vec softmax(const Vec& z) {
  const double m = *std::max_element(z.begin(), z.end());
  Vec e(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (e[i] = std::exp(z[i] - m));
  for (double& v : e) v /= s;
  return e;
}

// Fourth-order central difference of f at x along coordinate i.
inline double derivative(const std::function<double(const Vec&)>& f, Vec x, std::size_t i,
                         double h = 1e-4) {
  const double x0 = x[i];
  auto at = [&](double d) {
    x[i] = x0 + d;
    return f(x);
  };
  return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
}

inline double sq_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Minimum within-cluster sum of squares over every split into two non-empty parts.
inline double best_two_partition_inertia(const Mat& points) {
  const std::size_t n = points.size();
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
    if (mask & 1u) continue;  // each split once
    double total = 0.0;
    for (int side = 0; side < 2; ++side) {
      Vec centroid(points.front().size(), 0.0);
      std::size_t count = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (((mask >> i) & 1u) == static_cast<unsigned>(side)) {
          for (std::size_t d = 0; d < centroid.size(); ++d) centroid[d] += points[i][d];
          ++count;
        }
      for (double& c : centroid) c /= static_cast<double>(count);
      for (std::size_t i = 0; i < n; ++i)
        if (((mask >> i) & 1u) == static_cast<unsigned>(side)) total += sq_dist(points[i], centroid);
    }
    best = std::min(best, total);
  }
  return best;
}

// Multiclass perceptron-free check: L2-regularised logistic regression by
// gradient descent, returning training accuracy for binary labels.
inline double logistic_accuracy(const Mat& x, const std::vector<int>& y, int epochs = 2000,
                                double lr = 0.5) {
  const std::size_t d = x.front().size();
  Vec mu(d, 0.0), sd(d, 0.0);
  for (const auto& r : x)
    for (std::size_t j = 0; j < d; ++j) mu[j] += r[j] / static_cast<double>(x.size());
  for (const auto& r : x)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (r[j] - mu[j]) * (r[j] - mu[j]);
  for (double& s : sd) s = std::sqrt(s / static_cast<double>(x.size())) + 1e-12;
  Mat z = x;
  for (auto& r : z)
    for (std::size_t j = 0; j < d; ++j) r[j] = (r[j] - mu[j]) / sd[j];
  Vec w(d, 0.0);
  double b = 0.0;
  for (int e = 0; e < epochs; ++e) {
    Vec gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      double s = b;
      for (std::size_t j = 0; j < d; ++j) s += w[j] * z[i][j];
      const double p = 1.0 / (1.0 + std::exp(-s));
      const double g = p - y[i];
      for (std::size_t j = 0; j < d; ++j) gw[j] += g * z[i][j];
      gb += g;
    }
    for (std::size_t j = 0; j < d; ++j) w[j] -= lr * gw[j] / static_cast<double>(z.size());
    b -= lr * gb / static_cast<double>(z.size());
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double s = b;
    for (std::size_t j = 0; j < d; ++j) s += w[j] * z[i][j];
    correct += (s >= 0.0 ? 1 : 0) == y[i];
  }
  return static_cast<double>(correct) / static_cast<double>(z.size());
}

}  // namespace oracle
