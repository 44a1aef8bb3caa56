#include "evitransfer/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "evitransfer/error.hpp"
#include "evitransfer/random.hpp"

namespace evt {

namespace {

struct LloydRun {
  Matrix centroids;
  std::vector<int> assignments;
  double inertia = 0.0;
  std::vector<double> trace;
};

Matrix kmeanspp_seed(const Matrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows();
  Matrix centroids(k, x.cols());
  auto first = x.row(rng.index(n));
  std::copy(first.begin(), first.end(), centroids.row(0).begin());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(x.row(i), centroids.row(c - 1)));
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(n);
    }
    auto chosen = x.row(pick);
    std::copy(chosen.begin(), chosen.end(), centroids.row(c).begin());
  }
  return centroids;
}

double assign(const Matrix& x, const Matrix& centroids, std::vector<int>& out) {
  double inertia = 0.0;
  out.resize(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const double d = squared_distance(x.row(i), centroids.row(c));
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    out[i] = arg;
    inertia += best;
  }
  return inertia;
}

LloydRun lloyd(const Matrix& x, Matrix centroids, std::size_t max_iter) {
  LloydRun run;
  run.inertia = assign(x, centroids, run.assignments);
  run.trace.push_back(run.inertia);
  for (std::size_t it = 0; it < max_iter; ++it) {
    Matrix sums(centroids.rows(), x.cols());
    std::vector<std::size_t> counts(centroids.rows(), 0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto dst = sums.row(static_cast<std::size_t>(run.assignments[i]));
      auto src = x.row(i);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
      ++counts[static_cast<std::size_t>(run.assignments[i])];
    }
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      auto dst = centroids.row(c);
      auto src = sums.row(c);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
    }
    std::vector<int> next;
    const double inertia = assign(x, centroids, next);
    run.trace.push_back(inertia);
    const bool stable = next == run.assignments;
    run.assignments = std::move(next);
    run.inertia = inertia;
    if (stable) break;
  }
  run.centroids = std::move(centroids);
  return run;
}

// Hartigan's single-point transfers: move a point to another cluster whenever
// the exact change in inertia is negative. Lloyd fixed points can still admit
// such moves, so this only ever lowers the objective.
void hartigan_refine(const Matrix& x, LloydRun& run, std::size_t max_passes) {
  const std::size_t k = run.centroids.rows();
  const std::size_t dim = x.cols();
  std::vector<std::size_t> counts(k, 0);
  Matrix means(k, dim);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto c = static_cast<std::size_t>(run.assignments[i]);
    ++counts[c];
    auto dst = means.row(c);
    auto src = x.row(i);
    for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
  }
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c] > 0)
      for (double& v : means.row(c)) v /= static_cast<double>(counts[c]);
    else
      std::copy(run.centroids.row(c).begin(), run.centroids.row(c).end(), means.row(c).begin());

  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto from = static_cast<std::size_t>(run.assignments[i]);
      if (counts[from] <= 1) continue;
      const double nf = static_cast<double>(counts[from]);
      const double removal = nf / (nf - 1.0) * squared_distance(x.row(i), means.row(from));
      double best_gain = 0.0;
      std::size_t best_to = from;
      for (std::size_t to = 0; to < k; ++to) {
        if (to == from) continue;
        const double nt = static_cast<double>(counts[to]);
        const double addition = nt / (nt + 1.0) * squared_distance(x.row(i), means.row(to));
        const double gain = removal - addition;
        if (gain > best_gain + 1e-12 * (removal + addition)) {
          best_gain = gain;
          best_to = to;
        }
      }
      if (best_to == from) continue;
      auto src = x.row(i);
      auto mf = means.row(from);
      auto mt = means.row(best_to);
      const double nt = static_cast<double>(counts[best_to]);
      for (std::size_t j = 0; j < dim; ++j) {
        mf[j] = (mf[j] * nf - src[j]) / (nf - 1.0);
        mt[j] = (mt[j] * nt + src[j]) / (nt + 1.0);
      }
      --counts[from];
      ++counts[best_to];
      run.assignments[i] = static_cast<int>(best_to);
      moved = true;
    }
    if (!moved) break;
  }
  run.centroids = means;
  // Recompute the objective from scratch against the refined means.
  double inertia = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    inertia += squared_distance(x.row(i), means.row(static_cast<std::size_t>(run.assignments[i])));
  run.inertia = inertia;
  run.trace.push_back(inertia);
}

}  // namespace

KMeansModel kmeans_fit(const Matrix& latents, std::size_t k, std::uint64_t seed,
                       std::size_t n_init, std::size_t max_iter) {
  require(k >= 1, ErrorKind::Config, "k must be >= 1");
  require(n_init >= 1, ErrorKind::Config, "n_init must be >= 1");
  require(latents.rows() >= k, ErrorKind::Count,
          std::to_string(latents.rows()) + " points cannot form " + std::to_string(k) +
              " clusters");
  require(latents.all_finite(), ErrorKind::Numeric, "non-finite latent values");

  KMeansModel best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < n_init; ++r) {
    Rng rng(mix_seed(seed, r));
    auto run = lloyd(latents, kmeanspp_seed(latents, k, rng), max_iter);
    hartigan_refine(latents, run, max_iter);
    if (run.inertia < best.inertia) {
      best.centroids = std::move(run.centroids);
      best.inertia = run.inertia;
      best.assignments = std::move(run.assignments);
      best.inertia_trace = std::move(run.trace);
    }
  }
  best.k = k;
  best.seed = seed;
  return best;
}

std::vector<int> kmeans_predict(const KMeansModel& model, const Matrix& latents) {
  require(latents.cols() == model.centroids.cols(), ErrorKind::Shape,
          "latent width " + std::to_string(latents.cols()) + " does not match centroids " +
              std::to_string(model.centroids.cols()));
  std::vector<int> out;
  assign(latents, model.centroids, out);
  return out;
}

const char* to_string(Linkage linkage) {
  switch (linkage) {
    case Linkage::Ward: return "ward";
    case Linkage::Complete: return "complete";
    case Linkage::Average: return "average";
    case Linkage::Single: return "single";
  }
  return "?";
}

Linkage linkage_from_string(const std::string& name) {
  if (name == "ward") return Linkage::Ward;
  if (name == "complete") return Linkage::Complete;
  if (name == "average") return Linkage::Average;
  if (name == "single") return Linkage::Single;
  fail(ErrorKind::Config, "unknown linkage '" + name + "'");
}

AgglomerativeResult agglomerative_fit(const Matrix& latents, std::size_t n_clusters,
                                      Linkage linkage) {
  const std::size_t n = latents.rows();
  require(n_clusters >= 1, ErrorKind::Config, "n_clusters must be >= 1");
  require(n >= n_clusters, ErrorKind::Count,
          std::to_string(n) + " points cannot form " + std::to_string(n_clusters) + " clusters");

  // Ward works on squared distances, the others on Euclidean distances.
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d2 = squared_distance(latents.row(i), latents.row(j));
      dist[i * n + j] = dist[j * n + i] = linkage == Linkage::Ward ? d2 : std::sqrt(d2);
    }
  auto d = [&](std::size_t i, std::size_t j) -> double& { return dist[i * n + j]; };

  std::vector<bool> active(n, true);
  std::vector<std::size_t> size(n, 1);
  std::vector<std::size_t> chain;
  std::vector<MergeStep> merges;

  for (std::size_t remaining = n; remaining > 1; --remaining) {
    if (chain.empty()) {
      for (std::size_t i = 0; i < n; ++i)
        if (active[i]) {
          chain.push_back(i);
          break;
        }
    }
    std::size_t a = 0, b = 0;
    while (true) {
      a = chain.back();
      const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : n;
      double best = std::numeric_limits<double>::infinity();
      b = n;
      if (prev != n) {
        best = d(a, prev);
        b = prev;
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i] || i == a) continue;
        if (d(a, i) < best) {
          best = d(a, i);
          b = i;
        }
      }
      if (b == prev) break;
      chain.push_back(b);
    }
    chain.pop_back();
    chain.pop_back();
    if (a > b) std::swap(a, b);

    const double dab = d(a, b);
    const double na = static_cast<double>(size[a]);
    const double nb = static_cast<double>(size[b]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == a || k == b) continue;
      const double nk = static_cast<double>(size[k]);
      double updated = 0.0;
      switch (linkage) {
        case Linkage::Ward:
          updated = ((na + nk) * d(a, k) + (nb + nk) * d(b, k) - nk * dab) / (na + nb + nk);
          break;
        case Linkage::Complete: updated = std::max(d(a, k), d(b, k)); break;
        case Linkage::Average: updated = (na * d(a, k) + nb * d(b, k)) / (na + nb); break;
        case Linkage::Single: updated = std::min(d(a, k), d(b, k)); break;
      }
      d(a, k) = d(k, a) = updated;
    }
    active[b] = false;
    size[a] += size[b];
    merges.push_back({a, b, linkage == Linkage::Ward ? std::sqrt(dab) : dab, size[a]});
  }

  std::stable_sort(merges.begin(), merges.end(),
                   [](const MergeStep& x, const MergeStep& y) { return x.height < y.height; });

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t m = 0; m < n - n_clusters; ++m) {
    const auto ra = find(merges[m].left);
    const auto rb = find(merges[m].right);
    parent[std::max(ra, rb)] = std::min(ra, rb);
  }

  AgglomerativeResult result;
  result.linkage = linkage;
  result.n_clusters = n_clusters;
  result.merges = std::move(merges);
  result.labels.assign(n, -1);
  std::vector<int> id_of_root(n, -1);
  int next_id = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto root = find(i);
    if (id_of_root[root] < 0) id_of_root[root] = next_id++;
    result.labels[i] = id_of_root[root];
  }
  return result;
}

double ocsvm_objective(const Matrix& latents, std::span<const double> w, double rho, double nu) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < latents.rows(); ++i)
    hinge += std::max(0.0, rho - dot(w, latents.row(i)));
  return 0.5 * dot(w, w) - rho + hinge / (nu * static_cast<double>(latents.rows()));
}

namespace {

double optimal_offset(const Matrix& x, std::span<const double> w, double nu) {
  std::vector<double> s(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) s[i] = dot(w, x.row(i));
  std::sort(s.begin(), s.end());
  const auto m = std::min(static_cast<std::size_t>(std::floor(nu * static_cast<double>(s.size()))),
                          s.size() - 1);
  return s[m];
}

}  // namespace

OcsvmModel ocsvm_fit(const Matrix& latents, double nu, const OcsvmConfig& config) {
  require(nu > 0.0 && nu <= 1.0, ErrorKind::Config, "nu must lie in (0, 1]");
  require(latents.rows() > 0, ErrorKind::Count, "one-class SVM needs training points");
  require(latents.all_finite(), ErrorKind::Numeric, "non-finite latent values");
  const std::size_t n = latents.rows();
  const std::size_t dim = latents.cols();

  std::vector<double> w(dim, 0.0);
  double mean_sq_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = latents.row(i);
    for (std::size_t j = 0; j < dim; ++j) w[j] += row[j] / static_cast<double>(n);
    mean_sq_norm += dot(row, row) / static_cast<double>(n);
  }
  double rho = optimal_offset(latents, w, nu);
  const double scale = 1.0 / (nu * static_cast<double>(n));
  const double step0 = config.initial_step / std::max(1.0, mean_sq_norm);

  std::vector<double> best_w = w;
  double best_obj = ocsvm_objective(latents, w, rho, nu);
  std::vector<double> gw(dim);
  for (std::size_t t = 0; t < config.iterations; ++t) {
    gw = w;
    double grho = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto row = latents.row(i);
      if (dot(w, row) < rho) {
        for (std::size_t j = 0; j < dim; ++j) gw[j] -= scale * row[j];
        grho += scale;
      }
    }
    const double step = step0 / std::sqrt(static_cast<double>(t + 1));
    for (std::size_t j = 0; j < dim; ++j) w[j] -= step * gw[j];
    rho -= step * grho;
    const double obj = ocsvm_objective(latents, w, rho, nu);
    if (!std::isfinite(obj)) fail(ErrorKind::Numeric, "one-class SVM diverged at iteration " + std::to_string(t));
    if (obj < best_obj) {
      best_obj = obj;
      best_w = w;
    }
  }

  require(std::sqrt(dot(best_w, best_w)) > 1e-12, ErrorKind::Numeric,
          "one-class SVM collapsed to a zero weight vector");
  OcsvmModel model;
  model.w = std::move(best_w);
  model.nu = nu;
  model.rho = optimal_offset(latents, model.w, nu);
  model.objective = ocsvm_objective(latents, model.w, model.rho, nu);
  return model;
}

OcsvmScores ocsvm_score(const OcsvmModel& model, const Matrix& latents) {
  require(latents.cols() == model.w.size(), ErrorKind::Shape,
          "latent width " + std::to_string(latents.cols()) + " does not match model " +
              std::to_string(model.w.size()));
  OcsvmScores out;
  for (std::size_t i = 0; i < latents.rows(); ++i) {
    const double s = dot(model.w, latents.row(i)) - model.rho;
    out.scores.push_back(s);
    out.anomalous.push_back(s < 0.0 ? 1 : 0);
  }
  return out;
}

}  // namespace evt
