#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "evitransfer/tensor.hpp"

namespace evt {

struct KMeansModel {
  Matrix centroids;  // k x dim
  std::size_t k = 0;
  double inertia = 0.0;
  std::uint64_t seed = 0;
  std::vector<int> assignments;       // fit-time cluster of each training row
  std::vector<double> inertia_trace;  // per Lloyd iteration of the winning restart
};

/// Lloyd's algorithm with k-means++ seeding; the best of `n_init` restarts by
/// inertia is kept (earliest restart wins ties).
KMeansModel kmeans_fit(const Matrix& latents, std::size_t k, std::uint64_t seed,
                       std::size_t n_init = 10, std::size_t max_iter = 300);

/// Nearest centroid; ties go to the lower cluster id.
std::vector<int> kmeans_predict(const KMeansModel& model, const Matrix& latents);

enum class Linkage { Ward, Complete, Average, Single };

const char* to_string(Linkage linkage);
Linkage linkage_from_string(const std::string& name);

struct MergeStep {
  std::size_t left;   // representative row of the first cluster
  std::size_t right;  // representative row of the second cluster
  double height;
  std::size_t size;   // rows in the merged cluster
};

struct AgglomerativeResult {
  std::vector<int> labels;  // cluster ids numbered by first appearance
  std::size_t n_clusters = 0;
  Linkage linkage = Linkage::Ward;
  std::vector<MergeStep> merges;  // full dendrogram, ascending height
};

/// Bottom-up merging from singletons (nearest-neighbour chain over the
/// Lance-Williams updates), cut where `n_clusters` clusters remain.
AgglomerativeResult agglomerative_fit(const Matrix& latents, std::size_t n_clusters,
                                      Linkage linkage = Linkage::Ward);

struct OcsvmConfig {
  std::size_t iterations = 5000;
  double initial_step = 0.5;
};

struct OcsvmModel {
  std::vector<double> w;
  double rho = 0.0;
  double nu = 0.5;
  double objective = 0.0;
};

/// Linear one-class SVM: min_{w,rho} 1/2 |w|^2 - rho + 1/(nu N) sum max(0, rho - w.x).
/// Solved by subgradient descent with a decaying step; the returned offset is
/// the exact minimiser for the returned w.
OcsvmModel ocsvm_fit(const Matrix& latents, double nu, const OcsvmConfig& config = {});

struct OcsvmScores {
  std::vector<double> scores;  // w.x - rho
  std::vector<int> anomalous;  // 1 iff score < 0
};

OcsvmScores ocsvm_score(const OcsvmModel& model, const Matrix& latents);

double ocsvm_objective(const Matrix& latents, std::span<const double> w, double rho, double nu);

}  // namespace evt
