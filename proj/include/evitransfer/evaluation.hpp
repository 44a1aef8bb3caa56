#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace evt {

struct ClusterMapping {
  std::map<int, int> cluster_to_label;
  std::vector<int> predictions;  // relabelled cluster ids
  double accuracy = 0.0;
};

/// Best cluster -> label bijection by accuracy. When several bijections tie,
/// the one that is lexicographically smallest in sorted-cluster order wins,
/// so cluster 0 -> label 0 is preferred.
ClusterMapping map_clusters_to_labels(std::span<const int> cluster_ids,
                                      std::span<const int> true_labels);

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when a zero denominator forced a metric to 0.
  bool degenerate = false;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Confusion confusion_counts(std::span<const int> predictions, std::span<const int> true_labels,
                           int positive_class);

Prf1 prf1(std::span<const int> predictions, std::span<const int> true_labels, int positive_class);

/// Pooled over all classes present in either vector.
Prf1 micro_prf1(std::span<const int> predictions, std::span<const int> true_labels);

struct DetectionReport {
  Prf1 anomalous;  // positive class = 1
  Prf1 micro;
  Confusion confusion;
  std::map<int, int> cluster_to_label;
  std::size_t samples = 0;
};

/// Aligns clusters to labels, then scores the anomalous class (label 1) and
/// the micro average.
DetectionReport evaluate_detection(std::span<const int> cluster_ids,
                                   std::span<const int> true_labels);

}  // namespace evt
