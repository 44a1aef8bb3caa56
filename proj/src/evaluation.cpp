#include "evitransfer/evaluation.hpp"

#include <algorithm>
#include <set>

#include "evitransfer/error.hpp"

namespace evt {

namespace {

void check_aligned(std::span<const int> a, std::span<const int> b) {
  require(a.size() == b.size(), ErrorKind::Shape,
          "prediction/label length mismatch " + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()));
  require(!a.empty(), ErrorKind::Count, "cannot score an empty prediction vector");
}

double safe_ratio(std::size_t num, std::size_t den, bool& degenerate) {
  if (den == 0) {
    degenerate = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

Prf1 from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  Prf1 out;
  out.precision = safe_ratio(tp, tp + fp, out.degenerate);
  out.recall = safe_ratio(tp, tp + fn, out.degenerate);
  const double sum = out.precision + out.recall;
  if (out.precision == out.recall) {
    // The harmonic mean of equal values is that value; computing it keeps
    // rounding noise out of the micro identity P = R = F1.
    out.f1 = out.precision;
    if (sum == 0.0) out.degenerate = true;
  } else if (sum > 0.0) {
    out.f1 = 2.0 * out.precision * out.recall / sum;
  } else {
    out.f1 = 0.0;
    out.degenerate = true;
  }
  return out;
}

}  // namespace

ClusterMapping map_clusters_to_labels(std::span<const int> cluster_ids,
                                      std::span<const int> true_labels) {
  check_aligned(cluster_ids, true_labels);
  const std::set<int> cluster_set(cluster_ids.begin(), cluster_ids.end());
  std::set<int> label_set(true_labels.begin(), true_labels.end());
  const std::vector<int> clusters(cluster_set.begin(), cluster_set.end());
  std::vector<int> labels(label_set.begin(), label_set.end());
  // A detector may leave one side empty (e.g. no anomalies flagged); the
  // missing label values are still valid mapping targets.
  require(clusters.size() <= 8, ErrorKind::Mapping, "too many clusters to enumerate bijections");
  if (clusters.size() > labels.size()) {
    for (int candidate = 0; labels.size() < clusters.size(); ++candidate)
      if (label_set.insert(candidate).second) labels.assign(label_set.begin(), label_set.end());
  }
  require(clusters.size() <= labels.size(), ErrorKind::Mapping,
          std::to_string(clusters.size()) + " clusters cannot map onto " +
              std::to_string(labels.size()) + " labels");

  // Enumerate injective assignments: permutations of the label list, using
  // the first |clusters| entries.
  std::vector<int> perm = labels;
  std::sort(perm.begin(), perm.end());
  ClusterMapping best;
  best.accuracy = -1.0;
  std::set<std::vector<int>> seen;
  do {
    std::vector<int> head(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(clusters.size()));
    if (!seen.insert(head).second) continue;
    std::map<int, int> mapping;
    for (std::size_t i = 0; i < clusters.size(); ++i) mapping[clusters[i]] = head[i];
    std::size_t correct = 0;
    for (std::size_t i = 0; i < cluster_ids.size(); ++i)
      correct += mapping[cluster_ids[i]] == true_labels[i];
    const double acc = static_cast<double>(correct) / static_cast<double>(cluster_ids.size());
    if (acc > best.accuracy) {
      best.accuracy = acc;
      best.cluster_to_label = std::move(mapping);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  best.predictions.reserve(cluster_ids.size());
  for (int c : cluster_ids) best.predictions.push_back(best.cluster_to_label.at(c));
  return best;
}

Confusion confusion_counts(std::span<const int> predictions, std::span<const int> true_labels,
                           int positive_class) {
  check_aligned(predictions, true_labels);
  Confusion c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool p = predictions[i] == positive_class;
    const bool t = true_labels[i] == positive_class;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Prf1 prf1(std::span<const int> predictions, std::span<const int> true_labels, int positive_class) {
  const auto c = confusion_counts(predictions, true_labels, positive_class);
  return from_counts(c.tp, c.fp, c.fn);
}

Prf1 micro_prf1(std::span<const int> predictions, std::span<const int> true_labels) {
  check_aligned(predictions, true_labels);
  std::set<int> classes(predictions.begin(), predictions.end());
  classes.insert(true_labels.begin(), true_labels.end());
  std::size_t tp = 0, fp = 0, fn = 0;
  for (int cls : classes) {
    const auto c = confusion_counts(predictions, true_labels, cls);
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  return from_counts(tp, fp, fn);
}

DetectionReport evaluate_detection(std::span<const int> cluster_ids,
                                   std::span<const int> true_labels) {
  const auto mapping = map_clusters_to_labels(cluster_ids, true_labels);
  DetectionReport report;
  report.cluster_to_label = mapping.cluster_to_label;
  report.anomalous = prf1(mapping.predictions, true_labels, 1);
  report.micro = micro_prf1(mapping.predictions, true_labels);
  report.confusion = confusion_counts(mapping.predictions, true_labels, 1);
  report.samples = true_labels.size();
  return report;
}

}  // namespace evt
