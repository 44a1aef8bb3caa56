#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "evitransfer/tensor.hpp"

namespace evt {

struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;
  // Row origin: index into the source dataset, or -1 for synthetic rows.
  std::vector<std::ptrdiff_t> origin;

  LabeledDataset() = default;
  LabeledDataset(Matrix features, std::vector<int> labels);

  std::size_t rows() const noexcept { return labels.size(); }
  std::map<int, std::size_t> class_counts() const;
  LabeledDataset select_rows(std::span<const std::size_t> indices) const;
  void validate() const;
};

struct ClassRoles {
  int minority;
  int majority;
};

/// Smallest and largest classes; ties go to the lower label. Requires two classes.
ClassRoles class_roles(const LabeledDataset& ds);

struct SmoteConfig {
  std::size_t k_neighbors = 5;
  double target_ratio = 1.0;  // minority count after sampling / majority count
};

struct EnnConfig {
  std::size_t k = 3;
};

/// Synthesises minority rows on segments between a minority row and one of
/// its k nearest minority neighbours. Synthetic rows are appended.
LabeledDataset smote_oversample(const LabeledDataset& ds, const SmoteConfig& cfg,
                                std::uint64_t seed);

/// Keeps target_ratio * minority majority rows, drawn without replacement.
/// Row order of the kept rows follows the input order.
LabeledDataset random_undersample(const LabeledDataset& ds, double target_ratio,
                                  std::uint64_t seed);

/// Wilson editing restricted to the majority class: removes majority rows whose
/// label disagrees with the majority vote of their k nearest neighbours.
LabeledDataset enn_edit(const LabeledDataset& ds, const EnnConfig& cfg);

LabeledDataset smoteenn(const LabeledDataset& ds, const SmoteConfig& smote_cfg,
                        const EnnConfig& enn_cfg, std::uint64_t seed);

/// Indices of the k nearest rows to `query` among `candidates` (Euclidean),
/// ties broken by lower index. `exclude` is skipped when present.
std::vector<std::size_t> nearest_neighbors(const Matrix& points,
                                           std::span<const std::size_t> candidates,
                                           std::span<const double> query, std::size_t k,
                                           std::ptrdiff_t exclude = -1);

}  // namespace evt
