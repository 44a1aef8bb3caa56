#include "evitransfer/resampling.hpp"

#include <algorithm>
#include <cmath>

#include "evitransfer/error.hpp"
#include "evitransfer/random.hpp"

namespace evt {

LabeledDataset::LabeledDataset(Matrix f, std::vector<int> l)
    : features(std::move(f)), labels(std::move(l)) {
  origin.resize(labels.size());
  for (std::size_t i = 0; i < origin.size(); ++i) origin[i] = static_cast<std::ptrdiff_t>(i);
  validate();
}

std::map<int, std::size_t> LabeledDataset::class_counts() const {
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  return counts;
}

LabeledDataset LabeledDataset::select_rows(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.features = features.select_rows(indices);
  for (auto i : indices) {
    out.labels.push_back(labels[i]);
    out.origin.push_back(origin[i]);
  }
  return out;
}

void LabeledDataset::validate() const {
  require(labels.size() == features.rows(), ErrorKind::Shape,
          "label count " + std::to_string(labels.size()) + " != feature rows " +
              std::to_string(features.rows()));
  require(origin.size() == labels.size(), ErrorKind::Shape, "row origin length mismatch");
}

ClassRoles class_roles(const LabeledDataset& ds) {
  ds.validate();
  const auto counts = ds.class_counts();
  require(counts.size() >= 2, ErrorKind::Count, "resampling needs at least two classes");
  ClassRoles roles{counts.begin()->first, counts.begin()->first};
  for (const auto& [label, n] : counts) {
    if (n < counts.at(roles.minority)) roles.minority = label;
    if (n > counts.at(roles.majority)) roles.majority = label;
  }
  if (roles.minority == roles.majority) {
    // Balanced: keep the lower label as minority, the next as majority.
    roles.majority = std::next(counts.begin())->first;
  }
  return roles;
}

std::vector<std::size_t> nearest_neighbors(const Matrix& points,
                                           std::span<const std::size_t> candidates,
                                           std::span<const double> query, std::size_t k,
                                           std::ptrdiff_t exclude) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(candidates.size());
  for (auto c : candidates) {
    if (static_cast<std::ptrdiff_t>(c) == exclude) continue;
    dist.emplace_back(squared_distance(points.row(c), query), c);
  }
  require(dist.size() >= k, ErrorKind::Count,
          "need " + std::to_string(k) + " neighbors, only " + std::to_string(dist.size()) +
              " candidates");
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(dist[i].second);
  return out;
}

LabeledDataset smote_oversample(const LabeledDataset& ds, const SmoteConfig& cfg,
                                std::uint64_t seed) {
  const auto roles = class_roles(ds);
  require(cfg.k_neighbors >= 1, ErrorKind::Config, "SMOTE k_neighbors must be >= 1");
  require(cfg.target_ratio > 0.0, ErrorKind::Config, "SMOTE target ratio must be positive");
  const auto counts = ds.class_counts();
  std::vector<std::size_t> minority;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (ds.labels[i] == roles.minority) minority.push_back(i);
  require(minority.size() >= cfg.k_neighbors + 1, ErrorKind::Count,
          "minority class has " + std::to_string(minority.size()) + " rows, SMOTE with k=" +
              std::to_string(cfg.k_neighbors) + " needs at least " +
              std::to_string(cfg.k_neighbors + 1));

  const auto target = static_cast<std::size_t>(
      std::llround(cfg.target_ratio * static_cast<double>(counts.at(roles.majority))));
  LabeledDataset out = ds;
  if (target <= minority.size()) return out;
  const std::size_t n_new = target - minority.size();

  std::vector<std::vector<std::size_t>> neighbors(minority.size());
  for (std::size_t i = 0; i < minority.size(); ++i)
    neighbors[i] = nearest_neighbors(ds.features, minority, ds.features.row(minority[i]),
                                     cfg.k_neighbors, static_cast<std::ptrdiff_t>(minority[i]));

  Rng rng(seed);
  const std::size_t d = ds.features.cols();
  std::vector<double> synth;
  synth.reserve(n_new * d);
  for (std::size_t s = 0; s < n_new; ++s) {
    // Cycle through minority rows so every row seeds a near-equal share.
    const std::size_t base = s % minority.size();
    const std::size_t nn = neighbors[base][rng.index(cfg.k_neighbors)];
    const double u = rng.uniform();
    auto a = ds.features.row(minority[base]);
    auto b = ds.features.row(nn);
    for (std::size_t c = 0; c < d; ++c) synth.push_back(a[c] + u * (b[c] - a[c]));
    out.labels.push_back(roles.minority);
    out.origin.push_back(-1);
  }
  out.features = vstack(ds.features, Matrix(n_new, d, std::move(synth)));
  return out;
}

LabeledDataset random_undersample(const LabeledDataset& ds, double target_ratio,
                                  std::uint64_t seed) {
  const auto roles = class_roles(ds);
  require(target_ratio > 0.0, ErrorKind::Config, "under-sampling ratio must be positive");
  const auto counts = ds.class_counts();
  const auto target = static_cast<std::size_t>(
      std::llround(target_ratio * static_cast<double>(counts.at(roles.minority))));
  std::vector<std::size_t> majority;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (ds.labels[i] == roles.majority) majority.push_back(i);
  require(target <= majority.size(), ErrorKind::Count,
          "under-sampling target " + std::to_string(target) + " exceeds " +
              std::to_string(majority.size()) + " majority rows");

  Rng rng(seed);
  rng.shuffle(majority);
  std::vector<bool> keep(ds.rows(), true);
  for (std::size_t i = target; i < majority.size(); ++i) keep[majority[i]] = false;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (keep[i]) rows.push_back(i);
  return ds.select_rows(rows);
}

namespace {

LabeledDataset enn_edit_class(const LabeledDataset& ds, const EnnConfig& cfg, int edited) {
  require(cfg.k >= 1, ErrorKind::Config, "ENN k must be >= 1");
  require(cfg.k < ds.rows(), ErrorKind::Count,
          "ENN k=" + std::to_string(cfg.k) + " needs more than " + std::to_string(ds.rows()) +
              " rows");
  const auto all = iota_indices(ds.rows());
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    if (ds.labels[i] != edited) {
      kept.push_back(i);
      continue;
    }
    const auto nn = nearest_neighbors(ds.features, all, ds.features.row(i), cfg.k,
                                      static_cast<std::ptrdiff_t>(i));
    std::map<int, std::size_t> votes;
    for (auto j : nn) ++votes[ds.labels[j]];
    // Vote ties are resolved in favour of the row's own label.
    std::size_t best = 0;
    for (const auto& [label, n] : votes) best = std::max(best, n);
    if (votes[ds.labels[i]] == best) kept.push_back(i);
  }
  return ds.select_rows(kept);
}

}  // namespace

LabeledDataset enn_edit(const LabeledDataset& ds, const EnnConfig& cfg) {
  return enn_edit_class(ds, cfg, class_roles(ds).majority);
}

LabeledDataset smoteenn(const LabeledDataset& ds, const SmoteConfig& smote_cfg,
                        const EnnConfig& enn_cfg, std::uint64_t seed) {
  // Over-sampling can balance the counts, so the edited class is fixed
  // from the input before SMOTE runs.
  const int majority = class_roles(ds).majority;
  return enn_edit_class(smote_oversample(ds, smote_cfg, seed), enn_cfg, majority);
}

}  // namespace evt
