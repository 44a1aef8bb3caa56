#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evitransfer/autoencoder.hpp"
#include "evitransfer/resampling.hpp"
#include "evitransfer/tensor.hpp"

namespace evt {

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;
using Day = std::chrono::sys_days;

inline constexpr Timestamp kSampleStep = 6 * 3600;
inline constexpr Timestamp kSecondsPerDay = 24 * 3600;

Day day_of(Timestamp t);
Timestamp start_of(Day d);
std::string format_day(Day d);
/// Parses YYYY-MM-DD; nullopt when malformed or not a calendar date.
std::optional<Day> parse_day(const std::string& text);

/// Per-timestamp feature vectors. `values` is min-max normalised per feature
/// to [0, 1]; `raw` keeps the values as loaded so saving round-trips exactly.
struct FeatureMatrix {
  Matrix values;
  Matrix raw;
  std::vector<double> feature_min;
  std::vector<double> feature_max;
  std::vector<Timestamp> timestamps;

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t feature_dim() const noexcept { return values.cols(); }
  void validate() const;
};

FeatureMatrix make_feature_matrix(Matrix raw, Timestamp start, Timestamp step = kSampleStep);

void save_feature_matrix(const FeatureMatrix& fm, const std::filesystem::path& path);
FeatureMatrix load_feature_matrix(const std::filesystem::path& path);

enum class EventType { Hailstorm, Flood, Tornado, Windstorm };

const char* to_string(EventType type);
EventType event_type_from_string(const std::string& name);

struct EventRecord {
  std::string name;
  EventType type = EventType::Flood;
  std::vector<std::string> affected_countries;
  std::optional<std::string> location;
  double latitude = 0.0;
  double longitude = 0.0;
  std::string description;
  std::vector<Day> dates;

  void validate() const;
  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct EventCatalog {
  std::vector<EventRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  friend bool operator==(const EventCatalog&, const EventCatalog&) = default;
};

/// Tab-separated; the first non-comment line is the header. Countries and
/// dates are ';'-separated lists, dates as YYYY-MM-DD.
EventCatalog parse_event_catalog(std::istream& in, const std::string& source = "<stream>");
EventCatalog ingest_event_catalog(const std::filesystem::path& path);
void write_event_catalog(const EventCatalog& catalog, const std::filesystem::path& path);

struct LabelExpansion {
  std::vector<int> labels;
  std::vector<std::string> warnings;  // event days outside the matrix coverage
};

/// Labels every 6-hour sample on an event day of `type` as 1.
LabelExpansion expand_event_labels(const EventCatalog& catalog, const FeatureMatrix& fm,
                                   EventType type);

/// 1 on every sample whose day carries an event of any of `types`.
LabelExpansion expand_event_labels(const EventCatalog& catalog, const FeatureMatrix& fm,
                                   std::span<const EventType> types);

struct RotationSpec {
  EventType ground_truth = EventType::Windstorm;
  std::vector<EventType> evidence_types;
  std::size_t nonsevere_sample_target = 500;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RotationExperiment {
  LabeledDataset dataset;    // labels: 1 on ground-truth event rows
  EvidenceSet evidence;      // one binary source per evidence type
  std::vector<std::size_t> rows;  // selected rows of the feature matrix, ascending
};

RotationExperiment build_rotation_experiment(const FeatureMatrix& fm, const EventCatalog& catalog,
                                             const RotationSpec& spec);

/// Desk-scale stand-in for re-analysis embeddings plus an event catalog.
/// Each day falls into one of two weather regimes that dominate the feature
/// variance; severe days add a weaker shared signature plus a smaller
/// type-specific one. `overlap` scales the regime structure: at 0 the severe
/// signature is the dominant structure, at 1 it is buried under the regimes.
struct SynthConfig {
  std::size_t days = 1000;
  std::map<EventType, std::size_t> event_days{
      {EventType::Flood, 20}, {EventType::Tornado, 20}, {EventType::Windstorm, 20}};
  std::size_t feature_dim = 32;
  double overlap = 1.0;
  double regime_amplitude = 3.0;
  double severe_shift = 1.0;
  double type_shift = 0.25;
  double noise = 1.0;
  Timestamp start = 283996800;  // 1979-01-01T00:00Z

  void validate() const;
};

struct SynthData {
  FeatureMatrix features;
  EventCatalog catalog;
};

SynthData synth_generate(const SynthConfig& config, std::uint64_t seed);

/// Projects latents onto their top two principal components and writes
/// "pc1\tpc2\tlabel" rows. Returns the N x 2 projection.
Matrix export_latent_projection(const Matrix& latents, std::span<const int> labels,
                                const std::filesystem::path& path);

Matrix principal_projection(const Matrix& latents, std::size_t components);

}  // namespace evt
