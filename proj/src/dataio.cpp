#include "evitransfer/dataio.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "evitransfer/error.hpp"
#include "evitransfer/random.hpp"

namespace evt {

Day day_of(Timestamp t) {
  const auto days = t >= 0 ? t / kSecondsPerDay : -((-t + kSecondsPerDay - 1) / kSecondsPerDay);
  return Day{std::chrono::days{days}};
}

Timestamp start_of(Day d) { return d.time_since_epoch().count() * kSecondsPerDay; }

std::string format_day(Day d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::optional<Day> parse_day(const std::string& text) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (text.size() != 10 || std::sscanf(text.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
    return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return Day{ymd};
}

void FeatureMatrix::validate() const {
  require(values.rows() == raw.rows() && values.cols() == raw.cols(), ErrorKind::Shape,
          "normalised and raw feature shapes differ");
  require(timestamps.size() == values.rows(), ErrorKind::Shape, "one timestamp per row required");
  require(feature_min.size() == values.cols() && feature_max.size() == values.cols(),
          ErrorKind::Shape, "normalisation constants do not match feature width");
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    require(timestamps[i] % kSampleStep == 0, ErrorKind::Data,
            "timestamp at row " + std::to_string(i) + " is not on the 6-hour grid");
    if (i > 0) {
      const auto gap = timestamps[i] - timestamps[i - 1];
      require(gap > 0, ErrorKind::Data,
              "timestamps not strictly increasing at row " + std::to_string(i));
      require(gap % kSampleStep == 0, ErrorKind::Data,
              "timestamp gap at row " + std::to_string(i) + " is not a multiple of 6 hours");
    }
  }
}

FeatureMatrix make_feature_matrix(Matrix raw, Timestamp start, Timestamp step) {
  require(step > 0, ErrorKind::Data, "timestamps must be strictly increasing (step > 0)");
  require(step % kSampleStep == 0, ErrorKind::Data,
          "timestamp step of " + std::to_string(step) + " s is not a multiple of 6 hours");
  require(start % kSampleStep == 0, ErrorKind::Data, "start timestamp is not on the 6-hour grid");
  for (std::size_t r = 0; r < raw.rows(); ++r)
    for (double v : raw.row(r))
      require(std::isfinite(v), ErrorKind::Data, "non-finite value at row " + std::to_string(r));

  FeatureMatrix fm;
  const std::size_t n = raw.rows(), d = raw.cols();
  fm.feature_min.assign(d, 0.0);
  fm.feature_max.assign(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    double lo = n ? raw(0, c) : 0.0, hi = lo;
    for (std::size_t r = 1; r < n; ++r) {
      lo = std::min(lo, raw(r, c));
      hi = std::max(hi, raw(r, c));
    }
    fm.feature_min[c] = lo;
    fm.feature_max[c] = hi;
  }
  fm.values = Matrix(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double range = fm.feature_max[c] - fm.feature_min[c];
      fm.values(r, c) = range > 0.0 ? (raw(r, c) - fm.feature_min[c]) / range : 0.0;
    }
  fm.raw = std::move(raw);
  fm.timestamps.resize(n);
  for (std::size_t i = 0; i < n; ++i) fm.timestamps[i] = start + static_cast<Timestamp>(i) * step;
  return fm;
}

namespace {
constexpr char kFeatureMagic[8] = {'E', 'V', 'T', 'F', 'E', 'A', 'T', '\0'};
constexpr std::uint32_t kFeatureVersion = 1;
}  // namespace

void save_feature_matrix(const FeatureMatrix& fm, const std::filesystem::path& path) {
  fm.validate();
  const Timestamp start = fm.timestamps.empty() ? 0 : fm.timestamps.front();
  const Timestamp step = fm.timestamps.size() > 1 ? fm.timestamps[1] - fm.timestamps[0] : kSampleStep;
  for (std::size_t i = 1; i < fm.timestamps.size(); ++i)
    require(fm.timestamps[i] - fm.timestamps[i - 1] == step, ErrorKind::Data,
            "feature files store regularly spaced rows only; gap at row " + std::to_string(i));
  detail::BinaryWriter w(path);
  w.put_bytes(kFeatureMagic);
  w.put<std::uint32_t>(kFeatureVersion);
  w.put<std::uint64_t>(fm.raw.rows());
  w.put<std::uint64_t>(fm.raw.cols());
  w.put<std::int64_t>(start);
  w.put<std::int64_t>(step);
  w.put_doubles(fm.raw.values());
  w.finish();
}

FeatureMatrix load_feature_matrix(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  char magic[8];
  r.get_bytes(magic, "magic");
  require(std::equal(std::begin(magic), std::end(magic), std::begin(kFeatureMagic)),
          ErrorKind::Data, "'" + path.string() + "': malformed header (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  require(version == kFeatureVersion, ErrorKind::Data,
          "'" + path.string() + "': unsupported version " + std::to_string(version));
  const auto n = r.get<std::uint64_t>("row count");
  const auto d = r.get<std::uint64_t>("feature count");
  require(d > 0 && n < (1ULL << 32) && d < (1ULL << 24), ErrorKind::Data,
          "'" + path.string() + "': malformed header (implausible shape)");
  const auto start = r.get<std::int64_t>("start timestamp");
  const auto step = r.get<std::int64_t>("step");
  Matrix raw(n, d);
  r.get_doubles(raw.values(), "feature values");
  require(r.at_end(), ErrorKind::Data, "'" + path.string() + "': trailing bytes after values");
  return make_feature_matrix(std::move(raw), start, step);
}

const char* to_string(EventType type) {
  switch (type) {
    case EventType::Hailstorm: return "hailstorm";
    case EventType::Flood: return "flood";
    case EventType::Tornado: return "tornado";
    case EventType::Windstorm: return "windstorm";
  }
  return "?";
}

EventType event_type_from_string(const std::string& name) {
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "hailstorm") return EventType::Hailstorm;
  if (lower == "flood") return EventType::Flood;
  if (lower == "tornado") return EventType::Tornado;
  if (lower == "windstorm") return EventType::Windstorm;
  fail(ErrorKind::Data, "unknown event type '" + name + "'");
}

void EventRecord::validate() const {
  require(!name.empty(), ErrorKind::Data, "event name is empty");
  require(!dates.empty(), ErrorKind::Data, "event '" + name + "' has no dates");
  require(latitude >= -90.0 && latitude <= 90.0, ErrorKind::Data,
          "event '" + name + "' latitude " + std::to_string(latitude) + " out of [-90, 90]");
  require(longitude >= -180.0 && longitude <= 180.0, ErrorKind::Data,
          "event '" + name + "' longitude " + std::to_string(longitude) + " out of [-180, 180]");
}

namespace {

const std::vector<std::string> kCatalogHeader{"name",      "event_type", "affected_countries",
                                              "location",  "latitude",   "longitude",
                                              "description", "dates"};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \r");
  return s.substr(b, e - b + 1);
}

double parse_coordinate(const std::string& text, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used > 0 && used == text.size() && std::isfinite(v), ErrorKind::Data,
          where + ": malformed coordinate '" + text + "'");
  return v;
}

std::string format_coordinate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.push_back(sep);
    out += items[i];
  }
  return out;
}

}  // namespace

EventCatalog parse_event_catalog(std::istream& in, const std::string& source) {
  EventCatalog catalog;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    const std::string where = source + " line " + std::to_string(line_no);
    auto fields = split(line, '\t');
    if (!header_seen) {
      for (auto& f : fields) f = trim(f);
      require(fields == kCatalogHeader, ErrorKind::Data, where + ": unexpected catalog header");
      header_seen = true;
      continue;
    }
    require(fields.size() == kCatalogHeader.size(), ErrorKind::Data,
            where + ": expected " + std::to_string(kCatalogHeader.size()) + " fields, found " +
                std::to_string(fields.size()));
    for (auto& f : fields) f = trim(f);
    for (std::size_t i : {0u, 1u, 2u, 4u, 5u, 7u})
      require(!fields[i].empty(), ErrorKind::Data,
              where + ": missing required field '" + kCatalogHeader[i] + "'");

    EventRecord rec;
    rec.name = fields[0];
    try {
      rec.type = event_type_from_string(fields[1]);
    } catch (const Error&) {
      fail(ErrorKind::Data, where + ": unknown event type '" + fields[1] + "'");
    }
    for (auto& c : split(fields[2], ';'))
      if (!trim(c).empty()) rec.affected_countries.push_back(trim(c));
    if (!fields[3].empty()) rec.location = fields[3];
    rec.latitude = parse_coordinate(fields[4], where);
    rec.longitude = parse_coordinate(fields[5], where);
    rec.description = fields[6];
    for (auto& d : split(fields[7], ';')) {
      const auto day = parse_day(trim(d));
      require(day.has_value(), ErrorKind::Data, where + ": malformed date '" + d + "'");
      rec.dates.push_back(*day);
    }
    try {
      rec.validate();
    } catch (const Error& e) {
      fail(ErrorKind::Data, where + ": " + e.detail());
    }
    catalog.records.push_back(std::move(rec));
  }
  require(header_seen, ErrorKind::Data, source + ": catalog has no header line");
  return catalog;
}

EventCatalog ingest_event_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open catalog '" + path.string() + "'");
  return parse_event_catalog(in, path.string());
}

void write_event_catalog(const EventCatalog& catalog, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write catalog '" + path.string() + "'");
  out << join(kCatalogHeader, '\t') << '\n';
  for (const auto& r : catalog.records) {
    r.validate();
    std::vector<std::string> dates;
    for (auto d : r.dates) dates.push_back(format_day(d));
    out << r.name << '\t' << to_string(r.type) << '\t' << join(r.affected_countries, ';') << '\t'
        << r.location.value_or("") << '\t' << format_coordinate(r.latitude) << '\t'
        << format_coordinate(r.longitude) << '\t' << r.description << '\t' << join(dates, ';')
        << '\n';
  }
  out.flush();
  require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
}

LabelExpansion expand_event_labels(const EventCatalog& catalog, const FeatureMatrix& fm,
                                   std::span<const EventType> types) {
  LabelExpansion out;
  out.labels.assign(fm.rows(), 0);
  if (fm.rows() == 0) return out;
  const std::set<EventType> wanted(types.begin(), types.end());
  std::set<Day> days;
  const Day first = day_of(fm.timestamps.front());
  const Day last = day_of(fm.timestamps.back());
  for (const auto& r : catalog.records) {
    if (!wanted.count(r.type)) continue;
    for (auto d : r.dates) {
      if (d < first || d > last) {
        out.warnings.push_back("event '" + r.name + "' on " + format_day(d) +
                               " lies outside the feature coverage");
        continue;
      }
      days.insert(d);
    }
  }
  for (std::size_t i = 0; i < fm.rows(); ++i)
    if (days.count(day_of(fm.timestamps[i]))) out.labels[i] = 1;
  return out;
}

LabelExpansion expand_event_labels(const EventCatalog& catalog, const FeatureMatrix& fm,
                                   EventType type) {
  const EventType one[] = {type};
  return expand_event_labels(catalog, fm, one);
}

void RotationSpec::validate() const {
  require(!evidence_types.empty(), ErrorKind::Config, "rotation needs at least one evidence type");
  require(std::find(evidence_types.begin(), evidence_types.end(), ground_truth) ==
              evidence_types.end(),
          ErrorKind::Config, "ground-truth type may not also serve as evidence");
  const std::set<EventType> unique(evidence_types.begin(), evidence_types.end());
  require(unique.size() == evidence_types.size(), ErrorKind::Config, "duplicate evidence types");
}

RotationExperiment build_rotation_experiment(const FeatureMatrix& fm, const EventCatalog& catalog,
                                             const RotationSpec& spec) {
  spec.validate();
  const auto truth = expand_event_labels(catalog, fm, spec.ground_truth).labels;
  require(std::count(truth.begin(), truth.end(), 1) > 0, ErrorKind::Config,
          std::string("ground-truth type '") + to_string(spec.ground_truth) +
              "' has no samples in the catalog coverage");
  std::vector<std::vector<int>> evidence_labels;
  for (auto t : spec.evidence_types)
    evidence_labels.push_back(expand_event_labels(catalog, fm, t).labels);

  const EventType all_types[] = {EventType::Hailstorm, EventType::Flood, EventType::Tornado,
                                 EventType::Windstorm};
  const auto any_event = expand_event_labels(catalog, fm, all_types).labels;

  std::vector<bool> selected(fm.rows(), false);
  std::vector<std::size_t> nonsevere;
  for (std::size_t i = 0; i < fm.rows(); ++i) {
    bool severe = truth[i] == 1;
    for (const auto& ev : evidence_labels) severe = severe || ev[i] == 1;
    if (severe) selected[i] = true;
    else if (any_event[i] == 0) nonsevere.push_back(i);
  }
  require(nonsevere.size() >= spec.nonsevere_sample_target, ErrorKind::Count,
          "only " + std::to_string(nonsevere.size()) + " non-severe samples for a target of " +
              std::to_string(spec.nonsevere_sample_target));
  Rng rng(spec.seed);
  rng.shuffle(nonsevere);
  for (std::size_t i = 0; i < spec.nonsevere_sample_target; ++i) selected[nonsevere[i]] = true;

  RotationExperiment exp;
  for (std::size_t i = 0; i < fm.rows(); ++i)
    if (selected[i]) exp.rows.push_back(i);
  std::vector<int> labels;
  for (auto i : exp.rows) labels.push_back(truth[i]);
  exp.dataset = LabeledDataset(fm.values.select_rows(exp.rows), std::move(labels));
  for (auto& o : exp.dataset.origin) o = static_cast<std::ptrdiff_t>(exp.rows[static_cast<std::size_t>(o)]);
  for (std::size_t j = 0; j < spec.evidence_types.size(); ++j) {
    std::vector<int> ev;
    for (auto i : exp.rows) ev.push_back(evidence_labels[j][i]);
    exp.evidence.add(to_string(spec.evidence_types[j]), one_hot(ev, 2));
  }
  return exp;
}

void SynthConfig::validate() const {
  require(days > 0, ErrorKind::Config, "synthetic dataset needs at least one day");
  require(feature_dim >= 4, ErrorKind::Config, "synthetic feature_dim must be >= 4");
  std::size_t total = 0;
  for (const auto& [type, n] : event_days) total += n;
  require(total <= days, ErrorKind::Config,
          "event days (" + std::to_string(total) + ") exceed total days (" +
              std::to_string(days) + ")");
  require(overlap >= 0.0 && noise > 0.0, ErrorKind::Config, "overlap >= 0 and noise > 0 required");
  require(start % kSecondsPerDay == 0, ErrorKind::Config, "synthetic start must be midnight UTC");
}

SynthData synth_generate(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t d = config.feature_dim;
  const std::size_t regime_dims = d / 2;

  // Fixed +/-1 patterns: one for the regime split, one shared severe
  // signature, and one per event type.
  auto pattern = [&] {
    std::vector<double> p(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) p[j] = rng.bernoulli(0.5) ? 1.0 : -1.0;
    return p;
  };
  const auto regime_pattern = pattern();
  const auto severe_pattern = pattern();
  std::map<EventType, std::vector<double>> type_pattern;
  for (const auto& [type, n] : config.event_days) type_pattern[type] = pattern();

  std::vector<std::size_t> day_ids = iota_indices(config.days);
  rng.shuffle(day_ids);
  std::vector<std::optional<EventType>> day_type(config.days);
  std::size_t next = 0;
  for (const auto& [type, n] : config.event_days)
    for (std::size_t k = 0; k < n; ++k) day_type[day_ids[next++]] = type;

  std::vector<double> regime(config.days);
  for (auto& r : regime) r = rng.bernoulli(0.5) ? 1.0 : -1.0;

  const std::size_t n = config.days * 4;
  Matrix raw(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t day = i / 4;
    auto row = raw.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      double v = config.noise * rng.normal();
      if (j < regime_dims) {
        v += config.overlap * config.regime_amplitude * regime[day] * regime_pattern[j];
      } else if (day_type[day]) {
        v += config.severe_shift * severe_pattern[j] +
             config.type_shift * type_pattern[*day_type[day]][j];
      }
      row[j] = v;
    }
  }

  SynthData out;
  out.features = make_feature_matrix(std::move(raw), config.start);
  static const char* kCountries[] = {"Germany", "France", "United Kingdom", "Italy", "Poland",
                                     "Spain",   "Netherlands", "Czech Republic"};
  std::map<EventType, std::size_t> counter;
  const Day first = day_of(config.start);
  for (std::size_t day = 0; day < config.days; ++day) {
    if (!day_type[day]) continue;
    const EventType type = *day_type[day];
    EventRecord rec;
    char name[64];
    std::snprintf(name, sizeof name, "Synthetic %s %03zu", to_string(type), ++counter[type]);
    rec.name = name;
    rec.type = type;
    rec.affected_countries = {kCountries[rng.index(std::size(kCountries))]};
    rec.latitude = rng.uniform(36.0, 70.0);
    rec.longitude = rng.uniform(-10.0, 30.0);
    rec.description = std::string("synthetic ") + to_string(type) + " event";
    rec.dates = {first + std::chrono::days{static_cast<long>(day)}};
    out.catalog.records.push_back(std::move(rec));
  }
  return out;
}

Matrix principal_projection(const Matrix& latents, std::size_t components) {
  require(latents.rows() > 0, ErrorKind::Count, "cannot project an empty latent matrix");
  const std::size_t n = latents.rows(), d = latents.cols();
  Eigen::MatrixXd x(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) x(r, c) = latents(r, c);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  Matrix out(n, components);
  for (std::size_t k = 0; k < components && k < d; ++k) {
    // Eigenvalues ascend; take from the top and fix the sign so the largest
    // loading is positive.
    Eigen::VectorXd v = solver.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - k));
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    const Eigen::VectorXd proj = x * v;
    for (std::size_t r = 0; r < n; ++r) out(r, k) = proj(static_cast<Eigen::Index>(r));
  }
  return out;
}

Matrix export_latent_projection(const Matrix& latents, std::span<const int> labels,
                                const std::filesystem::path& path) {
  require(labels.size() == latents.rows(), ErrorKind::Shape, "one label per latent row required");
  const Matrix proj = principal_projection(latents, 2);
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write projection '" + path.string() + "'");
  out << "pc1\tpc2\tlabel\n";
  char buf[96];
  for (std::size_t r = 0; r < proj.rows(); ++r) {
    std::snprintf(buf, sizeof buf, "%.9f\t%.9f\t%d\n", proj(r, 0), proj(r, 1), labels[r]);
    out << buf;
  }
  out.flush();
  require(out.good(), ErrorKind::Io, "write failed for '" + path.string() + "'");
  return proj;
}

}  // namespace evt
