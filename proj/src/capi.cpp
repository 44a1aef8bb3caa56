#include "evitransfer.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "evitransfer/error.hpp"
#include "evitransfer/pipeline.hpp"
#include "evitransfer/random.hpp"

struct evt_config {
  evt::ExperimentConfig value;
};

struct evt_result {
  struct Cell {
    std::string name;
    evt::ParsedReport values;
  };
  std::vector<Cell> cells;
  std::string report_path;
};

namespace {

thread_local std::string g_last_error;

evt_status status_for(evt::ErrorKind kind) {
  return static_cast<evt_status>(evt::exit_code_for(kind));
}

template <typename F>
evt_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return EVT_OK;
  } catch (const evt::Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return EVT_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EVT_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return EVT_ERR_INTERNAL;
  }
}

evt_status null_argument(const char* what) {
  g_last_error = std::string("config error: null argument '") + what + "'";
  return EVT_ERR_CONFIG;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

evt_result::Cell pipeline_cell(const evt::PipelineResult& r) {
  return {r.cell, evt::parse_report_text(evt::format_report(r))};
}

}  // namespace

extern "C" {

const char* evt_version(void) { return "1.0.0"; }

const char* evt_last_error(void) { return g_last_error.c_str(); }

evt_status evt_config_default(evt_config** out) {
  if (!out) return null_argument("out");
  return guarded([&] { *out = new evt_config{}; });
}

evt_status evt_config_load(const char* path, evt_config** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  return guarded([&] { *out = new evt_config{evt::load_config(path)}; });
}

evt_status evt_config_from_json(const char* json_text, evt_config** out) {
  if (!json_text) return null_argument("json_text");
  if (!out) return null_argument("out");
  return guarded([&] { *out = new evt_config{evt::config_from_json(json_text)}; });
}

void evt_config_free(evt_config* config) { delete config; }

evt_status evt_config_set_seed(evt_config* config, uint64_t seed) {
  if (!config) return null_argument("config");
  config->value.seed = seed;
  return EVT_OK;
}

evt_status evt_config_set_output_dir(evt_config* config, const char* dir) {
  if (!config) return null_argument("config");
  if (!dir || !*dir) return null_argument("dir");
  return guarded([&] { config->value.output_dir = dir; });
}

evt_status evt_config_set_detector(evt_config* config, evt_detector detector) {
  if (!config) return null_argument("config");
  switch (detector) {
    case EVT_DETECTOR_KMEANS: config->value.detector = evt::DetectorKind::KMeans; break;
    case EVT_DETECTOR_AGGLOMERATIVE: config->value.detector = evt::DetectorKind::Agglomerative; break;
    case EVT_DETECTOR_OCSVM: config->value.detector = evt::DetectorKind::Ocsvm; break;
    default:
      g_last_error = "config error: unknown detector id";
      return EVT_ERR_CONFIG;
  }
  return EVT_OK;
}

evt_status evt_config_set_lambda(evt_config* config, double lambda) {
  if (!config) return null_argument("config");
  if (!(lambda >= 0.0)) {
    g_last_error = "config error: lambda must be >= 0";
    return EVT_ERR_CONFIG;
  }
  config->value.lambda = lambda;
  return EVT_OK;
}

evt_status evt_config_set_screening(evt_config* config, int enabled) {
  if (!config) return null_argument("config");
  config->value.screening = enabled != 0;
  return EVT_OK;
}

evt_status evt_config_to_json(const evt_config* config, char** out) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  return guarded([&] { *out = copy_string(evt::config_to_json(config->value)); });
}

evt_status evt_config_hash(const evt_config* config, char** out) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  return guarded([&] { *out = copy_string(evt::config_hash(config->value)); });
}

void evt_string_free(char* s) { std::free(s); }

evt_status evt_run(const evt_config* config, evt_result** out) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    const auto& c = config->value;
    const auto result = evt::run_pipeline(c);
    evt::emit_report(result, c.output_dir);
    auto handle = new evt_result{};
    handle->cells.push_back(pipeline_cell(result));
    handle->report_path = (std::filesystem::path(c.output_dir) / "report.txt").string();
    *out = handle;
  });
}

namespace {

evt_status run_suite(const evt_config* config, evt_result** out,
                     evt::SuiteResult (*runner)(const evt::ExperimentConfig&)) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    const auto& c = config->value;
    const auto suite = runner(c);
    evt::emit_suite(suite, c.output_dir);
    auto handle = new evt_result{};
    for (const auto& cell : suite.cells) {
      if (cell.result) {
        handle->cells.push_back(pipeline_cell(*cell.result));
        handle->cells.back().name = cell.name;
      } else {
        handle->cells.push_back({cell.name, {{"error", cell.error}}});
      }
    }
    handle->report_path =
        (std::filesystem::path(c.output_dir) / (suite.kind + "_summary.txt")).string();
    *out = handle;
  });
}

}  // namespace

evt_status evt_rotate(const evt_config* config, evt_result** out) {
  return run_suite(config, out, &evt::run_rotation_suite);
}

evt_status evt_sampling_compare(const evt_config* config, evt_result** out) {
  return run_suite(config, out, &evt::run_sampling_comparison);
}

evt_status evt_screen(const evt_config* config, evt_result** out) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    const auto& c = config->value;
    const auto run = evt::run_screening(c);
    evt::emit_screening(run, c.output_dir);
    auto handle = new evt_result{};
    for (const auto& v : run.verdicts) {
      evt::ParsedReport values;
      values["mean_entropy"] = std::to_string(v.mean_entropy);
      values["entropy_ratio"] = std::to_string(v.entropy_ratio);
      values["accepted"] = v.accepted ? "1" : "0";
      handle->cells.push_back({v.source, std::move(values)});
    }
    handle->report_path = (std::filesystem::path(c.output_dir) / "screening.txt").string();
    *out = handle;
  });
}

evt_status evt_synth(const evt_config* config, const char* feature_path,
                     const char* catalog_path) {
  if (!config) return null_argument("config");
  if (!feature_path) return null_argument("feature_path");
  if (!catalog_path) return null_argument("catalog_path");
  return guarded([&] {
    const auto& c = config->value;
    evt::require(c.synth.has_value(), evt::ErrorKind::Config,
                 "synth needs a synthetic data source in the config");
    const auto data = evt::synth_generate(*c.synth, evt::mix_seed(c.seed, 1));
    evt::save_feature_matrix(data.features, feature_path);
    evt::write_event_catalog(data.catalog, catalog_path);
  });
}

size_t evt_result_cell_count(const evt_result* result) {
  return result ? result->cells.size() : 0;
}

const char* evt_result_cell_name(const evt_result* result, size_t cell) {
  if (!result || cell >= result->cells.size()) return nullptr;
  return result->cells[cell].name.c_str();
}

evt_status evt_result_metric(const evt_result* result, size_t cell, const char* key,
                             double* out) {
  if (!result) return null_argument("result");
  if (!key) return null_argument("key");
  if (!out) return null_argument("out");
  if (cell >= result->cells.size()) {
    g_last_error = "config error: cell index out of range";
    return EVT_ERR_CONFIG;
  }
  const auto& values = result->cells[cell].values;
  const auto it = values.find(key);
  if (it == values.end()) {
    g_last_error = std::string("config error: no metric '") + key + "'";
    return EVT_ERR_CONFIG;
  }
  const std::string& text = it->second;
  if (text == "true" || text == "false") {
    *out = text == "true" ? 1.0 : 0.0;
    return EVT_OK;
  }
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') {
    g_last_error = std::string("data error: metric '") + key + "' is not numeric";
    return EVT_ERR_DATA;
  }
  *out = v;
  return EVT_OK;
}

const char* evt_result_report_path(const evt_result* result) {
  return result ? result->report_path.c_str() : nullptr;
}

void evt_result_free(evt_result* result) { delete result; }

}  // extern "C"
