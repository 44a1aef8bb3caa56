// Command-line front end. Everything goes through the C interface.
#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>

#include "evitransfer.h"

namespace {

struct Options {
  std::string config_path;
  std::optional<unsigned long long> seed;
  std::string out_dir;
  std::string detector;
  std::optional<double> lambda;
  bool skip_screening = false;
  std::string feature_path = "features.evt";
  std::string catalog_path = "catalog.tsv";
};

int exit_code(evt_status s) { return s == EVT_ERR_INTERNAL ? 1 : static_cast<int>(s); }

int report_failure(evt_status s) {
  std::fprintf(stderr, "evitransfer: %s\n", evt_last_error());
  return exit_code(s);
}

evt_status configure(const Options& opt, evt_config** out) {
  evt_status s = opt.config_path.empty() ? evt_config_default(out)
                                         : evt_config_load(opt.config_path.c_str(), out);
  if (s != EVT_OK) return s;
  evt_config* cfg = *out;
  if (opt.seed) s = evt_config_set_seed(cfg, *opt.seed);
  if (s == EVT_OK && !opt.out_dir.empty()) s = evt_config_set_output_dir(cfg, opt.out_dir.c_str());
  if (s == EVT_OK && !opt.detector.empty()) {
    const evt_detector d = opt.detector == "kmeans" ? EVT_DETECTOR_KMEANS
                           : opt.detector == "agglo" ? EVT_DETECTOR_AGGLOMERATIVE
                                                     : EVT_DETECTOR_OCSVM;
    s = evt_config_set_detector(cfg, d);
  }
  if (s == EVT_OK && opt.lambda) s = evt_config_set_lambda(cfg, *opt.lambda);
  if (s == EVT_OK && opt.skip_screening) s = evt_config_set_screening(cfg, 0);
  if (s != EVT_OK) {
    evt_config_free(cfg);
    *out = nullptr;
  }
  return s;
}

void print_cells(const evt_result* result) {
  const size_t n = evt_result_cell_count(result);
  for (size_t i = 0; i < n; ++i) {
    double base = 0.0, transfer = 0.0;
    if (evt_result_metric(result, i, "baseline.micro.f1", &base) == EVT_OK &&
        evt_result_metric(result, i, "transfer.micro.f1", &transfer) == EVT_OK) {
      std::printf("%-24s baseline micro-F1 %.6f  transfer micro-F1 %.6f\n",
                  evt_result_cell_name(result, i), base, transfer);
    } else {
      double ratio = 0.0, accepted = 0.0;
      if (evt_result_metric(result, i, "entropy_ratio", &ratio) == EVT_OK) {
        evt_result_metric(result, i, "accepted", &accepted);
        std::printf("%-24s entropy ratio %.6f  %s\n", evt_result_cell_name(result, i), ratio,
                    accepted != 0.0 ? "accepted" : "rejected");
      } else {
        std::printf("%-24s failed\n", evt_result_cell_name(result, i));
      }
    }
  }
  std::printf("report: %s\n", evt_result_report_path(result));
}

int run_verb(const Options& opt, evt_status (*verb)(const evt_config*, evt_result**)) {
  evt_config* cfg = nullptr;
  evt_status s = configure(opt, &cfg);
  if (s != EVT_OK) return report_failure(s);
  evt_result* result = nullptr;
  s = verb(cfg, &result);
  evt_config_free(cfg);
  if (s != EVT_OK) return report_failure(s);
  print_cells(result);
  evt_result_free(result);
  return 0;
}

int run_synth(const Options& opt) {
  evt_config* cfg = nullptr;
  evt_status s = configure(opt, &cfg);
  if (s != EVT_OK) return report_failure(s);
  s = evt_synth(cfg, opt.feature_path.c_str(), opt.catalog_path.c_str());
  evt_config_free(cfg);
  if (s != EVT_OK) return report_failure(s);
  std::printf("wrote %s and %s\n", opt.feature_path.c_str(), opt.catalog_path.c_str());
  return 0;
}

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config_path, "JSON experiment configuration");
  cmd->add_option("--seed", opt.seed, "master seed");
  cmd->add_option("--out", opt.out_dir, "output directory");
  cmd->add_option("--detector", opt.detector, "detector")
      ->check(CLI::IsMember({"kmeans", "agglo", "ocsvm"}));
  cmd->add_option("--lambda", opt.lambda, "evidence weight")->check(CLI::NonNegativeNumber);
  cmd->add_flag("--skip-screening", opt.skip_screening, "transfer every evidence source");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evidence-transfer severe event detection"};
  app.require_subcommand(1);
  Options opt;

  auto* run = app.add_subcommand("run", "baseline and evidence-transfer detection");
  auto* rotate = app.add_subcommand("rotate", "every ground-truth / evidence pairing");
  auto* sampling = app.add_subcommand("sampling-compare", "compare the resampling strategies");
  auto* screen = app.add_subcommand("screen", "entropy screening of the evidence sources");
  auto* synth = app.add_subcommand("synth", "write the synthetic corpus to disk");
  for (auto* cmd : {run, rotate, sampling, screen, synth}) add_common(cmd, opt);
  synth->add_option("--features", opt.feature_path, "feature file to write");
  synth->add_option("--catalog", opt.catalog_path, "event catalog to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run->parsed()) return run_verb(opt, &evt_run);
  if (rotate->parsed()) return run_verb(opt, &evt_rotate);
  if (sampling->parsed()) return run_verb(opt, &evt_sampling_compare);
  if (screen->parsed()) return run_verb(opt, &evt_screen);
  return run_synth(opt);
}
