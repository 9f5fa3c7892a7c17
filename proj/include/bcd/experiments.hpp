#pragma once

// Experiment orchestration: benchmark kinds (synthetic equal/non-equal
// variance, interventional evaluation, ablations, external-data fits),
// seed-parallel execution over a worker pool, result-row persistence, and
// aggregate reporting with SVG plots.

#include <cstdint>
#include <string>
#include <vector>

#include "bcd/config.hpp"
#include "bcd/trainer.hpp"
#include "bcd/types.hpp"
#include "bcd/variational.hpp"

namespace bcd {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind { synthetic_ev, synthetic_nv, intervention, ablation, fit_external };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from(const std::string& name);

// Method variants exercised by the ablation experiment; every kind also
// emits `null` baseline rows (empty graph, empirical per-column noise).
enum class MethodKind { full, mean_field, laplace, sinkhorn100 };
std::string to_string(MethodKind method);

struct InterventionOptions {
  int picks = 5;                // interventions per fitted graph
  double value_min = -2.0;      // do-values drawn uniformly from this range
  double value_max = 2.0;
  int truth_samples = 1000;     // ground-truth interventional sample count
  int mixture_draws = 100;      // posterior draws mixed into the model sample
  int samples_per_draw = 10;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::synthetic_ev;
  GraphSpec graph;
  Eigen::Index n = 100;
  std::vector<int> d_sweep;  // optional; overrides graph.d point-wise
  std::vector<int> n_sweep;  // optional; overrides n point-wise
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  TrainConfig train;
  PriorConfig prior;
  FamilyVariant family = FamilyVariant::diagonal;
  Eigen::Index hidden = 128;
  bool mean_field = false;
  double init_log_scale = std::log(0.1);

  double threshold = 0.3;    // edge threshold for structure metrics
  int posterior_draws = 100; // draws behind expected-SHD style metrics
  int sample_kl_draws = 100;
  InterventionOptions intervention;

  std::string data_path;     // fit-external: CSV to ingest
  bool center_external = true;

  std::string out_dir;
  int threads = 1;
  bool reproducible = false;

  ConfigMap raw;  // exact configuration, hashed into every result row
};

// Reads an ExperimentConfig from a parsed config file (sections: experiment,
// graph, data, model, prior, train, intervention).  Unknown keys throw.
ExperimentConfig experiment_config_from(const ConfigMap& map);

struct ResultRow {
  std::string experiment;
  std::string config_hash;
  std::uint64_t seed = 0;
  int d = 0;
  double degree = 0.0;
  std::string noise;
  std::string method;
  std::string metric;
  double value = 0.0;
  double runtime_sec = 0.0;
  double threshold = 0.0;
  std::string version = kVersion;
};

std::string result_csv_header();
std::string result_csv_line(const ResultRow& row);
std::vector<ResultRow> read_result_csv(const std::string& path);

struct ExperimentOutcome {
  std::vector<ResultRow> rows;
  std::string results_path;
  std::vector<std::string> plot_paths;
  int failed_jobs = 0;
  int total_jobs = 0;
};

// Runs every (sweep point × seed × method) job over a worker pool, writes
// out_dir/results.csv (canonically sorted), checkpoints, traces, and sweep
// plots.  Throws when every job fails.
ExperimentOutcome run_experiment(const ExperimentConfig& config);

struct SummaryRow {
  std::string experiment;
  std::string method;
  std::string metric;
  int d = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (0 for a single row)
  int count = 0;
};

std::vector<SummaryRow> summarize_rows(const std::vector<ResultRow>& rows);
// Reads <dir>/results.csv, writes <dir>/summary.csv, returns a text table.
std::string write_report(const std::string& dir);

// Default output directory: $BCD_OUT_DIR when set, else "bcd-out".
std::string default_out_dir();

}  // namespace bcd
