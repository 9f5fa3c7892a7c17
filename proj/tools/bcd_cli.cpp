// bcd: Bayesian causal discovery for linear-Gaussian structural equation
// models.  Verbs: generate | fit | eval | experiment | report.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "../vendor/CLI11.hpp"
#include "bcd/csv.hpp"
#include "bcd/experiments.hpp"
#include "bcd/metrics.hpp"
#include "bcd/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  int threads = 0;
  bool reproducible = false;
  std::string data_path;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_data) {
  cmd->add_option("--config", args.config_path, "configuration file (key = value grammar)");
  cmd->add_option("--seed", args.seeds, "seed (repeatable)");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--threads", args.threads, "worker pool size");
  cmd->add_flag("--reproducible", args.reproducible,
                "bit-exact reproduction mode (forces a single worker)");
  if (with_data) cmd->add_option("--data", args.data_path, "input CSV (overrides data.path)");
}

bcd::ConfigMap load_config(const CommonArgs& args) {
  return args.config_path.empty() ? bcd::ConfigMap{} : bcd::parse_config_file(args.config_path);
}

bcd::ExperimentConfig make_experiment_config(const CommonArgs& args) {
  bcd::ExperimentConfig cfg = bcd::experiment_config_from(load_config(args));
  if (!args.seeds.empty()) cfg.seeds = args.seeds;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.threads > 0) cfg.threads = args.threads;
  if (args.reproducible) cfg.reproducible = true;
  if (!args.data_path.empty()) cfg.data_path = args.data_path;
  if (cfg.out_dir.empty()) cfg.out_dir = bcd::default_out_dir();
  return cfg;
}

int cmd_generate(const CommonArgs& args) {
  const bcd::ExperimentConfig cfg = make_experiment_config(args);
  fs::create_directories(cfg.out_dir);
  for (const std::uint64_t seed : cfg.seeds) {
    bcd::Rng rng(seed);
    const bcd::Dataset data = bcd::sample_dataset(cfg.graph, cfg.n, rng);
    const std::string stem = (fs::path(cfg.out_dir) / ("s" + std::to_string(seed))).string();
    bcd::write_csv_file(stem + "_data.csv", data.x);
    bcd::write_csv_file(stem + "_truth_w.csv",
                        bcd::compose_adjacency(data.truth->p, data.truth->weights));
    bcd::write_csv_file(stem + "_truth_sigma.csv",
                        data.truth->noise.sigma_vector(data.dim()).transpose());
    std::cout << "wrote " << stem << "_data.csv (n=" << data.n() << ", d=" << data.dim()
              << "), truth alongside\n";
  }
  return 0;
}

int cmd_fit(const CommonArgs& args) {
  bcd::ExperimentConfig cfg = make_experiment_config(args);
  if (cfg.data_path.empty())
    throw std::runtime_error("fit: provide --data or config key data.path");
  cfg.kind = bcd::ExperimentKind::fit_external;
  bcd::ExperimentOutcome outcome = bcd::run_experiment(cfg);
  std::cout << "results: " << outcome.results_path << '\n';
  for (const bcd::ResultRow& row : outcome.rows)
    std::cout << "  seed " << row.seed << "  " << row.metric << " = " << row.value << '\n';
  return outcome.failed_jobs > 0 ? 1 : 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_path,
             const std::string& truth_path, double threshold, int draws) {
  if (args.data_path.empty()) throw std::runtime_error("eval: --data is required");
  const bcd::ConfigMap map = load_config(args);
  bcd::PriorConfig prior;
  {
    const bcd::ExperimentConfig cfg =
        map.entries().empty() ? bcd::ExperimentConfig{} : bcd::experiment_config_from(map);
    prior = cfg.prior;
  }
  bcd::VariationalState state = bcd::load_checkpoint(checkpoint_path);
  if (state.marginalized_weights) prior.kind = bcd::WeightPriorKind::gaussian_marginal;
  bcd::CsvOptions copt;
  copt.center = map.get_bool("data.center", true);
  const bcd::Dataset data = bcd::ingest_csv(args.data_path, copt);
  if (data.dim() != state.d)
    throw std::runtime_error("eval: checkpoint dimension " + std::to_string(state.d) +
                             " does not match data dimension " + std::to_string(data.dim()));

  const std::uint64_t seed = args.seeds.empty() ? 0 : args.seeds.front();
  bcd::Rng rng(seed);
  const bcd::ElboReport report = bcd::elbo_estimate(state, data, prior, rng, 16);
  std::cout << "elbo (16-sample estimate) = " << report.elbo << '\n'
            << "  expected log-likelihood = " << report.expected_log_lik << '\n'
            << "  kl (weights, noise)     = " << report.kl_l_sigma << '\n'
            << "  kl (permutation)        = " << report.kl_p << '\n';
  const bcd::SampleKl kl = bcd::sample_kl_diagnostic(data, state, draws, rng, prior);
  std::cout << "sample-kl (" << draws << " draws) = " << kl.kl;
  if (kl.ridge > 0) std::cout << "  [covariance ridge " << kl.ridge << "]";
  std::cout << '\n';

  if (!truth_path.empty()) {
    const bcd::CsvTable table = bcd::read_csv_file(truth_path);
    if (table.values.rows() != state.d || table.values.cols() != state.d)
      throw std::runtime_error("eval: truth matrix must be d x d");
    const bcd::BinaryGraph truth = bcd::threshold_edges(table.values, 0.0);
    std::vector<Eigen::MatrixXd> samples;
    samples.reserve(static_cast<std::size_t>(draws));
    for (int i = 0; i < draws; ++i)
      samples.push_back(bcd::posterior_draw(state, data, prior, {}, rng).w);
    const bcd::PosteriorGraphStats stats = bcd::posterior_graph_stats(samples, truth, threshold);
    std::cout << "expected shd   = " << stats.expected_shd << '\n'
              << "expected shd-c = " << stats.expected_shd_c << '\n'
              << "tpr/fpr/fdr    = " << stats.mean_rates.tpr << " / " << stats.mean_rates.fpr
              << " / " << stats.mean_rates.fdr << "  (threshold " << threshold << ")\n";
  }
  return 0;
}

int cmd_experiment(const CommonArgs& args) {
  const bcd::ExperimentConfig cfg = make_experiment_config(args);
  const bcd::ExperimentOutcome outcome = bcd::run_experiment(cfg);
  std::cout << "jobs: " << outcome.total_jobs - outcome.failed_jobs << "/" << outcome.total_jobs
            << " succeeded\n"
            << "results: " << outcome.results_path << '\n';
  for (const std::string& plot : outcome.plot_paths) std::cout << "plot: " << plot << '\n';
  std::cout << bcd::write_report(cfg.out_dir);
  return outcome.failed_jobs > 0 ? 1 : 0;
}

int cmd_report(const CommonArgs& args, std::string dir) {
  if (dir.empty()) dir = args.out_dir.empty() ? bcd::default_out_dir() : args.out_dir;
  std::cout << bcd::write_report(dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian causal discovery over linear-Gaussian SEMs"};
  app.require_subcommand(1);

  CommonArgs gen_args, fit_args, eval_args, exp_args, rep_args;
  std::string checkpoint_path, truth_path, report_dir;
  double eval_threshold = 0.3;
  int eval_draws = 100;

  add_common(app.add_subcommand("generate", "sample synthetic SEM datasets"), gen_args, false);
  add_common(app.add_subcommand("fit", "fit the variational posterior to a CSV dataset"),
             fit_args, true);
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a saved checkpoint against a dataset");
  add_common(eval_cmd, eval_args, true);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval_cmd->add_option("--truth", truth_path, "ground-truth weighted adjacency CSV");
  eval_cmd->add_option("--threshold", eval_threshold, "edge threshold for structure metrics");
  eval_cmd->add_option("--draws", eval_draws, "posterior draws for metrics");
  add_common(app.add_subcommand("experiment", "run a configured benchmark"), exp_args, true);
  CLI::App* rep_cmd = app.add_subcommand("report", "aggregate results.csv into a summary");
  add_common(rep_cmd, rep_args, false);
  rep_cmd->add_option("dir", report_dir, "results directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("generate")) return cmd_generate(gen_args);
    if (app.got_subcommand("fit")) return cmd_fit(fit_args);
    if (app.got_subcommand("eval"))
      return cmd_eval(eval_args, checkpoint_path, truth_path, eval_threshold, eval_draws);
    if (app.got_subcommand("experiment")) return cmd_experiment(exp_args);
    if (app.got_subcommand("report")) return cmd_report(rep_args, report_dir);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
