#include "bcd/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "bcd/csv.hpp"
#include "bcd/metrics.hpp"
#include "bcd/svg.hpp"
#include "bcd/synthetic.hpp"

namespace bcd {

namespace fs = std::filesystem;

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::synthetic_ev: return "synthetic-ev";
    case ExperimentKind::synthetic_nv: return "synthetic-nv";
    case ExperimentKind::intervention: return "intervention";
    case ExperimentKind::ablation: return "ablation";
    case ExperimentKind::fit_external: return "fit-external";
  }
  throw std::logic_error("to_string: unknown experiment kind");
}

ExperimentKind experiment_kind_from(const std::string& name) {
  if (name == "synthetic-ev") return ExperimentKind::synthetic_ev;
  if (name == "synthetic-nv") return ExperimentKind::synthetic_nv;
  if (name == "intervention") return ExperimentKind::intervention;
  if (name == "ablation") return ExperimentKind::ablation;
  if (name == "fit-external") return ExperimentKind::fit_external;
  throw std::runtime_error("unknown experiment kind '" + name + "'");
}

std::string to_string(MethodKind method) {
  switch (method) {
    case MethodKind::full: return "full";
    case MethodKind::mean_field: return "mean-field";
    case MethodKind::laplace: return "laplace";
    case MethodKind::sinkhorn100: return "sinkhorn-100";
  }
  throw std::logic_error("to_string: unknown method kind");
}

std::string default_out_dir() {
  if (const char* env = std::getenv("BCD_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "bcd-out";
}

namespace {

const std::set<std::string> kKnownKeys = {
    "experiment.kind", "experiment.seeds", "experiment.threshold", "experiment.posterior_draws",
    "experiment.sample_kl_draws", "experiment.out", "experiment.threads",
    "experiment.reproducible",
    "graph.d", "graph.degree", "graph.noise", "graph.variance", "graph.weight_min",
    "graph.weight_max", "graph.sigma_min", "graph.sigma_max",
    "data.n", "data.path", "data.center", "data.d_sweep", "data.n_sweep",
    "model.family", "model.hidden", "model.mean_field", "model.tau", "model.init_log_scale",
    "model.equal_variance",
    "prior.kind", "prior.rho", "prior.eta", "prior.laplace_b", "prior.s0", "prior.nu",
    "train.steps", "train.step_size", "train.mc_samples", "train.grad_tol",
    "train.plateau_window", "train.plateau_tol", "train.divergence_window",
    "train.divergence_margin", "train.trace_every", "train.sample_kl_draws",
    "train.checkpoint_every", "train.sinkhorn_max_iters", "train.sinkhorn_tol",
    "train.bethe_max_iters", "train.sinkhorn_diff_cap",
    "intervention.picks", "intervention.value_min", "intervention.value_max",
    "intervention.truth_samples", "intervention.mixture_draws",
    "intervention.samples_per_draw",
};

std::string sanitize(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  return out;
}

double column_std(const Eigen::MatrixXd& x, Eigen::Index j) {
  const Eigen::VectorXd col = x.col(j);
  const double mean = col.mean();
  if (x.rows() < 2) return 1.0;
  const double var = (col.array() - mean).square().sum() / static_cast<double>(x.rows() - 1);
  return std::sqrt(std::max(var, 1e-12));
}

}  // namespace

ExperimentConfig experiment_config_from(const ConfigMap& map) {
  for (const auto& [key, value] : map.entries())
    if (!kKnownKeys.count(key))
      throw std::runtime_error("config: unknown key '" + key + "'");

  ExperimentConfig cfg;
  cfg.raw = map;
  cfg.kind = experiment_kind_from(map.get_string("experiment.kind", "synthetic-ev"));

  cfg.graph.d = static_cast<int>(map.get_int("graph.d", 8));
  cfg.graph.avg_degree = map.get_double("graph.degree", 1.0);
  const std::string noise = map.get_string("graph.noise", "gaussian");
  if (noise == "gaussian") cfg.graph.noise_kind = NoiseKind::gaussian;
  else if (noise == "gumbel") cfg.graph.noise_kind = NoiseKind::gumbel;
  else throw std::runtime_error("config: graph.noise must be gaussian or gumbel");
  std::string variance = map.get_string("graph.variance", "");
  if (variance.empty())
    variance = cfg.kind == ExperimentKind::synthetic_nv ? "nonequal" : "equal";
  if (variance == "equal") cfg.graph.variance_mode = VarianceMode::equal;
  else if (variance == "nonequal") cfg.graph.variance_mode = VarianceMode::nonequal;
  else throw std::runtime_error("config: graph.variance must be equal or nonequal");
  cfg.graph.weight_min = map.get_double("graph.weight_min", cfg.graph.weight_min);
  cfg.graph.weight_max = map.get_double("graph.weight_max", cfg.graph.weight_max);
  cfg.graph.sigma_min = map.get_double("graph.sigma_min", cfg.graph.sigma_min);
  cfg.graph.sigma_max = map.get_double("graph.sigma_max", cfg.graph.sigma_max);

  cfg.n = map.get_int("data.n", 100);
  cfg.data_path = map.get_string("data.path", "");
  cfg.center_external = map.get_bool("data.center", true);
  for (auto v : map.get_int_list("data.d_sweep")) cfg.d_sweep.push_back(static_cast<int>(v));
  for (auto v : map.get_int_list("data.n_sweep")) cfg.n_sweep.push_back(static_cast<int>(v));
  if (!cfg.d_sweep.empty() && !cfg.n_sweep.empty())
    throw std::runtime_error("config: choose at most one of data.d_sweep / data.n_sweep");

  cfg.seeds.clear();
  for (auto v : map.get_int_list("experiment.seeds"))
    cfg.seeds.push_back(static_cast<std::uint64_t>(v));
  if (cfg.seeds.empty()) cfg.seeds = {1, 2, 3, 4, 5};
  cfg.threshold = map.get_double("experiment.threshold", 0.3);
  cfg.posterior_draws = static_cast<int>(map.get_int("experiment.posterior_draws", 100));
  cfg.sample_kl_draws = static_cast<int>(map.get_int("experiment.sample_kl_draws", 100));
  cfg.out_dir = map.get_string("experiment.out", "");
  cfg.threads = static_cast<int>(map.get_int("experiment.threads", 1));
  cfg.reproducible = map.get_bool("experiment.reproducible", false);

  const std::string family = map.get_string("model.family", "diagonal");
  if (family == "diagonal") cfg.family = FamilyVariant::diagonal;
  else if (family == "full") cfg.family = FamilyVariant::full;
  else throw std::runtime_error("config: model.family must be diagonal or full");
  cfg.hidden = map.get_int("model.hidden", 128);
  cfg.mean_field = map.get_bool("model.mean_field", false);
  cfg.train.tau = map.get_double("model.tau", cfg.train.tau);
  cfg.init_log_scale = map.get_double("model.init_log_scale", cfg.init_log_scale);

  const std::string prior = map.get_string("prior.kind", "horseshoe");
  if (prior == "horseshoe") cfg.prior.kind = WeightPriorKind::horseshoe;
  else if (prior == "laplace") cfg.prior.kind = WeightPriorKind::laplace;
  else if (prior == "gaussian-marginal") cfg.prior.kind = WeightPriorKind::gaussian_marginal;
  else throw std::runtime_error("config: prior.kind must be horseshoe, laplace, or gaussian-marginal");
  cfg.prior.rho = map.get_double("prior.rho", cfg.prior.rho);
  cfg.prior.eta_override = map.get_double("prior.eta", cfg.prior.eta_override);
  cfg.prior.laplace_b = map.get_double("prior.laplace_b", cfg.prior.laplace_b);
  cfg.prior.s0 = map.get_double("prior.s0", cfg.prior.s0);
  cfg.prior.nu = map.get_double("prior.nu", cfg.prior.nu);

  cfg.train.max_steps = static_cast<int>(map.get_int("train.steps", cfg.train.max_steps));
  cfg.train.step_size = map.get_double("train.step_size", cfg.train.step_size);
  cfg.train.mc_samples = static_cast<int>(map.get_int("train.mc_samples", cfg.train.mc_samples));
  cfg.train.grad_tol = map.get_double("train.grad_tol", cfg.train.grad_tol);
  cfg.train.plateau_window =
      static_cast<int>(map.get_int("train.plateau_window", cfg.train.plateau_window));
  cfg.train.plateau_tol = map.get_double("train.plateau_tol", cfg.train.plateau_tol);
  cfg.train.divergence_window =
      static_cast<int>(map.get_int("train.divergence_window", cfg.train.divergence_window));
  cfg.train.divergence_margin =
      map.get_double("train.divergence_margin", cfg.train.divergence_margin);
  cfg.train.trace_every = static_cast<int>(map.get_int("train.trace_every", cfg.train.trace_every));
  cfg.train.sample_kl_draws =
      static_cast<int>(map.get_int("train.sample_kl_draws", cfg.train.sample_kl_draws));
  cfg.train.checkpoint_every =
      static_cast<int>(map.get_int("train.checkpoint_every", cfg.train.checkpoint_every));
  cfg.train.sinkhorn.max_iters =
      static_cast<int>(map.get_int("train.sinkhorn_max_iters", cfg.train.sinkhorn.max_iters));
  cfg.train.sinkhorn.tol = map.get_double("train.sinkhorn_tol", cfg.train.sinkhorn.tol);
  cfg.train.bethe.max_iters =
      static_cast<int>(map.get_int("train.bethe_max_iters", cfg.train.bethe.max_iters));
  cfg.train.sinkhorn_diff_cap =
      static_cast<int>(map.get_int("train.sinkhorn_diff_cap", cfg.train.sinkhorn_diff_cap));

  cfg.intervention.picks = static_cast<int>(map.get_int("intervention.picks", 5));
  cfg.intervention.value_min = map.get_double("intervention.value_min", -2.0);
  cfg.intervention.value_max = map.get_double("intervention.value_max", 2.0);
  cfg.intervention.truth_samples =
      static_cast<int>(map.get_int("intervention.truth_samples", 1000));
  cfg.intervention.mixture_draws =
      static_cast<int>(map.get_int("intervention.mixture_draws", 100));
  cfg.intervention.samples_per_draw =
      static_cast<int>(map.get_int("intervention.samples_per_draw", 10));

  if (cfg.kind == ExperimentKind::fit_external && cfg.data_path.empty())
    throw std::runtime_error("config: fit-external requires data.path");
  return cfg;
}

std::string result_csv_header() {
  return "experiment,config_hash,seed,d,degree,noise,method,metric,value,runtime_sec,threshold,"
         "version";
}

std::string result_csv_line(const ResultRow& row) {
  std::ostringstream os;
  os.precision(17);
  os << row.experiment << ',' << row.config_hash << ',' << row.seed << ',' << row.d << ','
     << row.degree << ',' << row.noise << ',' << row.method << ',' << row.metric << ','
     << row.value << ',' << row.runtime_sec << ',' << row.threshold << ',' << row.version;
  return os.str();
}

std::vector<ResultRow> read_result_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("report: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("report: empty file " + path);
  if (line != result_csv_header())
    throw std::runtime_error("report: unexpected header in " + path);
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 12)
      throw std::runtime_error("report: malformed row in " + path + ": " + line);
    ResultRow row;
    row.experiment = cells[0];
    row.config_hash = cells[1];
    row.seed = std::stoull(cells[2]);
    row.d = std::stoi(cells[3]);
    row.degree = std::stod(cells[4]);
    row.noise = cells[5];
    row.method = cells[6];
    row.metric = cells[7];
    row.value = std::stod(cells[8]);
    row.runtime_sec = std::stod(cells[9]);
    row.threshold = std::stod(cells[10]);
    row.version = cells[11];
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

struct Job {
  int point = 0;  // sweep point index
  int d = 0;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
  MethodKind method = MethodKind::full;
  bool emit_null = false;  // the full-method job also emits the null baseline
};

struct JobContext {
  const ExperimentConfig& cfg;
  const Dataset* external;  // fit-external: shared ingested data
  std::string experiment_id;
  std::string noise_label;
  fs::path out_dir;
};

ResultRow base_row(const JobContext& ctx, const Job& job, const std::string& method) {
  ResultRow row;
  row.experiment = ctx.experiment_id;
  if (!ctx.cfg.n_sweep.empty()) row.experiment += "@n=" + std::to_string(job.n);
  row.config_hash = ctx.cfg.raw.hash_hex();
  row.seed = job.seed;
  row.d = job.d;
  row.degree = ctx.cfg.graph.avg_degree;
  row.noise = ctx.noise_label;
  row.method = method;
  row.threshold = ctx.cfg.threshold;
  return row;
}

// Deterministic per-job RNG streams: the data stream depends only on
// (seed, point) so every method sees identical data.
Rng data_rng(const Job& job) {
  return substream(job.seed, 0xD000 + static_cast<std::uint64_t>(job.point));
}
std::uint64_t train_seed(const Job& job) {
  return substream(job.seed, 0x7000 + static_cast<std::uint64_t>(job.point) * 8 +
                                 static_cast<std::uint64_t>(job.method))();
}
Rng eval_rng(const Job& job) {
  return substream(job.seed, 0xE000 + static_cast<std::uint64_t>(job.point) * 8 +
                                 static_cast<std::uint64_t>(job.method));
}

double null_sample_kl(const Dataset& data) {
  const int d = data.dim();
  Eigen::MatrixXd cov = data.scatter() / static_cast<double>(data.n());
  cov.diagonal().array() += 1e-10 * cov.diagonal().maxCoeff();
  Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(d, d);
  double logdet_p = 0.0;
  for (int j = 0; j < d; ++j) {
    const double s = column_std(data.x, j);
    precision(j, j) = 1.0 / (s * s);
    logdet_p += std::log(precision(j, j));
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  double logdet_c = 0.0;
  const Eigen::MatrixXd l = llt.matrixL();
  for (int j = 0; j < d; ++j) logdet_c += 2.0 * std::log(l(j, j));
  return 0.5 * ((precision * cov).trace() - d - logdet_p - logdet_c);
}

// Mean W1 distance between ground-truth interventional samples of a random
// true edge's child and either the fitted posterior mixture or the null model.
struct InterventionResult {
  double model_w1 = 0.0;
  double null_w1 = 0.0;
};

InterventionResult intervention_distances(const Dataset& data, const VariationalState& state,
                                          const ExperimentConfig& cfg, Rng& rng) {
  const SemParams& truth = *data.truth;
  const int d = truth.dim();
  const Eigen::MatrixXd w_true = compose_adjacency(truth.p, truth.weights);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j && w_true(i, j) != 0.0) edges.emplace_back(i, j);

  const InterventionOptions& opt = cfg.intervention;
  InterventionResult out;
  for (int pick = 0; pick < opt.picks; ++pick) {
    int node, child;
    if (edges.empty()) {  // no true edges: intervene on a random ordered pair
      node = static_cast<int>(draw_int(rng, 0, d - 1));
      child = static_cast<int>(draw_int(rng, 0, d - 2));
      if (child >= node) ++child;
    } else {
      const auto& e = edges[static_cast<std::size_t>(draw_int(rng, 0, static_cast<int>(edges.size()) - 1))];
      node = e.first;
      child = e.second;
    }
    const double value = draw_uniform(rng, opt.value_min, opt.value_max);

    std::vector<double> truth_samples(static_cast<std::size_t>(opt.truth_samples));
    {
      const Eigen::MatrixXd s = sample_interventional(truth, node, value, opt.truth_samples,
                                                      cfg.graph.noise_kind, rng);
      for (int i = 0; i < opt.truth_samples; ++i)
        truth_samples[static_cast<std::size_t>(i)] = s(i, child);
    }

    std::vector<double> model_samples;
    model_samples.reserve(static_cast<std::size_t>(opt.mixture_draws * opt.samples_per_draw));
    for (int draw = 0; draw < opt.mixture_draws; ++draw) {
      const PosteriorDraw pd = posterior_draw(state, data, cfg.prior, cfg.train.sinkhorn, rng);
      const Eigen::MatrixXd s = sample_interventional(pd.params, node, value,
                                                      opt.samples_per_draw, NoiseKind::gaussian, rng);
      for (int i = 0; i < opt.samples_per_draw; ++i) model_samples.push_back(s(i, child));
    }

    // Null model: empty graph, per-column empirical noise scale.
    const double s_child = column_std(data.x, child);
    std::vector<double> null_samples(static_cast<std::size_t>(opt.truth_samples));
    for (double& v : null_samples) v = s_child * draw_normal(rng);

    out.model_w1 += wasserstein_1d(truth_samples, model_samples);
    out.null_w1 += wasserstein_1d(truth_samples, null_samples);
  }
  out.model_w1 /= opt.picks;
  out.null_w1 /= opt.picks;
  return out;
}

std::vector<ResultRow> run_job(const JobContext& ctx, const Job& job) {
  const ExperimentConfig& cfg = ctx.cfg;
  std::vector<ResultRow> rows;

  // Data: regenerated deterministically per (seed, point); identical for all
  // methods so ablations compare on the same instances.
  Dataset data;
  if (cfg.kind == ExperimentKind::fit_external) {
    data = *ctx.external;
  } else {
    GraphSpec spec = cfg.graph;
    spec.d = job.d;
    Rng rng = data_rng(job);
    data = sample_dataset(spec, job.n, rng);
  }

  // Method variant: model/prior/training deltas relative to the full method.
  bool mean_field = cfg.mean_field;
  PriorConfig prior = cfg.prior;
  TrainConfig train_cfg = cfg.train;
  switch (job.method) {
    case MethodKind::full: break;
    case MethodKind::mean_field: mean_field = true; break;
    case MethodKind::laplace: prior.kind = WeightPriorKind::laplace; break;
    case MethodKind::sinkhorn100: train_cfg.sinkhorn.max_iters = 100; break;
  }
  const bool marginalized = prior.kind == WeightPriorKind::gaussian_marginal;
  const bool equal_variance =
      cfg.raw.has("model.equal_variance")
          ? cfg.raw.get_bool("model.equal_variance", true)
          : (cfg.kind == ExperimentKind::fit_external
                 ? false
                 : cfg.graph.variance_mode == VarianceMode::equal);

  const std::string tag = sanitize(ctx.experiment_id) + "_d" + std::to_string(job.d) + "_n" +
                          std::to_string(job.n) + "_s" + std::to_string(job.seed) + "_" +
                          sanitize(to_string(job.method));
  train_cfg.seed = train_seed(job);
  train_cfg.trace_path = (ctx.out_dir / "traces" / (tag + ".csv")).string();
  train_cfg.checkpoint_path = (ctx.out_dir / "checkpoints" / (tag + ".bin")).string();

  // Best of cfg.restarts runs by trailing-window ELBO; restart 0 reproduces
  // the single-run behavior exactly, and every method gets the same budget.
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult fit;
  for (int restart = 0; restart < cfg.restarts; ++restart) {
    TrainConfig tc = train_cfg;
    tc.seed = train_cfg.seed + 7919ull * static_cast<std::uint64_t>(restart);
    if (restart > 0) {
      tc.trace_path.clear();  // keep the files of the first run's shape only
      tc.checkpoint_path.clear();
    }
    Rng init_rng(substream(tc.seed, 0x171));
    VariationalState initial =
        VariationalState::init(data.dim(), equal_variance, cfg.family, train_cfg.tau, cfg.hidden,
                               mean_field, marginalized, init_rng, cfg.init_log_scale);
    TrainResult attempt = train(tc, data, prior, std::move(initial));
    if (restart == 0 || attempt.final_window_mean > fit.final_window_mean) fit = std::move(attempt);
  }
  const double runtime =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string method = to_string(job.method);
  const auto emit = [&](const std::string& m, const std::string& metric, double value,
                        double rt) {
    ResultRow row = base_row(ctx, job, m);
    row.metric = metric;
    row.value = value;
    row.runtime_sec = rt;
    rows.push_back(std::move(row));
  };
  emit(method, "elbo", fit.final_elbo, runtime);
  emit(method, "steps", fit.steps, runtime);

  Rng rng = eval_rng(job);
  if (data.truth.has_value()) {
    const BinaryGraph truth_graph = graph_of(*data.truth);
    std::vector<Eigen::MatrixXd> draws;
    draws.reserve(static_cast<std::size_t>(cfg.posterior_draws));
    for (int i = 0; i < cfg.posterior_draws; ++i)
      draws.push_back(posterior_draw(fit.state, data, prior, train_cfg.sinkhorn, rng).w);
    const PosteriorGraphStats stats = posterior_graph_stats(draws, truth_graph, cfg.threshold);
    emit(method, "e-shd", stats.expected_shd, runtime);
    emit(method, "e-shd-c", stats.expected_shd_c, runtime);
    emit(method, "tpr", stats.mean_rates.tpr, runtime);
    emit(method, "fpr", stats.mean_rates.fpr, runtime);
    emit(method, "fdr", stats.mean_rates.fdr, runtime);
  }
  emit(method, "sample-kl",
       sample_kl_diagnostic(data, fit.state, cfg.sample_kl_draws, rng, prior, train_cfg.sinkhorn)
           .kl,
       runtime);

  if (cfg.kind == ExperimentKind::intervention) {
    if (!data.truth.has_value())
      throw std::runtime_error("intervention experiment requires synthetic ground truth");
    const InterventionResult iv = intervention_distances(data, fit.state, cfg, rng);
    emit(method, "w1-interventional", iv.model_w1, runtime);
    if (job.emit_null) emit("null", "w1-interventional", iv.null_w1, 0.0);
  }

  if (job.emit_null && data.truth.has_value()) {
    // Baseline that predicts no edges: its SHD is exactly the true edge count.
    const BinaryGraph truth_graph = graph_of(*data.truth);
    const BinaryGraph empty(truth_graph.d);
    emit("null", "e-shd", static_cast<double>(shd(empty, truth_graph)), 0.0);
    emit("null", "e-shd-c", static_cast<double>(shd_c(empty, truth_graph)), 0.0);
    const ClassificationRates rates = classification_rates(empty, truth_graph);
    emit("null", "tpr", rates.tpr, 0.0);
    emit("null", "fpr", rates.fpr, 0.0);
    emit("null", "fdr", rates.fdr, 0.0);
    emit("null", "sample-kl", null_sample_kl(data), 0.0);
  }
  return rows;
}

void write_sweep_plots(const ExperimentConfig& cfg, const std::vector<ResultRow>& rows,
                       const fs::path& out_dir, ExperimentOutcome& outcome) {
  const bool n_axis = !cfg.n_sweep.empty();
  const std::string axis = n_axis ? "n" : "d";
  const auto x_of = [&](const ResultRow& row) -> double {
    if (!n_axis) return row.d;
    const auto pos = row.experiment.rfind("@n=");
    return pos == std::string::npos ? 0.0 : std::stod(row.experiment.substr(pos + 3));
  };

  std::set<std::string> metrics;
  for (const ResultRow& row : rows)
    if (row.metric != "failed" && row.metric != "steps") metrics.insert(row.metric);

  for (const std::string& metric : metrics) {
    // method -> x -> values across seeds
    std::map<std::string, std::map<double, std::vector<double>>> grouped;
    for (const ResultRow& row : rows)
      if (row.metric == metric) grouped[row.method][x_of(row)].push_back(row.value);

    std::vector<PlotSeries> series;
    for (const auto& [method, points] : grouped) {
      PlotSeries s;
      s.label = method;
      for (const auto& [x, values] : points) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        const double sd = values.size() > 1 ? std::sqrt(var / (static_cast<double>(values.size()) - 1)) : 0.0;
        s.x.push_back(x);
        s.y.push_back(mean);
        s.err.push_back(sd);
      }
      series.push_back(std::move(s));
    }
    if (series.empty()) continue;
    PlotSpec spec;
    spec.title = to_string(cfg.kind) + ": " + metric + " vs " + axis;
    spec.x_label = axis;
    spec.y_label = metric;
    const fs::path path = out_dir / (sanitize(metric) + "_vs_" + axis + ".svg");
    write_line_plot(path.string(), spec, series);
    outcome.plot_paths.push_back(path.string());
  }
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
  const fs::path out_dir = config.out_dir.empty() ? fs::path(default_out_dir())
                                                  : fs::path(config.out_dir);
  fs::create_directories(out_dir / "traces");
  fs::create_directories(out_dir / "checkpoints");

  JobContext ctx{config, nullptr, to_string(config.kind), "", out_dir};
  ctx.noise_label = (config.graph.noise_kind == NoiseKind::gaussian ? "gaussian" : "gumbel");
  ctx.noise_label += config.graph.variance_mode == VarianceMode::equal ? "-ev" : "-nv";

  Dataset external;
  if (config.kind == ExperimentKind::fit_external) {
    CsvOptions opt;
    opt.center = config.center_external;
    external = ingest_csv(config.data_path, opt);
    ctx.external = &external;
    ctx.noise_label = "external";
  }

  // One job per (sweep point, seed, method); the full method also owns the
  // null baseline rows for its (point, seed).
  std::vector<MethodKind> methods = {MethodKind::full};
  if (config.kind == ExperimentKind::ablation)
    methods = {MethodKind::full, MethodKind::mean_field, MethodKind::laplace,
               MethodKind::sinkhorn100};

  std::vector<Job> jobs;
  const int points = !config.d_sweep.empty() ? static_cast<int>(config.d_sweep.size())
                     : !config.n_sweep.empty() ? static_cast<int>(config.n_sweep.size())
                                               : 1;
  for (int point = 0; point < points; ++point) {
    Job base;
    base.point = point;
    base.d = config.kind == ExperimentKind::fit_external ? external.dim()
             : !config.d_sweep.empty() ? config.d_sweep[static_cast<std::size_t>(point)]
                                       : config.graph.d;
    base.n = config.kind == ExperimentKind::fit_external ? external.n()
             : !config.n_sweep.empty()
                 ? static_cast<Eigen::Index>(config.n_sweep[static_cast<std::size_t>(point)])
                 : config.n;
    for (std::uint64_t seed : config.seeds)
      for (MethodKind method : methods) {
        Job job = base;
        job.seed = seed;
        job.method = method;
        job.emit_null = method == MethodKind::full;
        jobs.push_back(job);
      }
  }

  ExperimentOutcome outcome;
  outcome.total_jobs = static_cast<int>(jobs.size());
  std::mutex mu;  // single serialized writer for rows and failures
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) break;
      const Job& job = jobs[i];
      try {
        std::vector<ResultRow> rows = run_job(ctx, job);
        const std::lock_guard<std::mutex> lock(mu);
        for (ResultRow& row : rows) outcome.rows.push_back(std::move(row));
      } catch (const std::exception& err) {
        ResultRow row = base_row(ctx, job, to_string(job.method));
        row.metric = "failed";
        row.value = 1.0;
        const std::lock_guard<std::mutex> lock(mu);
        ++outcome.failed_jobs;
        outcome.rows.push_back(std::move(row));
        std::ofstream log(out_dir / "failures.log", std::ios::app);
        log << "seed " << job.seed << " method " << to_string(job.method) << ": " << err.what()
            << '\n';
      }
    }
  };

  int threads = config.reproducible ? 1 : std::max(1, config.threads);
  threads = std::min<int>(threads, static_cast<int>(jobs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (outcome.failed_jobs == outcome.total_jobs)
    throw std::runtime_error("experiment: every job failed (see failures.log)");

  // Canonical order keeps re-runs byte-identical regardless of scheduling.
  std::sort(outcome.rows.begin(), outcome.rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.experiment, a.d, a.seed, a.method, a.metric) <
           std::tie(b.experiment, b.d, b.seed, b.method, b.metric);
  });

  const fs::path results = out_dir / "results.csv";
  std::ofstream os(results, std::ios::trunc);
  if (!os) throw std::runtime_error("experiment: cannot write " + results.string());
  os << result_csv_header() << '\n';
  for (const ResultRow& row : outcome.rows) os << result_csv_line(row) << '\n';
  os.close();
  outcome.results_path = results.string();

  if (config.kind != ExperimentKind::fit_external)
    write_sweep_plots(config, outcome.rows, out_dir, outcome);
  return outcome;
}

std::vector<SummaryRow> summarize_rows(const std::vector<ResultRow>& rows) {
  std::map<std::tuple<std::string, std::string, std::string, int>, std::vector<double>> groups;
  for (const ResultRow& row : rows)
    groups[{row.experiment, row.method, row.metric, row.d}].push_back(row.value);
  std::vector<SummaryRow> out;
  for (const auto& [key, values] : groups) {
    SummaryRow s;
    std::tie(s.experiment, s.method, s.metric, s.d) = key;
    s.count = static_cast<int>(values.size());
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(s.count);
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stddev = s.count > 1 ? std::sqrt(var / (s.count - 1)) : 0.0;
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::string pad(const std::string& s, std::size_t width) {
  std::string out = s;
  out.append(out.size() < width ? width - out.size() : 1, ' ');
  return out;
}

}  // namespace

std::string write_report(const std::string& dir) {
  const std::vector<ResultRow> rows = read_result_csv((fs::path(dir) / "results.csv").string());
  if (rows.empty()) throw std::runtime_error("report: no rows in " + dir);
  const std::vector<SummaryRow> summary = summarize_rows(rows);

  std::ofstream csv(fs::path(dir) / "summary.csv", std::ios::trunc);
  csv << "experiment,method,metric,d,mean,std,count\n";
  csv.precision(17);
  for (const SummaryRow& s : summary)
    csv << s.experiment << ',' << s.method << ',' << s.metric << ',' << s.d << ',' << s.mean
        << ',' << s.stddev << ',' << s.count << '\n';

  std::ostringstream text;
  text.precision(5);
  text << std::left;
  text << pad("experiment", 22) << pad("method", 14) << pad("metric", 20) << pad("d", 5)
       << "mean +- std (count)\n";
  for (const SummaryRow& s : summary) {
    std::ostringstream value;
    value.precision(5);
    value << s.mean << " +- " << s.stddev << " (" << s.count << ")";
    text << pad(s.experiment, 22) << pad(s.method, 14) << pad(s.metric, 20)
         << pad(std::to_string(s.d), 5) << value.str() << '\n';
  }
  return text.str();
}

}  // namespace bcd
