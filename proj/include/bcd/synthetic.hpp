#pragma once

// Synthetic ground-truth generation: Erdős–Rényi DAGs in permuted
// lower-triangular form, edge weights drawn uniformly from
// ±[weight_min, weight_max], and per-node noise scales.

#include <vector>

#include "bcd/rng.hpp"
#include "bcd/sem.hpp"
#include "bcd/types.hpp"

namespace bcd {

struct DagStructure {
  Permutation p;
  std::vector<char> edge;  // packed strictly-lower slots, 1 = edge present
};

inline Permutation sample_permutation(int d, Rng& rng) {
  Permutation p = Permutation::identity(d);
  for (int i = d - 1; i > 0; --i) {  // Fisher–Yates
    const int j = draw_int(rng, 0, i);
    std::swap(p.mapping[static_cast<std::size_t>(i)], p.mapping[static_cast<std::size_t>(j)]);
  }
  return p;
}

// Each strictly-lower slot holds an edge independently with probability
// avg_degree / (d − 1), giving avg_degree · d / 2 expected edges; node
// labels are then scrambled by a uniform random permutation.
inline DagStructure sample_er_dag(const GraphSpec& spec, Rng& rng) {
  if (spec.d < 1) throw std::invalid_argument("sample_er_dag: d must be positive");
  if (spec.avg_degree < 0.0 || spec.avg_degree > spec.d - 1.0 + 1e-12)
    throw std::invalid_argument("sample_er_dag: avg_degree must lie in [0, d-1]");
  DagStructure out;
  out.p = sample_permutation(spec.d, rng);
  const double prob = spec.d > 1 ? std::min(1.0, spec.avg_degree / (spec.d - 1)) : 0.0;
  const Eigen::Index m = LowerTriWeights::dim_packed(spec.d);
  out.edge.assign(static_cast<std::size_t>(m), 0);
  for (Eigen::Index k = 0; k < m; ++k)
    out.edge[static_cast<std::size_t>(k)] = draw_uniform(rng) < prob ? 1 : 0;
  return out;
}

// Uniform magnitude in [weight_min, weight_max], fair random sign.
inline LowerTriWeights sample_weights(const DagStructure& dag, const GraphSpec& spec, Rng& rng) {
  LowerTriWeights w = LowerTriWeights::zero(spec.d);
  for (Eigen::Index k = 0; k < w.l.size(); ++k) {
    if (!dag.edge[static_cast<std::size_t>(k)]) continue;
    const double sign = draw_uniform(rng) < 0.5 ? -1.0 : 1.0;
    w.l(k) = sign * draw_uniform(rng, spec.weight_min, spec.weight_max);
  }
  return w;
}

inline NoiseScales sample_noise_scales(const GraphSpec& spec, Rng& rng) {
  if (spec.variance_mode == VarianceMode::equal) return NoiseScales::equal_scale(0.0);  // σ = 1
  Eigen::VectorXd ls(spec.d);
  for (int j = 0; j < spec.d; ++j) ls(j) = std::log(draw_uniform(rng, spec.sigma_min, spec.sigma_max));
  return NoiseScales::per_node(ls);
}

inline SemParams sample_sem_params(const GraphSpec& spec, Rng& rng) {
  const DagStructure dag = sample_er_dag(spec, rng);
  SemParams params;
  params.p = dag.p;
  params.weights = sample_weights(dag, spec, rng);
  params.noise = sample_noise_scales(spec, rng);
  return params;
}

inline Dataset sample_dataset(const GraphSpec& spec, Eigen::Index n, Rng& rng) {
  const SemParams params = sample_sem_params(spec, rng);
  return sample_observational(params, n, spec.noise_kind, rng);
}

}  // namespace bcd
