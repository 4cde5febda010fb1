#include "strand/cem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "strand/parallel.hpp"
#include "strand/rng.hpp"

namespace strand {

namespace {

struct Dim {
  ParamRange range;
  Scalar SimParams::*field;
};

std::vector<Dim> active_dims(const CemBounds& b) {
  std::vector<Dim> dims;
  if (b.k_struct) dims.push_back({*b.k_struct, &SimParams::k_struct});
  if (b.k_bend) dims.push_back({*b.k_bend, &SimParams::k_bend});
  if (b.damping) dims.push_back({*b.damping, &SimParams::damping});
  if (b.friction_coeff) dims.push_back({*b.friction_coeff, &SimParams::friction_coeff});
  return dims;
}

Scalar fitness(const SimParams& params, const std::vector<Transition>& observed) {
  Scalar total = 0.0;
  for (const Transition& tr : observed) {
    try {
      const RopeState predicted = sim_step(tr.state_before, tr.action, params);
      total += avg_deviation(predicted, tr.state_after);
    } catch (const std::runtime_error&) {
      return std::numeric_limits<Scalar>::infinity();  // diverging candidate
    }
  }
  return total / static_cast<Scalar>(observed.size());
}

}  // namespace

SimParams cem_identify(const std::vector<Transition>& observed, const SimParams& base,
                       const CemBounds& bounds, const CemConfig& cfg) {
  if (observed.empty()) throw std::invalid_argument("cem_identify: no observed transitions");
  if (cfg.population < 2) throw std::invalid_argument("cem_identify: population must be >= 2");
  const auto dims = active_dims(bounds);
  if (dims.empty()) throw std::invalid_argument("cem_identify: no bounded parameters");

  const std::size_t d = dims.size();
  std::vector<Scalar> mean(d), stddev(d);
  for (std::size_t k = 0; k < d; ++k) {
    mean[k] = 0.5 * (dims[k].range.lo + dims[k].range.hi);
    stddev[k] = 0.5 * (dims[k].range.hi - dims[k].range.lo);
  }

  Rng rng(cfg.seed);
  const int n_elite = std::max(2, static_cast<int>(std::ceil(cfg.elite_frac * cfg.population)));

  std::vector<std::vector<Scalar>> pop(static_cast<std::size_t>(cfg.population),
                                       std::vector<Scalar>(d));
  std::vector<Scalar> scores(static_cast<std::size_t>(cfg.population));
  std::vector<Scalar> best_x(d);
  Scalar best_score = std::numeric_limits<Scalar>::infinity();

  for (int round = 0; round <= cfg.iterations; ++round) {
    for (auto& x : pop)
      for (std::size_t k = 0; k < d; ++k)
        x[k] = std::clamp(rng.normal(mean[k], stddev[k]), dims[k].range.lo, dims[k].range.hi);

    parallel_for(pop.size(), cfg.threads, [&](std::size_t i) {
      SimParams candidate = base;
      for (std::size_t k = 0; k < d; ++k) candidate.*(dims[k].field) = pop[i][k];
      scores[i] = fitness(candidate, observed);
    });

    std::vector<std::size_t> order(pop.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    if (scores[order[0]] < best_score) {
      best_score = scores[order[0]];
      best_x = pop[order[0]];
    }
    if (round == cfg.iterations) break;

    for (std::size_t k = 0; k < d; ++k) {
      Scalar m = 0.0;
      for (int e = 0; e < n_elite; ++e) m += pop[order[static_cast<std::size_t>(e)]][k];
      m /= n_elite;
      Scalar var = 0.0;
      for (int e = 0; e < n_elite; ++e) {
        const Scalar diff = pop[order[static_cast<std::size_t>(e)]][k] - m;
        var += diff * diff;
      }
      mean[k] = m;
      stddev[k] = std::max(std::sqrt(var / n_elite),
                           1e-3 * (dims[k].range.hi - dims[k].range.lo));
    }
  }

  SimParams out = base;
  for (std::size_t k = 0; k < d; ++k) out.*(dims[k].field) = best_x[k];
  return out;
}

}  // namespace strand
