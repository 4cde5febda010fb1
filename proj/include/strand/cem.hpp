#pragma once

#include <optional>
#include <vector>

#include "strand/sim.hpp"

namespace strand {

struct ParamRange {
  Scalar lo = 0.0;
  Scalar hi = 1.0;
};

/// Which SimParams entries the search may vary; absent entries stay at the
/// base value.
struct CemBounds {
  std::optional<ParamRange> k_struct;
  std::optional<ParamRange> k_bend;
  std::optional<ParamRange> damping;
  std::optional<ParamRange> friction_coeff;
};

struct CemConfig {
  int population = 32;
  Scalar elite_frac = 0.25;
  int iterations = 6;  // refit rounds after the initial population
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Cross-entropy search over the bounded parameters. Fitness is the mean
/// one-step avg_deviation between simulated and observed after-states.
/// Returns the best parameters ever evaluated.
SimParams cem_identify(const std::vector<Transition>& observed, const SimParams& base,
                       const CemBounds& bounds, const CemConfig& cfg);

}  // namespace strand
