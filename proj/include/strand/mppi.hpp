#pragma once

#include <functional>
#include <vector>

#include "strand/lstm.hpp"
#include "strand/rope.hpp"
#include "strand/sim.hpp"

namespace strand {

/// MPPI hyperparameters. Candidate sequences start as 0.8*a_max pushes of the
/// grasped node toward its goal position (clipped so the cumulative push
/// stops at the goal), perturbed per sequence by an endpoint shift
/// (delta_x, delta_y) and a curvature term delta_c * cos(t*pi/T) along the
/// perpendicular. The discrete sum of cos(t*pi/T) over t=1..T is -1, so the
/// modulation is mean-removed to keep the endpoint unchanged.
struct PlanConfig {
  Scalar a_max = 0.03;       // meters
  int n_sequences = 30;
  int horizon = 10;
  Scalar alpha = 50.0;       // inverse temperature, per meter of summed avg deviation
  Scalar noise_xy = 0.005;   // stddev of delta_x, delta_y
  Scalar noise_curve = 0.01; // stddev of delta_c
  int grasp_stride = 2;       // candidate grasp nodes 0, 2, 4, ...
  int actions_per_replan = 2;
  bool terminal_cost_only = false;
  int threads = 1;
};

/// Batched rollout: trajectories for several action sequences from one start.
using BatchRolloutFn = std::function<std::vector<std::vector<RopeState>>(
    const RopeState& start, const std::vector<std::vector<Action>>& sequences)>;

BatchRolloutFn make_lstm_dynamics(const LstmModel& model);
BatchRolloutFn make_sim_dynamics(const SimParams& params);

/// n_sequences x horizon candidate displacement sequences for one grasp node.
std::vector<std::vector<Action>> sample_candidates(const RopeState& state, const RopeState& goal,
                                                   int node, const PlanConfig& cfg, Rng& rng);

/// Softmax weights w_k ~ exp(-alpha * (cost_k - min cost)), normalized.
VecX mppi_weights(const VecX& costs, Scalar alpha);

struct CandidateBatch {
  int node = 0;
  std::vector<std::vector<Action>> sequences;
  VecX costs;    // per-sequence rolled-out cost
  VecX weights;  // sum to 1
  std::vector<Action> averaged;  // cost-weighted average sequence
  Scalar averaged_cost = 0.0;    // rolled-out cost of the averaged sequence
};

/// Inner loop: roll out all sequences, weight them, return the averaged
/// sequence and its own rolled-out cost.
CandidateBatch mppi_inner(const RopeState& state, const RopeState& goal, int node,
                          const BatchRolloutFn& dynamics, const PlanConfig& cfg, Rng& rng);

struct PlanResult {
  int node = 0;
  std::vector<Action> sequence;
  Scalar predicted_cost = 0.0;
};

/// Outer loop over candidate grasp nodes (every grasp_stride-th node, both
/// ends included); ties break toward the lowest node index. Per-node
/// randomness derives from (seed, node).
PlanResult plan(const RopeState& state, const RopeState& goal, const BatchRolloutFn& dynamics,
                const PlanConfig& cfg, std::uint64_t seed);

}  // namespace strand
