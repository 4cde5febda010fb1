#pragma once

#include <string>
#include <vector>

#include "strand/bspline.hpp"
#include "strand/rope.hpp"

namespace strand {

/// Chain mass-spring rope on a friction plane. One action drags the grasped
/// node along its displacement over `substeps` symplectic-Euler substeps
/// (dt * substeps spans the action), then the settle loop runs until node
/// speeds drop below kSettleSpeed or the extra-substep cap is hit.
struct SimParams {
  Eigen::Index n_nodes = 65;
  Scalar node_mass = 0.002;      // kg
  Scalar k_struct = 400.0;       // N/m, neighbor springs
  Scalar k_bend = 40.0;          // N/m, second-neighbor springs
  Scalar damping = 0.03;         // N*s/m, per-node viscous
  Scalar friction_coeff = 0.5;   // Coulomb, against the plane
  Scalar dt = 2.5e-4;            // s
  int substeps = 4000;           // drag phase length; dt*substeps = action span
  int settle_extra = 4000;       // settle loop cap beyond the drag phase

  void validate() const;
};

inline constexpr Scalar kSettleSpeed = 1e-4;    // m/s
inline constexpr Scalar kFrictionVelEps = 1e-3; // m/s, tanh regularization scale
inline constexpr Scalar kGravity = 9.81;        // m/s^2

struct Transition {
  RopeState state_before;
  Action action;
  RopeState state_after;
};

/// Quasi-static settled state after one grasp-and-drag action.
RopeState sim_step(const RopeState& state, const Action& action, const SimParams& params);

/// Sequential sim_step over the action list; output[i] is the state after
/// actions[0..i].
std::vector<RopeState> sim_rollout(const RopeState& state, const std::vector<Action>& actions,
                                   const SimParams& params);

struct DatasetConfig {
  int n_sequences = 2;
  int steps_per_sequence = 100;
  Scalar action_min = 0.01;  // meters
  Scalar action_max = 0.03;
  SimParams sim;
  RopeGenConfig rope;
};

struct Dataset {
  DatasetConfig config;
  std::uint64_t seed = 0;
  std::vector<Transition> transitions;
};

/// Deterministic under (config, seed); sequences get independent derived
/// streams, so generation may be sharded.
Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed, int threads = 1);

/// Line-delimited JSON: a header record carrying SimParams and the seed, then
/// one record per transition.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace strand
