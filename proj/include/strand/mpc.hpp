#pragma once

#include <optional>

#include "strand/mppi.hpp"
#include "strand/refine.hpp"
#include "strand/scene.hpp"

namespace strand {

enum class ObservationMode { oracle, perception };

/// Perception-mode tracking: the environment is rendered, and refinement is
/// initialized from the dynamics-predicted state coarsened to 8 segments,
/// then refined coarse-to-fine back to full resolution.
struct TrackSettings {
  CameraTransform cam{200.0, Vec2(112.0, 112.0)};
  SceneStyle style;
  int image_width = 224;
  int image_height = 224;
  RenderConfig refine;            // target_segments set per run
  Scalar safety_loss_factor = 3.0;  // vs the running median frame loss
};

struct ClosedLoopConfig {
  PlanConfig plan;
  SimParams sim;  // environment physics
  std::uint64_t seed = 0;
  int max_steps = 100;          // executed actions
  Scalar stop_avg_dev = 0.005;  // meters; terminate when reached
  ObservationMode observation = ObservationMode::oracle;
  std::optional<TrackSettings> track;  // required in perception mode
  Scalar grasp_tolerance = 0.01;       // meters; larger miss makes the action a no-op
};

struct ClosedLoopTrace {
  std::vector<Scalar> deviations;  // L(t); [0] is the initial deviation
  std::vector<Action> actions;     // executed actions
  int grasp_misses = 0;
  int refine_fallbacks = 0;
  bool reached = false;
};

ClosedLoopTrace closed_loop_run(const RopeState& start, const RopeState& goal,
                                const BatchRolloutFn& dynamics, const ClosedLoopConfig& cfg);

/// Benchmark protocol: starts are random b-splines, goals the result of a
/// seeded random manipulation of the same rope, so every task is reachable.
struct BenchmarkConfig {
  int n_tasks = 20;
  ClosedLoopConfig loop;
  RopeGenConfig rope;
  int goal_actions = 30;  // random actions applied to make the goal
  Scalar goal_action_min = 0.01;
  Scalar goal_action_max = 0.03;
  Scalar success_reduction = 0.7;  // L must drop by this fraction
  int success_within = 60;         // ... within this many executed actions
  int threads = 1;
};

struct BenchmarkResult {
  std::vector<ClosedLoopTrace> traces;
  std::vector<Scalar> mean_dev;  // per step t (carry-forward after termination)
  std::vector<Scalar> std_dev;
  Scalar success_fraction = 0.0;
};

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const BatchRolloutFn& dynamics,
                              std::uint64_t seed);

/// Start/goal pair used by task `index` of a benchmark run.
struct BenchmarkTask {
  RopeState start;
  RopeState goal;
};
BenchmarkTask make_benchmark_task(const BenchmarkConfig& cfg, std::uint64_t seed,
                                  std::size_t index);

}  // namespace strand
