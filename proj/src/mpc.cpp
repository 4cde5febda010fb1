#include "strand/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "strand/parallel.hpp"

namespace strand {

namespace {

// Grasps follow the estimated state: the executed action grasps the true
// node nearest to the estimated grasp position, or becomes a no-op when the
// estimate is off by more than the tolerance.
int resolve_grasp(const RopeState& true_state, const RopeState& est, int node, Scalar tol,
                  bool* missed) {
  const Vec2 wanted = est.points.col(node);
  Eigen::Index best = 0;
  Scalar best_d = std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index i = 0; i < true_state.n_points(); ++i) {
    const Scalar d = (true_state.points.col(i) - wanted).norm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (best_d > tol) {
    *missed = true;
    return -1;
  }
  *missed = false;
  return static_cast<int>(best);
}

RopeState perceive(const RopeState& true_state, const RopeState& predicted,
                   const TrackSettings& ts, int* fallbacks, Scalar* running_loss) {
  const RopeState obs_px = world_to_image(true_state, ts.cam);
  const Image img = render_scene(obs_px, ts.style, ts.image_width, ts.image_height);

  RopeState init = world_to_image(predicted, ts.cam);
  const Eigen::Index full_segments = init.n_segments();
  init = coarsen(init, 8);

  RenderConfig rc = ts.refine;
  rc.coarse_to_fine = true;
  rc.target_segments = full_segments;
  const RefineResult rr = refine_state(init, img, rc);

  // Divergence guard: a blown-up loss means the refinement left the rope.
  if (*running_loss > 0.0 && rr.final_loss > ts.safety_loss_factor * *running_loss) {
    ++*fallbacks;
    return predicted;
  }
  *running_loss = *running_loss <= 0.0 ? rr.final_loss : 0.8 * *running_loss + 0.2 * rr.final_loss;
  return image_to_world(rr.state, ts.cam);
}

}  // namespace

ClosedLoopTrace closed_loop_run(const RopeState& start, const RopeState& goal,
                                const BatchRolloutFn& dynamics, const ClosedLoopConfig& cfg) {
  if (start.n_points() != goal.n_points())
    throw std::invalid_argument("closed_loop_run: start and goal sizes differ");
  if (cfg.observation == ObservationMode::perception && !cfg.track.has_value())
    throw std::invalid_argument("closed_loop_run: perception mode needs track settings");

  ClosedLoopTrace trace;
  RopeState true_state = start;
  RopeState est = start;
  Scalar running_loss = -1.0;
  if (cfg.observation == ObservationMode::perception)
    est = perceive(true_state, start, *cfg.track, &trace.refine_fallbacks, &running_loss);

  trace.deviations.push_back(avg_deviation(true_state, goal));

  int executed = 0;
  std::uint64_t replan_counter = 0;
  while (executed < cfg.max_steps) {
    if (trace.deviations.back() <= cfg.stop_avg_dev) {
      trace.reached = true;
      break;
    }
    Rng plan_rng(cfg.seed);
    const PlanResult pr =
        plan(est, goal, dynamics, cfg.plan, plan_rng.spawn(replan_counter).next_u64());
    ++replan_counter;

    const int to_execute =
        std::min({cfg.plan.actions_per_replan, static_cast<int>(pr.sequence.size()),
                  cfg.max_steps - executed});
    std::vector<Action> executed_now;
    for (int k = 0; k < to_execute; ++k) {
      Action a = pr.sequence[static_cast<std::size_t>(k)];
      bool missed = false;
      const int true_node =
          resolve_grasp(true_state, est, a.grasp_index, cfg.grasp_tolerance, &missed);
      if (missed) {
        ++trace.grasp_misses;
      } else {
        Action applied = a;
        applied.grasp_index = true_node;
        true_state = sim_step(true_state, applied, cfg.sim);
      }
      executed_now.push_back(a);
      trace.actions.push_back(a);
      trace.deviations.push_back(avg_deviation(true_state, goal));
      ++executed;
    }

    if (cfg.observation == ObservationMode::oracle) {
      est = true_state;
    } else {
      // Tracking: refine from the dynamics-predicted state.
      RopeState predicted = est;
      if (!executed_now.empty()) {
        const auto roll = dynamics(est, {executed_now});
        predicted = roll[0].back();
      }
      est = perceive(true_state, predicted, *cfg.track, &trace.refine_fallbacks, &running_loss);
    }
  }
  if (!trace.deviations.empty() && trace.deviations.back() <= cfg.stop_avg_dev)
    trace.reached = true;
  return trace;
}

BenchmarkTask make_benchmark_task(const BenchmarkConfig& cfg, std::uint64_t seed,
                                  std::size_t index) {
  Rng rng = Rng(seed).spawn(index);
  BenchmarkTask task;
  task.start = random_rope(rng, cfg.rope);
  RopeState cur = task.start;
  for (int t = 0; t < cfg.goal_actions; ++t) {
    Action a;
    a.grasp_index = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cur.n_points())));
    const Scalar mag = rng.uniform(cfg.goal_action_min, cfg.goal_action_max);
    const Scalar ang = rng.uniform(0.0, 2.0 * M_PI);
    a.delta = mag * Vec2(std::cos(ang), std::sin(ang));
    cur = sim_step(cur, a, cfg.loop.sim);
  }
  task.goal = cur;
  return task;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const BatchRolloutFn& dynamics,
                              std::uint64_t seed) {
  BenchmarkResult res;
  res.traces.resize(static_cast<std::size_t>(cfg.n_tasks));
  if (cfg.n_tasks == 0) return res;

  parallel_for(static_cast<std::size_t>(cfg.n_tasks), cfg.threads, [&](std::size_t ti) {
    const BenchmarkTask task = make_benchmark_task(cfg, seed, ti);
    ClosedLoopConfig loop = cfg.loop;
    loop.seed = Rng(seed).spawn(1000 + ti).next_u64();
    // Success target: the required fractional reduction of the initial
    // deviation; stop as soon as it is met.
    const Scalar l0 = avg_deviation(task.start, task.goal);
    loop.stop_avg_dev = std::max(loop.stop_avg_dev, (1.0 - cfg.success_reduction) * l0 * 0.999);
    res.traces[ti] = closed_loop_run(task.start, task.goal, dynamics, loop);
  });

  std::size_t horizon = 0;
  for (const auto& tr : res.traces) horizon = std::max(horizon, tr.deviations.size());
  res.mean_dev.assign(horizon, 0.0);
  res.std_dev.assign(horizon, 0.0);
  for (std::size_t t = 0; t < horizon; ++t) {
    Scalar sum = 0.0, sum2 = 0.0;
    for (const auto& tr : res.traces) {
      const Scalar v = t < tr.deviations.size() ? tr.deviations[t] : tr.deviations.back();
      sum += v;
      sum2 += v * v;
    }
    const Scalar n = static_cast<Scalar>(res.traces.size());
    res.mean_dev[t] = sum / n;
    res.std_dev[t] = std::sqrt(std::max(0.0, sum2 / n - (sum / n) * (sum / n)));
  }

  int successes = 0;
  for (const auto& tr : res.traces) {
    const Scalar l0 = tr.deviations.front();
    const std::size_t cap =
        std::min(tr.deviations.size() - 1, static_cast<std::size_t>(cfg.success_within));
    Scalar best = l0;
    for (std::size_t t = 0; t <= cap; ++t) best = std::min(best, tr.deviations[t]);
    if (best <= (1.0 - cfg.success_reduction) * l0) ++successes;
  }
  res.success_fraction = static_cast<Scalar>(successes) / static_cast<Scalar>(cfg.n_tasks);
  return res;
}

}  // namespace strand
