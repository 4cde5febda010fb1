#include "strand/mppi.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "strand/parallel.hpp"

namespace strand {

BatchRolloutFn make_lstm_dynamics(const LstmModel& model) {
  return [model](const RopeState& start, const std::vector<std::vector<Action>>& seqs) {
    return lstm_rollout_batch(model, start, seqs);
  };
}

BatchRolloutFn make_sim_dynamics(const SimParams& params) {
  return [params](const RopeState& start, const std::vector<std::vector<Action>>& seqs) {
    std::vector<std::vector<RopeState>> out(seqs.size());
    for (std::size_t k = 0; k < seqs.size(); ++k) out[k] = sim_rollout(start, seqs[k], params);
    return out;
  };
}

std::vector<std::vector<Action>> sample_candidates(const RopeState& state, const RopeState& goal,
                                                   int node, const PlanConfig& cfg, Rng& rng) {
  if (node < 0 || node >= state.n_points())
    throw std::invalid_argument("sample_candidates: node out of range");
  if (cfg.horizon < 1) throw std::invalid_argument("sample_candidates: horizon must be >= 1");
  const int T = cfg.horizon;

  const Vec2 to_goal = goal.points.col(node) - state.points.col(node);
  const Scalar dist = to_goal.norm();
  const bool degenerate = dist < 1e-9;
  const Vec2 e1 = degenerate ? Vec2(1.0, 0.0) : Vec2(to_goal / dist);
  const Vec2 e2(-e1.y(), e1.x());

  // Base pushes of 0.8*a_max toward the goal, clipped so the cumulative
  // displacement stops exactly at the goal when it is reachable in T steps.
  std::vector<Vec2> base(static_cast<std::size_t>(T), Vec2::Zero());
  if (!degenerate) {
    Scalar remaining = dist;
    for (int t = 0; t < T; ++t) {
      const Scalar step = std::min(0.8 * cfg.a_max, remaining);
      base[static_cast<std::size_t>(t)] = step * e1;
      remaining -= step;
    }
  }

  // cos(t*pi/T) for t=1..T sums to -1; remove the mean so curvature noise
  // leaves the sequence endpoint where the base actions put it.
  std::vector<Scalar> modulation(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t)
    modulation[static_cast<std::size_t>(t - 1)] =
        std::cos(static_cast<Scalar>(t) * M_PI / T) + 1.0 / static_cast<Scalar>(T);

  std::vector<std::vector<Action>> seqs(static_cast<std::size_t>(cfg.n_sequences));
  for (auto& seq : seqs) {
    const Scalar dx = rng.normal(0.0, cfg.noise_xy);
    const Scalar dy = rng.normal(0.0, cfg.noise_xy);
    const Scalar dc = rng.normal(0.0, cfg.noise_curve);
    seq.resize(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      Vec2 delta = base[static_cast<std::size_t>(t)] + Vec2(dx, dy) +
                   dc * modulation[static_cast<std::size_t>(t)] * e2;
      const Scalar mag = delta.norm();
      if (mag > cfg.a_max) delta *= cfg.a_max / mag;
      seq[static_cast<std::size_t>(t)] = Action{node, delta};
    }
  }
  return seqs;
}

VecX mppi_weights(const VecX& costs, Scalar alpha) {
  if (costs.size() == 0) throw std::invalid_argument("mppi_weights: empty costs");
  const Scalar lo = costs.minCoeff();
  VecX w = (-(alpha * (costs.array() - lo))).exp().matrix();
  return w / w.sum();
}

namespace {
Scalar trajectory_cost(const std::vector<RopeState>& traj, const RopeState& goal,
                       bool terminal_only) {
  if (traj.empty()) return std::numeric_limits<Scalar>::infinity();
  if (terminal_only) return avg_deviation(traj.back(), goal);
  Scalar c = 0.0;
  for (const RopeState& s : traj) c += avg_deviation(s, goal);
  return c;
}
}  // namespace

CandidateBatch mppi_inner(const RopeState& state, const RopeState& goal, int node,
                          const BatchRolloutFn& dynamics, const PlanConfig& cfg, Rng& rng) {
  CandidateBatch batch;
  batch.node = node;
  batch.sequences = sample_candidates(state, goal, node, cfg, rng);
  const auto rollouts = dynamics(state, batch.sequences);

  batch.costs.resize(static_cast<Eigen::Index>(rollouts.size()));
  for (std::size_t k = 0; k < rollouts.size(); ++k)
    batch.costs(static_cast<Eigen::Index>(k)) =
        trajectory_cost(rollouts[k], goal, cfg.terminal_cost_only);
  batch.weights = mppi_weights(batch.costs, cfg.alpha);

  const int T = cfg.horizon;
  batch.averaged.assign(static_cast<std::size_t>(T), Action{node, Vec2::Zero()});
  for (std::size_t k = 0; k < batch.sequences.size(); ++k) {
    const Scalar w = batch.weights(static_cast<Eigen::Index>(k));
    for (int t = 0; t < T; ++t)
      batch.averaged[static_cast<std::size_t>(t)].delta +=
          w * batch.sequences[k][static_cast<std::size_t>(t)].delta;
  }
  const auto avg_roll = dynamics(state, {batch.averaged});
  batch.averaged_cost = trajectory_cost(avg_roll[0], goal, cfg.terminal_cost_only);
  return batch;
}

PlanResult plan(const RopeState& state, const RopeState& goal, const BatchRolloutFn& dynamics,
                const PlanConfig& cfg, std::uint64_t seed) {
  if (state.n_points() != goal.n_points())
    throw std::invalid_argument("plan: state and goal sizes differ");
  std::vector<int> nodes;
  for (int i = 0; i < state.n_points(); i += std::max(1, cfg.grasp_stride)) nodes.push_back(i);

  Rng master(seed);
  std::vector<CandidateBatch> results(nodes.size());
  parallel_for(nodes.size(), cfg.threads, [&](std::size_t ni) {
    Rng rng = master.spawn(static_cast<std::uint64_t>(nodes[ni]));
    results[ni] = mppi_inner(state, goal, nodes[ni], dynamics, cfg, rng);
  });

  std::size_t best = 0;
  for (std::size_t ni = 1; ni < results.size(); ++ni)
    if (results[ni].averaged_cost < results[best].averaged_cost) best = ni;

  PlanResult out;
  out.node = results[best].node;
  out.sequence = results[best].averaged;
  out.predicted_cost = results[best].averaged_cost;
  return out;
}

}  // namespace strand
