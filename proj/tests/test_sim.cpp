#include <doctest.h>

#include <cstdio>

#include "strand/sim.hpp"

using namespace strand;

namespace {
RopeState straight_rope(int n, Scalar length) {
  RopeState s;
  s.frame = Frame::world;
  s.points.resize(2, n);
  for (int i = 0; i < n; ++i)
    s.points.col(i) = Vec2(length * static_cast<Scalar>(i) / (n - 1), 0.0);
  return s;
}

SimParams fast_params(Eigen::Index n_nodes = 17) {
  SimParams p;
  p.n_nodes = n_nodes;
  p.substeps = 800;
  p.settle_extra = 800;
  return p;
}
}  // namespace

TEST_CASE("sim_step zero action leaves the rope in place") {
  const RopeState s = straight_rope(17, 0.25);
  const RopeState after = sim_step(s, Action{8, Vec2::Zero()}, fast_params());
  CHECK(max_deviation(s, after) < 1e-6);
}

TEST_CASE("sim_step grasp constraint and rest-length preservation") {
  const RopeState s = straight_rope(17, 0.25);
  const Action a{16, Vec2(0.02, 0.01)};
  const SimParams p = fast_params();
  const RopeState after = sim_step(s, a, p);
  CHECK((after.points.col(16) - (s.points.col(16) + a.delta)).norm() < 1e-6);
  CHECK(std::abs(total_length(after) - total_length(s)) / total_length(s) < 0.02);
}

TEST_CASE("sim_step friction keeps the far end from following") {
  const RopeState s = straight_rope(17, 0.25);
  const Action a{0, Vec2(-0.02, 0.0)};  // drag the near end outward along the axis
  SimParams p = fast_params();
  p.friction_coeff = 0.8;
  const RopeState after = sim_step(s, a, p);
  const Scalar far_motion = (after.points.col(16) - s.points.col(16)).norm();
  CHECK(far_motion < 0.02);

  // quasi-static check against a much finer integration of the same drag
  SimParams fine = p;
  fine.dt = p.dt / 4.0;
  fine.substeps = p.substeps * 4;
  fine.settle_extra = p.settle_extra * 4;
  const RopeState after_fine = sim_step(s, a, fine);
  CHECK(avg_deviation(after, after_fine) < 2e-3);
}

TEST_CASE("sim_step is drag-rate insensitive in the quasi-static regime") {
  const RopeState s = straight_rope(17, 0.25);
  const Action a{4, Vec2(0.015, -0.02)};
  SimParams slow = fast_params();
  SimParams quick = slow;
  quick.substeps = slow.substeps / 4;
  const RopeState r_slow = sim_step(s, a, slow);
  const RopeState r_quick = sim_step(s, a, quick);
  CHECK(avg_deviation(r_slow, r_quick) < 2e-3);
}

TEST_CASE("sim_step determinism and error paths") {
  const RopeState s = straight_rope(17, 0.25);
  const Action a{8, Vec2(0.01, 0.02)};
  const SimParams p = fast_params();
  const RopeState r1 = sim_step(s, a, p);
  const RopeState r2 = sim_step(s, a, p);
  CHECK((r1.points - r2.points).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(sim_step(s, Action{99, Vec2::Zero()}, p), std::invalid_argument);
  CHECK_THROWS_AS(sim_step(s, Action{0, Vec2(0.2, 0.0)}, p), std::invalid_argument);

  SimParams bad = p;
  bad.dt = 0.05;  // far beyond the stability limit
  CHECK_THROWS_AS(sim_step(s, a, bad), std::runtime_error);
}

TEST_CASE("sim_rollout matches sequential steps") {
  const RopeState s = straight_rope(9, 0.25);
  SimParams p = fast_params(9);
  p.substeps = 300;
  p.settle_extra = 300;

  CHECK(sim_rollout(s, {}, p).empty());

  std::vector<Action> actions;
  Rng rng(101);
  for (int t = 0; t < 10; ++t) {
    const Scalar ang = rng.uniform(0.0, 2.0 * M_PI);
    actions.push_back(Action{static_cast<int>(rng.uniform_index(9)),
                             0.02 * Vec2(std::cos(ang), std::sin(ang))});
  }
  const auto rolled = sim_rollout(s, actions, p);
  REQUIRE(rolled.size() == actions.size());
  RopeState cur = s;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    cur = sim_step(cur, actions[t], p);
    CHECK((rolled[t].points - cur.points).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("generate_dataset structure, determinism, magnitudes") {
  DatasetConfig cfg;
  cfg.n_sequences = 2;
  cfg.steps_per_sequence = 5;
  cfg.sim = fast_params();
  cfg.sim.substeps = 300;
  cfg.sim.settle_extra = 300;

  const Dataset a = generate_dataset(cfg, 7);
  CHECK(a.transitions.size() == 10);
  const Dataset b = generate_dataset(cfg, 7, 2);  // two workers, same result
  REQUIRE(b.transitions.size() == a.transitions.size());
  for (std::size_t i = 0; i < a.transitions.size(); ++i) {
    CHECK((a.transitions[i].state_before.points - b.transitions[i].state_before.points)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK((a.transitions[i].state_after.points - b.transitions[i].state_after.points)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  for (const Transition& tr : a.transitions) {
    const Scalar mag = tr.action.delta.norm();
    CHECK(mag >= cfg.action_min);
    CHECK(mag <= cfg.action_max);
    // grasped node lands at before + delta
    CHECK((tr.state_after.points.col(tr.action.grasp_index) -
           (tr.state_before.points.col(tr.action.grasp_index) + tr.action.delta))
              .norm() < 1e-6);
  }
}

TEST_CASE("dataset file round-trip") {
  DatasetConfig cfg;
  cfg.n_sequences = 1;
  cfg.steps_per_sequence = 3;
  cfg.sim = fast_params(9);
  cfg.sim.substeps = 300;
  cfg.sim.settle_extra = 300;
  const Dataset ds = generate_dataset(cfg, 11);
  const std::string path = "dataset_io_test.jsonl";
  save_dataset(ds, path);
  const Dataset back = load_dataset(path);
  REQUIRE(back.transitions.size() == ds.transitions.size());
  CHECK(back.seed == ds.seed);
  CHECK(back.config.sim.k_struct == ds.config.sim.k_struct);
  for (std::size_t i = 0; i < ds.transitions.size(); ++i)
    CHECK((back.transitions[i].state_after.points - ds.transitions[i].state_after.points)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("settling dissipates energy monotonically") {
  // With no action the rope starts at rest and stays at rest.
  const RopeState s = straight_rope(9, 0.25);
  SimParams p = fast_params(9);
  p.substeps = 100;
  const RopeState after = sim_step(s, Action{4, Vec2::Zero()}, p);
  CHECK(max_deviation(s, after) < 1e-9);
}
