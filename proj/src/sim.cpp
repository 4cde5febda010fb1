#include "strand/sim.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "strand/parallel.hpp"

namespace strand {

void SimParams::validate() const {
  const bool ok = n_nodes >= 2 && node_mass > 0.0 && k_struct > 0.0 && k_bend >= 0.0 &&
                  damping >= 0.0 && friction_coeff >= 0.0 && dt > 0.0 && substeps > 0 &&
                  settle_extra >= 0;
  if (!ok) throw std::invalid_argument("SimParams: non-positive parameter");
}

namespace {

// Spring forces against the rest lengths captured at action start. Rest
// lengths follow the entry state, so each step is a local perturbation and
// curvature is not erased by the bend springs (soft ropes keep their shape).
struct Workspace {
  Mat2X pos, vel, force;
  VecX rest1, rest2;
};

void accumulate_forces(Workspace& w, const SimParams& p) {
  const Eigen::Index n = w.pos.cols();
  w.force.setZero(2, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const Vec2 d = w.pos.col(i + 1) - w.pos.col(i);
    const Scalar len = d.norm();
    if (len > 1e-12) {
      const Vec2 f = p.k_struct * (len - w.rest1(i)) / len * d;
      w.force.col(i) += f;
      w.force.col(i + 1) -= f;
    }
  }
  if (p.k_bend > 0.0) {
    for (Eigen::Index i = 0; i + 2 < n; ++i) {
      const Vec2 d = w.pos.col(i + 2) - w.pos.col(i);
      const Scalar len = d.norm();
      if (len > 1e-12) {
        const Vec2 f = p.k_bend * (len - w.rest2(i)) / len * d;
        w.force.col(i) += f;
        w.force.col(i + 2) -= f;
      }
    }
  }
  const Scalar fric = p.friction_coeff * p.node_mass * kGravity;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec2 v = w.vel.col(i);
    const Scalar speed = v.norm();
    w.force.col(i) -= p.damping * v;
    if (speed > 1e-15)
      w.force.col(i) -= fric * std::tanh(speed / kFrictionVelEps) / speed * v;
  }
}

void check_finite(const Workspace& w, const SimParams& p) {
  if (w.pos.allFinite() && w.pos.cwiseAbs().maxCoeff() < 1e3) return;
  std::ostringstream msg;
  msg << "sim_step: divergence (dt=" << p.dt << ", k_struct=" << p.k_struct
      << ", k_bend=" << p.k_bend << ", node_mass=" << p.node_mass
      << ", damping=" << p.damping << "); reduce dt or stiffness";
  throw std::runtime_error(msg.str());
}

}  // namespace

RopeState sim_step(const RopeState& state, const Action& action, const SimParams& params) {
  params.validate();
  state.validate();
  if (state.frame != Frame::world)
    throw std::invalid_argument("sim_step: state must be in world frame");
  const Eigen::Index n = state.n_points();
  if (action.grasp_index < 0 || action.grasp_index >= n)
    throw std::invalid_argument("sim_step: grasp index out of range");
  if (!action.delta.allFinite() || action.delta.norm() > 0.05)
    throw std::invalid_argument("sim_step: action displacement invalid (cap 0.05 m)");

  Workspace w;
  w.pos = state.points;
  w.vel = Mat2X::Zero(2, n);
  w.rest1.resize(n - 1);
  for (Eigen::Index i = 0; i + 1 < n; ++i)
    w.rest1(i) = (w.pos.col(i + 1) - w.pos.col(i)).norm();
  w.rest2.resize(std::max<Eigen::Index>(n - 2, 0));
  for (Eigen::Index i = 0; i + 2 < n; ++i)
    w.rest2(i) = (w.pos.col(i + 2) - w.pos.col(i)).norm();

  const Eigen::Index g = action.grasp_index;
  const Vec2 start = w.pos.col(g);
  const Vec2 target = start + action.delta;
  const Scalar inv_mass = 1.0 / params.node_mass;

  const int total_cap = params.substeps + params.settle_extra;
  for (int step = 0; step < total_cap; ++step) {
    const bool dragging = step < params.substeps;
    accumulate_forces(w, params);
    w.vel += params.dt * inv_mass * w.force;
    if (dragging) {
      // Position-constrained grasp: exact linear schedule toward the target.
      const Scalar f0 = static_cast<Scalar>(step) / params.substeps;
      const Scalar f1 = static_cast<Scalar>(step + 1) / params.substeps;
      const Vec2 p0 = start + f0 * action.delta;
      const Vec2 p1 = start + f1 * action.delta;
      w.vel.col(g) = (p1 - p0) / params.dt;
      w.pos += params.dt * w.vel;
      w.pos.col(g) = p1;
    } else {
      w.vel.col(g).setZero();
      w.pos += params.dt * w.vel;
      w.pos.col(g) = target;
      const Scalar vmax = w.vel.colwise().norm().maxCoeff();
      if (vmax < kSettleSpeed) break;
    }
    if ((step & 255) == 0) check_finite(w, params);
  }
  check_finite(w, params);
  w.pos.col(g) = target;

  RopeState out;
  out.frame = Frame::world;
  out.points = w.pos;
  return out;
}

std::vector<RopeState> sim_rollout(const RopeState& state, const std::vector<Action>& actions,
                                   const SimParams& params) {
  std::vector<RopeState> out;
  out.reserve(actions.size());
  RopeState cur = state;
  for (const Action& a : actions) {
    cur = sim_step(cur, a, params);
    out.push_back(cur);
  }
  return out;
}

Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed, int threads) {
  config.sim.validate();
  Dataset ds;
  ds.config = config;
  ds.seed = seed;
  const int steps = config.steps_per_sequence;
  ds.transitions.resize(static_cast<std::size_t>(config.n_sequences) * steps);

  Rng master(seed);
  parallel_for(static_cast<std::size_t>(config.n_sequences), threads, [&](std::size_t s) {
    Rng rng = master.spawn(s);
    RopeGenConfig rope_cfg = config.rope;
    rope_cfg.n_points = config.sim.n_nodes;
    RopeState cur = random_rope(rng, rope_cfg);
    for (int t = 0; t < steps; ++t) {
      Action a;
      a.grasp_index = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cur.n_points())));
      const Scalar mag = rng.uniform(config.action_min, config.action_max);
      const Scalar ang = rng.uniform(0.0, 2.0 * M_PI);
      a.delta = mag * Vec2(std::cos(ang), std::sin(ang));
      RopeState next = sim_step(cur, a, config.sim);
      ds.transitions[s * static_cast<std::size_t>(steps) + static_cast<std::size_t>(t)] =
          Transition{cur, a, next};
      cur = std::move(next);
    }
  });
  return ds;
}

namespace {
nlohmann::json points_to_json(const Mat2X& pts) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < pts.cols(); ++i) arr.push_back({pts(0, i), pts(1, i)});
  return arr;
}

Mat2X points_from_json(const nlohmann::json& arr) {
  Mat2X pts(2, static_cast<Eigen::Index>(arr.size()));
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    pts(0, i) = arr[static_cast<std::size_t>(i)].at(0).get<double>();
    pts(1, i) = arr[static_cast<std::size_t>(i)].at(1).get<double>();
  }
  return pts;
}
}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  nlohmann::json header;
  header["kind"] = "rope_transitions";
  header["seed"] = ds.seed;
  header["n_sequences"] = ds.config.n_sequences;
  header["steps_per_sequence"] = ds.config.steps_per_sequence;
  header["action_min"] = ds.config.action_min;
  header["action_max"] = ds.config.action_max;
  const SimParams& p = ds.config.sim;
  header["sim"] = {{"n_nodes", p.n_nodes},     {"node_mass", p.node_mass},
                   {"k_struct", p.k_struct},   {"k_bend", p.k_bend},
                   {"damping", p.damping},     {"friction_coeff", p.friction_coeff},
                   {"dt", p.dt},               {"substeps", p.substeps},
                   {"settle_extra", p.settle_extra}};
  out << header.dump() << "\n";
  for (const Transition& tr : ds.transitions) {
    nlohmann::json rec;
    rec["before"] = points_to_json(tr.state_before.points);
    rec["action"] = {{"node", tr.action.grasp_index}, {"delta", {tr.action.delta.x(), tr.action.delta.y()}}};
    rec["after"] = points_to_json(tr.state_after.points);
    out << rec.dump() << "\n";
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty file " + path);
  const auto header = nlohmann::json::parse(line);
  if (header.value("kind", "") != "rope_transitions")
    throw std::runtime_error("load_dataset: not a transition dataset: " + path);

  Dataset ds;
  ds.seed = header.at("seed").get<std::uint64_t>();
  ds.config.n_sequences = header.at("n_sequences").get<int>();
  ds.config.steps_per_sequence = header.at("steps_per_sequence").get<int>();
  ds.config.action_min = header.at("action_min").get<double>();
  ds.config.action_max = header.at("action_max").get<double>();
  const auto& sim = header.at("sim");
  SimParams& p = ds.config.sim;
  p.n_nodes = sim.at("n_nodes").get<Eigen::Index>();
  p.node_mass = sim.at("node_mass").get<double>();
  p.k_struct = sim.at("k_struct").get<double>();
  p.k_bend = sim.at("k_bend").get<double>();
  p.damping = sim.at("damping").get<double>();
  p.friction_coeff = sim.at("friction_coeff").get<double>();
  p.dt = sim.at("dt").get<double>();
  p.substeps = sim.at("substeps").get<int>();
  p.settle_extra = sim.at("settle_extra").get<int>();

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    Transition tr;
    tr.state_before.frame = Frame::world;
    tr.state_before.points = points_from_json(rec.at("before"));
    tr.action.grasp_index = rec.at("action").at("node").get<int>();
    tr.action.delta = Vec2(rec.at("action").at("delta").at(0).get<double>(),
                           rec.at("action").at("delta").at(1).get<double>());
    tr.state_after.frame = Frame::world;
    tr.state_after.points = points_from_json(rec.at("after"));
    ds.transitions.push_back(std::move(tr));
  }
  return ds;
}

}  // namespace strand
