#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "oracles.hpp"
#include "strand/lstm.hpp"

using namespace strand;

namespace {
RopeState random_world_rope(Rng& rng, int n) {
  RopeState s;
  s.frame = Frame::world;
  s.points.resize(2, n);
  for (int i = 0; i < n; ++i)
    s.points.col(i) = Vec2(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
  return s;
}

// Flatten / restore every trainable block in the save order.
std::vector<Scalar> flatten(const LstmModel& m) {
  std::vector<Scalar> x;
  auto push = [&x](const Scalar* d, Eigen::Index n) { x.insert(x.end(), d, d + n); };
  for (const LstmCell* c : {&m.fwd, &m.rev}) {
    push(c->w_x.data(), c->w_x.size());
    push(c->w_h.data(), c->w_h.size());
    push(c->b.data(), c->b.size());
  }
  push(m.w_zl.data(), m.w_zl.size());
  push(m.w_zr.data(), m.w_zr.size());
  push(m.w_in.data(), m.w_in.size());
  return x;
}

void unflatten(const std::vector<Scalar>& x, LstmModel& m) {
  std::size_t k = 0;
  auto pull = [&x, &k](Scalar* d, Eigen::Index n) {
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(k),
              x.begin() + static_cast<std::ptrdiff_t>(k + static_cast<std::size_t>(n)), d);
    k += static_cast<std::size_t>(n);
  };
  for (LstmCell* c : {&m.fwd, &m.rev}) {
    pull(c->w_x.data(), c->w_x.size());
    pull(c->w_h.data(), c->w_h.size());
    pull(c->b.data(), c->b.size());
  }
  pull(m.w_zl.data(), m.w_zl.size());
  pull(m.w_zr.data(), m.w_zr.size());
  pull(m.w_in.data(), m.w_in.size());
}
}  // namespace

TEST_CASE("constructed weights reproduce input positions") {
  Rng rng(7);
  LstmModel m = init_lstm(8, rng);
  m.fwd.w_x.setZero();
  m.fwd.w_h.setZero();
  m.fwd.b.setZero();
  m.rev = m.fwd;
  m.w_zl.setZero();
  m.w_zr.setZero();
  m.w_in.setZero();
  m.w_in(0, 0) = 1.0;
  m.w_in(1, 1) = 1.0;  // y = [I2 0 0] x

  const RopeState s = random_world_rope(rng, 7);
  const RopeState out = lstm_forward(m, s, Action{3, Vec2(0.01, 0.0)});
  CHECK(max_deviation(out, s) < 1e-12);
}

TEST_CASE("paper configuration shapes: 65 nodes, 256 hidden") {
  Rng rng(11);
  const LstmModel m = init_lstm(256, rng);
  CHECK(m.fwd.w_h.rows() == 1024);
  CHECK(m.fwd.w_h.cols() == 256);
  const RopeState s = random_world_rope(rng, 65);
  const RopeState out = lstm_forward(m, s, Action{10, Vec2(0.02, 0.0)});
  CHECK(out.n_points() == 65);
  CHECK(out.points.allFinite());
}

TEST_CASE("chain reversal symmetry") {
  Rng rng(13);
  const LstmModel m = init_lstm(16, rng);
  const RopeState s = random_world_rope(rng, 9);
  const Action a{2, Vec2(0.015, -0.01)};
  const RopeState out = lstm_forward(m, s, a);

  // reverse the node order and swap the two cells' roles
  LstmModel swapped = m;
  std::swap(swapped.fwd, swapped.rev);
  const auto tmp = swapped.w_zl;
  swapped.w_zl = swapped.w_zr;
  swapped.w_zr = tmp;
  RopeState rev = s;
  rev.points = s.points.rowwise().reverse();
  const Action ra{static_cast<int>(s.n_points()) - 1 - a.grasp_index, a.delta};
  const RopeState out_rev = lstm_forward(swapped, rev, ra);

  RopeState out_rev_back = out_rev;
  out_rev_back.points = out_rev.points.rowwise().reverse();
  CHECK(max_deviation(out, out_rev_back) < 1e-12);
}

TEST_CASE("relu6 bounds the gated activation site") {
  // Route single hidden units straight to the output: y = (z_0, z_1) of the
  // forward chain, z = o .* relu6(c). Saturating the cell keeps y in [0, 6).
  Rng rng(17);
  LstmModel m = init_lstm(8, rng);
  m.fwd.w_x *= 200.0;  // drive |c| far beyond 6
  m.fwd.b.segment(3 * 8, 8).setConstant(50.0);  // output gate ~ 1
  m.w_zl.setZero();
  m.w_zl(0, 0) = 1.0;
  m.w_zl(1, 1) = 1.0;
  m.w_zr.setZero();
  m.w_in.setZero();
  Rng points(18);
  for (int trial = 0; trial < 8; ++trial) {
    const RopeState s = random_world_rope(points, 6);
    const RopeState out = lstm_forward(m, s, Action{0, Vec2(0.01, 0.01)});
    CHECK(out.points.minCoeff() >= 0.0);
    CHECK(out.points.maxCoeff() < 6.0 + 1e-12);
  }
}

TEST_CASE("gradients match central finite differences (both relu6 sites)") {
  for (const Relu6Site site : {Relu6Site::cell_output, Relu6Site::candidate_and_output}) {
    Rng rng(19);
    LstmModel m = init_lstm(8, rng, site);
    const int N = 5;
    std::vector<Transition> batch;
    for (int b = 0; b < 2; ++b) {
      Transition tr;
      tr.state_before = random_world_rope(rng, N);
      tr.action = Action{static_cast<int>(rng.uniform_index(N)), Vec2(0.02, -0.01)};
      tr.state_after = random_world_rope(rng, N);
      batch.push_back(tr);
    }
    const BackwardResult br = lstm_backward(m, batch);

    LstmModel probe = m;
    auto f = [&](const std::vector<Scalar>& x) {
      unflatten(x, probe);
      // forward-only loss, recomputed independently of the backward pass
      Scalar loss = 0.0;
      for (const Transition& tr : batch) {
        const RopeState pred = lstm_forward(probe, tr.state_before, tr.action);
        loss += (pred.points - tr.state_after.points).squaredNorm();
      }
      return loss / static_cast<Scalar>(batch.size() * N);
    };
    std::vector<Scalar> fd;
    oracle::central_differences(f, flatten(m), 1e-6, fd);
    const std::vector<Scalar> analytic = [&] {
      LstmModel g;
      g.hidden = m.hidden;
      g.fwd = br.grads.fwd;
      g.rev = br.grads.rev;
      g.w_zl = br.grads.w_zl;
      g.w_zr = br.grads.w_zr;
      g.w_in = br.grads.w_in;
      return flatten(g);
    }();

    REQUIRE(fd.size() == analytic.size());
    Scalar worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      const Scalar denom = std::max({std::abs(fd[i]), std::abs(analytic[i]), 1e-6});
      worst = std::max(worst, std::abs(fd[i] - analytic[i]) / denom);
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("zero-loss fixture has vanishing gradients") {
  Rng rng(23);
  LstmModel m = init_lstm(8, rng);
  const RopeState s = random_world_rope(rng, 5);
  const Action a{1, Vec2(0.01, 0.02)};
  // target := model output, so the loss is exactly zero
  const RopeState pred = lstm_forward(m, s, a);
  const BackwardResult br = lstm_backward(m, {Transition{s, a, pred}});
  CHECK(br.loss < 1e-20);
  CHECK(br.grads.fwd.w_x.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(br.grads.rev.w_h.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(br.grads.w_zl.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("batch gradient is the mean of single-sample gradients") {
  Rng rng(29);
  LstmModel m = init_lstm(8, rng);
  std::vector<Transition> batch;
  for (int b = 0; b < 2; ++b)
    batch.push_back(Transition{random_world_rope(rng, 5),
                               Action{static_cast<int>(rng.uniform_index(5)), Vec2(0.01, 0.01)},
                               random_world_rope(rng, 5)});
  const BackwardResult both = lstm_backward(m, batch);
  const BackwardResult first = lstm_backward(m, {batch[0]});
  const BackwardResult second = lstm_backward(m, {batch[1]});
  CHECK(both.loss ==
        doctest::Approx(0.5 * (first.loss + second.loss)).epsilon(1e-12));
  const MatX mean_wx = 0.5 * (first.grads.fwd.w_x + second.grads.fwd.w_x);
  CHECK((both.grads.fwd.w_x - mean_wx).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("batched forward and rollout equal per-item results exactly") {
  Rng rng(31);
  const LstmModel m = init_lstm(24, rng);
  const RopeState start = random_world_rope(rng, 9);

  std::vector<std::vector<Action>> seqs;
  for (int k = 0; k < 7; ++k) {
    std::vector<Action> seq;
    for (int t = 0; t < 4; ++t)
      seq.push_back(Action{static_cast<int>(rng.uniform_index(9)),
                           Vec2(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02))});
    seqs.push_back(seq);
  }
  const auto batched = lstm_rollout_batch(m, start, seqs);
  REQUIRE(batched.size() == seqs.size());
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    const auto single = lstm_rollout(m, start, seqs[k]);
    REQUIRE(single.size() == batched[k].size());
    for (std::size_t t = 0; t < single.size(); ++t)
      CHECK((single[t].points - batched[k][t].points).cwiseAbs().maxCoeff() == 0.0);
  }

  CHECK(lstm_rollout(m, start, {}).empty());
}

TEST_CASE("model save/load round-trip, truncation, metadata") {
  Rng rng(37);
  LstmModel m = init_lstm(12, rng);
  m.train_seed = 424242;
  m.norm.pos_mean = Vec2(0.01, -0.02);
  m.norm.pos_scale = 0.17;
  m.norm.act_scale = 0.02;
  const std::string path = "lstm_io_test.bin";
  save_model(m, path);
  const LstmModel back = load_model(path);
  CHECK(back.hidden == m.hidden);
  CHECK(back.train_seed == m.train_seed);
  CHECK(back.norm.pos_scale == m.norm.pos_scale);

  const RopeState s = random_world_rope(rng, 7);
  const Action a{3, Vec2(0.01, 0.005)};
  const RopeState out1 = lstm_forward(m, s, a);
  const RopeState out2 = lstm_forward(back, s, a);
  CHECK((out1.points - out2.points).cwiseAbs().maxCoeff() == 0.0);

  // truncated file errors
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out("lstm_truncated.bin", std::ios::binary);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size() / 2));
  }
  CHECK_THROWS_AS(load_model("lstm_truncated.bin"), std::runtime_error);
  std::remove("lstm_truncated.bin");
  std::remove(path.c_str());
}
