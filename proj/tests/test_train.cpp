#include <doctest.h>

#include "strand/train.hpp"

using namespace strand;

namespace {
Dataset small_dataset(int sequences, int steps, std::uint64_t seed) {
  DatasetConfig cfg;
  cfg.n_sequences = sequences;
  cfg.steps_per_sequence = steps;
  cfg.sim.n_nodes = 9;
  cfg.sim.substeps = 300;
  cfg.sim.settle_extra = 300;
  return generate_dataset(cfg, seed, 2);
}
}  // namespace

TEST_CASE("zero epochs returns the seeded initialization unchanged") {
  const Dataset ds = small_dataset(1, 8, 3);
  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.epochs = 0;
  cfg.seed = 77;
  const TrainResult r = train_dynamics(ds, cfg);
  CHECK(r.history.empty());

  Rng rng(cfg.seed);
  const LstmModel fresh = init_lstm(cfg.hidden, rng);
  CHECK((r.model.fwd.w_x - fresh.fwd.w_x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.model.w_zl - fresh.w_zl).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training reduces held-out error and is deterministic") {
  const Dataset ds = small_dataset(6, 40, 5);
  TrainConfig cfg;
  cfg.hidden = 16;
  cfg.epochs = 8;
  cfg.batch_size = 16;
  cfg.seed = 9;
  cfg.threads = 2;
  const TrainResult a = train_dynamics(ds, cfg);
  REQUIRE(a.history.size() == 8);
  CHECK(a.history.back().val_avg_dev < a.history.front().val_avg_dev);

  const TrainResult b = train_dynamics(ds, cfg);
  CHECK((a.model.fwd.w_x - b.model.fwd.w_x).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.history.back().val_avg_dev == b.history.back().val_avg_dev);

  TrainConfig single = cfg;
  single.threads = 1;
  const TrainResult c = train_dynamics(ds, single);
  CHECK((a.model.fwd.w_x - c.model.fwd.w_x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training errors") {
  Dataset empty;
  TrainConfig cfg;
  CHECK_THROWS_AS(train_dynamics(empty, cfg), std::invalid_argument);
  const Dataset ds = small_dataset(1, 4, 7);
  TrainConfig bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(train_dynamics(ds, bad), std::invalid_argument);
}
