#pragma once

#include "strand/lstm.hpp"

namespace strand {

struct TrainConfig {
  int hidden = 64;
  Relu6Site relu6_site = Relu6Site::cell_output;
  bool predict_delta = false;
  Scalar learning_rate = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar adam_eps = 1e-8;
  int batch_size = 32;
  int epochs = 20;
  Scalar train_fraction = 0.9;  // rest is the held-out split
  std::uint64_t seed = 0;
  int threads = 1;
};

struct EpochStats {
  int epoch = 0;
  Scalar train_loss = 0.0;   // mean per-sample loss over the epoch
  Scalar val_avg_dev = 0.0;  // held-out one-step deviations, meters
  Scalar val_max_dev = 0.0;
};

struct TrainResult {
  LstmModel model;
  std::vector<EpochStats> history;
};

/// Adam on the one-step prediction loss. Deterministic under (dataset, cfg):
/// shuffling, init, and the chunked parallel gradient reduction are all fixed
/// by the seed, independent of the worker count.
TrainResult train_dynamics(const Dataset& dataset, const TrainConfig& cfg);

/// Held-out metrics of a model on a transition list.
struct EvalMetrics {
  Scalar avg_dev = 0.0;
  Scalar max_dev = 0.0;
};
EvalMetrics evaluate_one_step(const LstmModel& model, const std::vector<Transition>& transitions,
                              int threads = 1);

}  // namespace strand
