#pragma once

#include <string>
#include <vector>

#include "strand/rng.hpp"
#include "strand/rope.hpp"
#include "strand/sim.hpp"

namespace strand {

/// Where ReLU6 sits inside the cell. `cell_output` keeps the tanh candidate
/// and applies ReLU6 on the cell-state path feeding the output gate
/// (z = o .* relu6(c)); `candidate_and_output` additionally replaces the
/// candidate tanh, mirroring recurrent cells that take one activation for
/// both sites.
enum class Relu6Site : std::uint32_t { cell_output = 0, candidate_and_output = 1 };

/// One LSTM cell, shared across all nodes of a chain direction.
/// Gate row order in the stacked matrices: input, forget, candidate, output.
struct LstmCell {
  MatX w_x;  // 4H x 5
  MatX w_h;  // 4H x H
  VecX b;    // 4H
};

/// Input/target standardization stored with the model. Positions map through
/// (p - pos_mean) / pos_scale, actions through a / act_scale.
struct Normalization {
  Vec2 pos_mean = Vec2::Zero();
  Scalar pos_scale = 1.0;
  Scalar act_scale = 1.0;
};

/// Bi-directional chain LSTM: the same cell propagates along the rope in each
/// direction (h starts at zero on both ends) and a linear mixer maps
/// [z_fwd, z_rev, x] to the predicted node position:
/// y_i = w_zl z^L_i + w_zr z^R_i + w_in x_i.
struct LstmModel {
  int hidden = 256;
  Relu6Site relu6_site = Relu6Site::cell_output;
  bool predict_delta = false;  // y is the position change instead of the next position
  LstmCell fwd, rev;
  Eigen::Matrix<Scalar, 2, Eigen::Dynamic> w_zl, w_zr;  // 2 x H
  Eigen::Matrix<Scalar, 2, 5> w_in;
  Normalization norm;
  std::uint64_t train_seed = 0;

  void validate() const;
};

/// Fan-in scaled uniform init, forget-gate bias 1.
LstmModel init_lstm(int hidden, Rng& rng, Relu6Site site = Relu6Site::cell_output);

/// Per-node inputs x_i = (p_i, a_i, f_i): the action sits on the grasped node
/// only, f_i = 1 exactly there.
RopeState lstm_forward(const LstmModel& model, const RopeState& state, const Action& action);

/// Batched one-step prediction; column j of every internal product belongs to
/// item j, so results are bit-identical to per-item calls.
std::vector<RopeState> lstm_forward_batch(const LstmModel& model,
                                          const std::vector<RopeState>& states,
                                          const std::vector<Action>& actions);

std::vector<RopeState> lstm_rollout(const LstmModel& model, const RopeState& state,
                                    const std::vector<Action>& actions);

/// One rollout per (shared start, action sequence) pair; all sequences must
/// share the horizon length.
std::vector<std::vector<RopeState>> lstm_rollout_batch(
    const LstmModel& model, const RopeState& start,
    const std::vector<std::vector<Action>>& action_seqs);

struct LstmGradients {
  LstmCell fwd, rev;
  Eigen::Matrix<Scalar, 2, Eigen::Dynamic> w_zl, w_zr;
  Eigen::Matrix<Scalar, 2, 5> w_in;
};

/// Mean squared deviation (meters^2, averaged over batch and nodes) between
/// predicted and observed after-states, with exact gradients through both
/// chains.
struct BackwardResult {
  Scalar loss = 0.0;
  LstmGradients grads;
};
BackwardResult lstm_backward(const LstmModel& model, const std::vector<Transition>& batch);

/// Versioned binary layout, little-endian 64-bit floats; see docs/formats.md.
void save_model(const LstmModel& model, const std::string& path);
LstmModel load_model(const std::string& path);

}  // namespace strand
