#pragma once

#include <vector>

#include "strand/refine.hpp"

namespace strand {

/// Batch refinement over an image sequence with an automatic curriculum:
/// only frames whose current loss clears a threshold are refined; the
/// threshold decays by 0.98 when the cleared count stagnates. Temporal
/// consistency re-initializes a failing frame from a clearing neighbor
/// (the neighbor state held fixed) before refining it.
///
/// Frame scores are image losses centered by W*H*log(2) (the
/// indifferent-membership level), so well-fit frames score negative and the
/// multiplicative decay loosens the threshold, as in the finetuning
/// algorithm this adapts.
struct CurriculumConfig {
  Scalar quantile = 0.10;  // initial threshold quantile of the frame scores
  int max_epochs = 12;
  int patience = 2;     // stagnant epochs before the threshold decays
  Scalar decay = 0.98;
  bool use_curriculum = true;   // false: every frame refined every epoch
  bool temporal_consistency = true;
  RenderConfig refine;  // per-epoch refinement budget
  int threads = 1;
};

struct CurriculumEpoch {
  int epoch = 0;
  Scalar threshold = 0.0;
  int cleared = 0;       // frames below threshold at epoch start
  Scalar mean_loss = 0.0;  // mean centered frame loss after the epoch
};

struct CurriculumResult {
  std::vector<RopeState> states;
  std::vector<Scalar> losses;  // centered frame losses
  std::vector<CurriculumEpoch> trace;
};

/// Empirical q-quantile, lower interpolation: the ceil(q*n)-th smallest.
Scalar quantile_threshold(std::vector<Scalar> losses, Scalar q);

/// Centered frame score used throughout the curriculum.
Scalar centered_frame_loss(const RopeState& state, Scalar sigma, const Image& img,
                           MaxMode mode = MaxMode::smooth, Scalar tau = kSmoothTau);

CurriculumResult run_curriculum(const std::vector<Image>& frames,
                                const std::vector<RopeState>& init_states,
                                const CurriculumConfig& cfg);

}  // namespace strand
