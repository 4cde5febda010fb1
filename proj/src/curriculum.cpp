#include "strand/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "strand/parallel.hpp"

namespace strand {

Scalar quantile_threshold(std::vector<Scalar> losses, Scalar q) {
  if (losses.empty()) throw std::invalid_argument("quantile_threshold: empty losses");
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile_threshold: q must be in (0,1)");
  std::sort(losses.begin(), losses.end());
  const std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(q * static_cast<Scalar>(losses.size()))));
  return losses[std::min(k, losses.size()) - 1];
}

Scalar centered_frame_loss(const RopeState& state, Scalar sigma, const Image& img, MaxMode mode,
                           Scalar tau) {
  const Scalar base = static_cast<Scalar>(img.n_pixels()) * std::log(2.0);
  return frame_image_loss(state, sigma, img, mode, tau) - base;
}

namespace {
constexpr Scalar kBadFrame = std::numeric_limits<Scalar>::infinity();

Scalar safe_score(const RopeState& state, Scalar sigma, const Image& img, MaxMode mode,
                  Scalar tau) {
  try {
    return centered_frame_loss(state, sigma, img, mode, tau);
  } catch (const std::exception&) {
    return kBadFrame;  // degenerate membership; frame never clears
  }
}
}  // namespace

CurriculumResult run_curriculum(const std::vector<Image>& frames,
                                const std::vector<RopeState>& init_states,
                                const CurriculumConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("run_curriculum: empty sequence");
  if (frames.size() != init_states.size())
    throw std::invalid_argument("run_curriculum: frame/state count mismatch");

  const std::size_t n = frames.size();
  CurriculumResult res;
  res.states = init_states;
  res.losses.assign(n, 0.0);

  const MaxMode mode = cfg.refine.mode;
  const Scalar tau = cfg.refine.tau;
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    res.losses[i] = safe_score(res.states[i], cfg.refine.sigma, frames[i], mode, tau);
  });

  Scalar thresh = std::numeric_limits<Scalar>::infinity();
  if (cfg.use_curriculum) {
    std::vector<Scalar> finite;
    for (const Scalar l : res.losses)
      if (std::isfinite(l)) finite.push_back(l);
    thresh = finite.empty() ? 0.0 : quantile_threshold(finite, cfg.quantile);
  }

  // first_clear_loss guards refined frames against regression.
  std::vector<Scalar> guard(n, kBadFrame);
  std::vector<bool> guarded(n, false);
  int best_cleared = -1;
  int stagnant = 0;

  auto refine_frame = [&](std::size_t i) {
    RefineResult rr;
    try {
      rr = refine_state(res.states[i], frames[i], cfg.refine);
    } catch (const std::exception&) {
      res.losses[i] = safe_score(res.states[i], cfg.refine.sigma, frames[i], mode, tau);
      return;  // degenerate frame; state kept as-is
    }
    const Scalar new_loss = safe_score(rr.state, cfg.refine.sigma, frames[i], mode, tau);
    if (guarded[i] && new_loss > guard[i]) return;  // keep the better iterate
    res.states[i] = rr.state;
    res.losses[i] = new_loss;
  };

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<bool> cleared(n, false);
    int n_cleared = 0;
    for (std::size_t i = 0; i < n; ++i) {
      cleared[i] = res.losses[i] < thresh;
      if (cleared[i]) ++n_cleared;
    }

    if (cfg.use_curriculum) {
      if (n_cleared > best_cleared) {
        best_cleared = n_cleared;
        stagnant = 0;
      } else {
        ++stagnant;
        if (stagnant >= cfg.patience) {
          thresh *= cfg.decay;
          stagnant = 0;
        }
      }
    }

    CurriculumEpoch row;
    row.epoch = epoch;
    row.threshold = thresh;
    row.cleared = n_cleared;

    if (static_cast<std::size_t>(n_cleared) == n && cfg.use_curriculum) {
      row.mean_loss = 0.0;
      for (const Scalar l : res.losses) row.mean_loss += l;
      row.mean_loss /= static_cast<Scalar>(n);
      res.trace.push_back(row);
      break;
    }

    // Refinement pass over eligible frames (all of them without curriculum).
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < n; ++i)
      if (!cfg.use_curriculum || cleared[i]) eligible.push_back(i);
    parallel_for(eligible.size(), cfg.threads, [&](std::size_t k) { refine_frame(eligible[k]); });
    for (const std::size_t i : eligible) {
      if (cfg.use_curriculum && res.losses[i] < thresh && !guarded[i]) {
        guarded[i] = true;
        guard[i] = res.losses[i];
      } else if (guarded[i]) {
        guard[i] = std::min(guard[i], res.losses[i]);
      }
    }

    // Temporal pass: a clearing frame re-initializes a failing neighbor
    // (statuses from the epoch-start snapshot), which is then refined.
    if (cfg.use_curriculum && cfg.temporal_consistency) {
      std::vector<std::size_t> pulled;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        if (cleared[i] && !cleared[i + 1]) {
          res.states[i + 1] = res.states[i];
          pulled.push_back(i + 1);
        } else if (!cleared[i] && cleared[i + 1]) {
          res.states[i] = res.states[i + 1];
          pulled.push_back(i);
        }
      }
      std::sort(pulled.begin(), pulled.end());
      pulled.erase(std::unique(pulled.begin(), pulled.end()), pulled.end());
      parallel_for(pulled.size(), cfg.threads, [&](std::size_t k) { refine_frame(pulled[k]); });
    }

    row.mean_loss = 0.0;
    for (const Scalar l : res.losses) row.mean_loss += std::isfinite(l) ? l : 0.0;
    row.mean_loss /= static_cast<Scalar>(n);
    res.trace.push_back(row);
  }
  return res;
}

}  // namespace strand
