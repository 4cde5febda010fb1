#include "strand/refine.hpp"

#include <cmath>
#include <stdexcept>

namespace strand {

namespace {

struct LevelObjective {
  const Image* img;
  const RenderConfig* cfg;
  MembershipField pn;  // gmm target, fixed during gradient steps
  Vec3 mu1, mu2;       // l2 cluster means

  // Recomputes the alternation-level targets from the current state.
  void refresh(const RopeState& state, Scalar sigma) {
    const MembershipField p =
        soft_render(state, sigma, img->width, img->height, cfg->mode, cfg->tau);
    const GmmParams gmm = m_step(*img, p);
    if (cfg->loss == LossKind::gmm) {
      pn = e_step(*img, gmm);
    } else {
      mu1 = gmm.mean[0];
      mu2 = gmm.mean[1];
    }
  }

  ObjectiveEval eval(const RopeState& state, Scalar sigma, bool want_grad,
                     const ClipMask* frozen = nullptr) const {
    ObjectiveConfig oc;
    oc.mode = cfg->mode;
    oc.tau = cfg->tau;
    oc.clip_occlusion = (cfg->loss == LossKind::gmm) && cfg->clip_occlusion;
    oc.want_gradient = want_grad;
    oc.threads = cfg->threads;
    if (cfg->loss == LossKind::gmm) return gmm_objective(state, sigma, pn, oc, frozen);
    return l2_objective(state, sigma, *img, mu1, mu2, oc);
  }
};

}  // namespace

RefineResult refine_state(const RopeState& init, const Image& img, const RenderConfig& cfg) {
  init.validate();
  if (init.frame != Frame::image)
    throw std::invalid_argument("refine_state: init must be in image frame");
  if (!(cfg.sigma > 0.0)) throw std::invalid_argument("refine_state: sigma must be positive");

  RefineResult res;
  res.state = init;
  Scalar sigma = cfg.sigma;

  const Eigen::Index target =
      cfg.target_segments > 0 ? cfg.target_segments : init.n_segments();
  Eigen::Index reach = init.n_segments();
  while (reach < target) reach *= 2;
  if (reach != target)
    throw std::invalid_argument("refine_state: target_segments must be init segments times 2^k");

  LevelObjective obj{&img, &cfg, {}, Vec3::Zero(), Vec3::Zero()};

  for (;;) {
    const Eigen::Index level = res.state.n_segments();
    for (int alt = 0; alt < cfg.em_alternations; ++alt) {
      obj.refresh(res.state, sigma);
      ObjectiveEval cur = obj.eval(res.state, sigma, true);
      RefineRound round;
      round.level_segments = level;
      round.alternation = alt;
      round.loss_before = cur.loss;

      for (int step = 0; step < cfg.max_grad_steps; ++step) {
        const Scalar gmax = cur.grad_points.colwise().norm().maxCoeff();
        const Scalar gsig = cfg.optimize_sigma ? std::abs(cur.grad_sigma) : 0.0;
        const Scalar scale_ref = std::max(gmax, gsig);
        if (scale_ref < 1e-12) break;

        const ClipMask* frozen = cur.clip_mask.size() ? &cur.clip_mask : nullptr;
        bool accepted = false;
        Scalar step_px = cfg.step_init_px;
        for (int bt = 0; bt < cfg.max_backtracks; ++bt, step_px *= 0.5) {
          const Scalar alpha = step_px / scale_ref;
          RopeState trial = res.state;
          trial.points -= alpha * cur.grad_points;
          Scalar trial_sigma = sigma;
          if (cfg.optimize_sigma)
            trial_sigma = std::max(cfg.min_sigma, sigma - alpha * cur.grad_sigma);
          const ObjectiveEval tev = obj.eval(trial, trial_sigma, false, frozen);
          if (tev.loss < cur.loss) {
            res.state = trial;
            sigma = trial_sigma;
            accepted = true;
            break;
          }
        }
        if (!accepted) break;
        cur = obj.eval(res.state, sigma, true);
        ++round.accepted_steps;
      }
      round.loss_after = cur.loss;
      round.sigma = sigma;
      res.rounds.push_back(round);
    }

    if (level >= target) break;
    res.state = subdivide(res.state);
    if (cfg.reparameterize)
      res.state = resample_equidistant(res.state, res.state.n_points());
  }

  if (cfg.reparameterize)
    res.state = resample_equidistant(res.state, res.state.n_points());

  obj.refresh(res.state, sigma);
  res.final_loss = obj.eval(res.state, sigma, false).full_loss;
  res.final_sigma = sigma;
  return res;
}

Scalar frame_image_loss(const RopeState& state, Scalar sigma, const Image& img, MaxMode mode,
                        Scalar tau) {
  const MembershipField p = soft_render(state, sigma, img.width, img.height, mode, tau);
  const GmmParams gmm = m_step(img, p);
  const MembershipField pn = e_step(img, gmm);
  return image_loss(p, pn);
}

}  // namespace strand
