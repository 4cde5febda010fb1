#include "strand/soft_render.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "strand/parallel.hpp"

namespace strand {

namespace {

struct Seg {
  Vec2 a, b, dir;
  Scalar len2;
  Scalar lo_x, hi_x, lo_y, hi_y;  // bbox expanded by the cull radius
};

std::vector<Seg> build_segments(const RopeState& state, Scalar cull_radius) {
  std::vector<Seg> segs(static_cast<std::size_t>(state.n_segments()));
  for (Eigen::Index i = 0; i < state.n_segments(); ++i) {
    Seg& s = segs[static_cast<std::size_t>(i)];
    s.a = state.points.col(i);
    s.b = state.points.col(i + 1);
    s.dir = s.b - s.a;
    s.len2 = s.dir.squaredNorm();
    s.lo_x = std::min(s.a.x(), s.b.x()) - cull_radius;
    s.hi_x = std::max(s.a.x(), s.b.x()) + cull_radius;
    s.lo_y = std::min(s.a.y(), s.b.y()) - cull_radius;
    s.hi_y = std::max(s.a.y(), s.b.y()) + cull_radius;
  }
  return segs;
}

struct SegHit {
  std::size_t index;
  Scalar d2;
  Scalar t;
  Vec2 r;   // pixel - closest point
  Scalar p;  // exp(-d2/sigma^2)
};

// Per-pixel loss models. Each returns the pixel loss and d(loss)/dP given the
// clamped membership value.
struct GmmPixelLoss {
  const ArrX* pn;
  Scalar loss(Eigen::Index px, Scalar p, Scalar* dldp) const {
    const Scalar q = std::min(1.0 - kProbClamp, std::max(kProbClamp, (*pn)(px)));
    const Scalar pc = std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
    const Scalar arg = pc * q + (1.0 - pc) * (1.0 - q);
    if (dldp) *dldp = (p > kProbClamp && p < 1.0 - kProbClamp) ? (1.0 - 2.0 * q) / arg : 0.0;
    return -std::log(arg);
  }
};

struct L2PixelLoss {
  const Image* img;
  Vec3 mu1, mu2;
  Scalar loss(Eigen::Index px, Scalar p, Scalar* dldp) const {
    const Vec3 x = img->pixels.row(px).transpose();
    const Vec3 r = x - p * mu1 - (1.0 - p) * mu2;
    if (dldp) *dldp = -2.0 * r.dot(mu1 - mu2);
    return r.squaredNorm();
  }
};

struct PixelField {
  Scalar value = 0.0;
  int n_hits = 0;
};

// Membership value at one pixel plus the per-segment data needed for its
// gradient. `hits` may be null when only the value is wanted.
PixelField field_at(const Vec2& p, const std::vector<Seg>& segs, Scalar inv_sig2, Scalar cull2,
                    MaxMode mode, Scalar tau, std::vector<SegHit>* hits) {
  PixelField out;
  thread_local std::vector<SegHit> local;
  std::vector<SegHit>& buf = hits ? *hits : local;
  buf.clear();
  for (std::size_t j = 0; j < segs.size(); ++j) {
    const Seg& s = segs[j];
    if (p.x() < s.lo_x || p.x() > s.hi_x || p.y() < s.lo_y || p.y() > s.hi_y) continue;
    SegHit h;
    h.index = j;
    h.t = s.len2 > 0.0 ? std::clamp((p - s.a).dot(s.dir) / s.len2, Scalar(0), Scalar(1)) : 0.0;
    h.r = p - s.a - h.t * s.dir;
    h.d2 = h.r.squaredNorm();
    if (h.d2 > cull2) continue;
    h.p = std::exp(-h.d2 * inv_sig2);
    buf.push_back(h);
  }
  out.n_hits = static_cast<int>(buf.size());
  if (buf.empty()) return out;

  if (mode == MaxMode::hard) {
    Scalar best = 0.0;
    for (const auto& h : buf) best = std::max(best, h.p);
    out.value = best;
  } else {
    // Far segments behave as P_j = 0 terms with softmax weight exp(0/tau).
    const Scalar far_terms = static_cast<Scalar>(segs.size() - buf.size());
    Scalar z = far_terms, n = 0.0;
    for (const auto& h : buf) {
      const Scalar e = std::exp(h.p / tau);
      z += e;
      n += h.p * e;
    }
    out.value = n / z;
  }
  return out;
}

template <typename LossModel>
ObjectiveEval evaluate(const RopeState& state, Scalar sigma, int width, int height,
                       const LossModel& model, const ArrX* pn_for_clip,
                       const ObjectiveConfig& cfg, const ClipMask* frozen_mask) {
  if (!(sigma > 0.0)) throw std::invalid_argument("soft render: sigma must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("soft render: empty image");
  state.validate();
  if (state.frame != Frame::image)
    throw std::invalid_argument("soft render: state must be in image frame");

  const Scalar cull_radius = kCullRadiusSigmas * sigma;
  const Scalar cull2 = cull_radius * cull_radius;
  const Scalar inv_sig2 = 1.0 / (sigma * sigma);
  const auto segs = build_segments(state, cull_radius);
  const Eigen::Index n_points = state.n_points();
  const Eigen::Index n_px = static_cast<Eigen::Index>(width) * height;
  const bool clipping = cfg.clip_occlusion && pn_for_clip != nullptr;

  ObjectiveEval out;
  out.grad_points.setZero(2, n_points);
  if (clipping) out.clip_mask = ClipMask::Constant(n_px, false);

  // Row blocks of fixed size: per-block partial sums combined in block order,
  // so results do not depend on the worker count.
  constexpr int kBlockRows = 8;
  const int n_blocks = (height + kBlockRows - 1) / kBlockRows;
  std::vector<Scalar> block_loss(static_cast<std::size_t>(n_blocks), 0.0);
  std::vector<Scalar> block_full(static_cast<std::size_t>(n_blocks), 0.0);
  std::vector<Scalar> block_gsig(static_cast<std::size_t>(n_blocks), 0.0);
  std::vector<Mat2X> block_gpts;
  if (cfg.want_gradient)
    block_gpts.assign(static_cast<std::size_t>(n_blocks), Mat2X::Zero(2, n_points));

  parallel_for(static_cast<std::size_t>(n_blocks), cfg.threads, [&](std::size_t bi) {
    std::vector<SegHit> hits;
    Scalar loss_acc = 0.0, full_acc = 0.0, gsig_acc = 0.0;
    Mat2X* gpts = cfg.want_gradient ? &block_gpts[bi] : nullptr;
    const int v0 = static_cast<int>(bi) * kBlockRows;
    const int v1 = std::min(height, v0 + kBlockRows);
    for (int v = v0; v < v1; ++v) {
      for (int u = 0; u < width; ++u) {
        const Eigen::Index px = static_cast<Eigen::Index>(v) * width + u;
        const Vec2 ppos(u, v);
        const PixelField f =
            field_at(ppos, segs, inv_sig2, cull2, cfg.mode, cfg.tau, cfg.want_gradient ? &hits : nullptr);

        Scalar dldp = 0.0;
        const Scalar pix_loss = model.loss(px, f.value, cfg.want_gradient ? &dldp : nullptr);
        full_acc += pix_loss;

        bool masked = false;
        if (clipping) {
          if (frozen_mask)
            masked = (*frozen_mask)(px);
          else
            masked = ((*pn_for_clip)(px) < 0.5 && f.value > (*pn_for_clip)(px));
          out.clip_mask(px) = masked;
        }
        if (!masked) loss_acc += pix_loss;

        if (!cfg.want_gradient || masked || f.n_hits == 0 || dldp == 0.0) continue;

        if (cfg.mode == MaxMode::hard) {
          const SegHit* best = &hits[0];
          for (const auto& h : hits)
            if (h.p > best->p) best = &h;
          const Scalar gp = dldp;  // dP/dP_j = 1 for the max segment
          const Scalar coeff = gp * best->p * inv_sig2;
          gpts->col(static_cast<Eigen::Index>(best->index)) += coeff * 2.0 * (1.0 - best->t) * best->r;
          gpts->col(static_cast<Eigen::Index>(best->index) + 1) += coeff * 2.0 * best->t * best->r;
          gsig_acc += gp * best->p * 2.0 * best->d2 / (sigma * sigma * sigma);
        } else {
          const Scalar far_terms = static_cast<Scalar>(segs.size() - hits.size());
          Scalar z = far_terms;
          for (const auto& h : hits) z += std::exp(h.p / cfg.tau);
          for (const auto& h : hits) {
            const Scalar w = std::exp(h.p / cfg.tau) * (1.0 + (h.p - f.value) / cfg.tau) / z;
            const Scalar gp = dldp * w;
            const Scalar coeff = gp * h.p * inv_sig2;
            gpts->col(static_cast<Eigen::Index>(h.index)) += coeff * 2.0 * (1.0 - h.t) * h.r;
            gpts->col(static_cast<Eigen::Index>(h.index) + 1) += coeff * 2.0 * h.t * h.r;
            gsig_acc += gp * h.p * 2.0 * h.d2 / (sigma * sigma * sigma);
          }
        }
      }
    }
    block_loss[bi] = loss_acc;
    block_full[bi] = full_acc;
    block_gsig[bi] = gsig_acc;
  });

  for (int b = 0; b < n_blocks; ++b) {
    out.loss += block_loss[static_cast<std::size_t>(b)];
    out.full_loss += block_full[static_cast<std::size_t>(b)];
    out.grad_sigma += block_gsig[static_cast<std::size_t>(b)];
    if (cfg.want_gradient) out.grad_points += block_gpts[static_cast<std::size_t>(b)];
  }
  return out;
}

}  // namespace

MembershipField soft_render(const RopeState& state, Scalar sigma, int width, int height,
                            MaxMode mode, Scalar tau) {
  if (!(sigma > 0.0)) throw std::invalid_argument("soft_render: sigma must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("soft_render: empty image");
  state.validate();
  if (state.frame != Frame::image)
    throw std::invalid_argument("soft_render: state must be in image frame");
  if (state.n_segments() < 1) throw std::invalid_argument("soft_render: need at least one segment");

  const Scalar cull_radius = kCullRadiusSigmas * sigma;
  const Scalar cull2 = cull_radius * cull_radius;
  const Scalar inv_sig2 = 1.0 / (sigma * sigma);
  const auto segs = build_segments(state, cull_radius);

  MembershipField out(width, height);
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u)
      out.at(u, v) = field_at(Vec2(u, v), segs, inv_sig2, cull2, mode, tau, nullptr).value;
  return out;
}

ObjectiveEval gmm_objective(const RopeState& state, Scalar sigma, const MembershipField& P_new,
                            const ObjectiveConfig& cfg, const ClipMask* frozen_mask) {
  GmmPixelLoss model{&P_new.values};
  return evaluate(state, sigma, P_new.width, P_new.height, model, &P_new.values, cfg, frozen_mask);
}

ObjectiveEval l2_objective(const RopeState& state, Scalar sigma, const Image& img,
                           const Vec3& mu1, const Vec3& mu2, const ObjectiveConfig& cfg) {
  L2PixelLoss model{&img, mu1, mu2};
  return evaluate(state, sigma, img.width, img.height, model, nullptr, cfg, nullptr);
}

ImageLossGrad image_loss_grad(const RopeState& state, Scalar sigma, const Image& img,
                              const ObjectiveConfig& cfg) {
  const MembershipField P = soft_render(state, sigma, img.width, img.height, cfg.mode, cfg.tau);
  const GmmParams gmm = m_step(img, P);
  const MembershipField Pn = e_step(img, gmm);
  const ObjectiveEval ev = gmm_objective(state, sigma, Pn, cfg, nullptr);
  return ImageLossGrad{ev.grad_points, ev.grad_sigma, ev.full_loss};
}

Scalar l2_baseline_loss(const RopeState& state, Scalar sigma, const Image& img, MaxMode mode) {
  const MembershipField P = soft_render(state, sigma, img.width, img.height, mode);
  const GmmParams gmm = m_step(img, P);
  ObjectiveConfig cfg;
  cfg.mode = mode;
  cfg.want_gradient = false;
  return l2_objective(state, sigma, img, gmm.mean[0], gmm.mean[1], cfg).full_loss;
}

}  // namespace strand
