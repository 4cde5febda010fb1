#include "strand/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "strand/parallel.hpp"

namespace strand {

namespace {

// Flat views over every trainable block, in a fixed order.
std::vector<Eigen::Map<VecX>> block_views(LstmModel& m) {
  std::vector<Eigen::Map<VecX>> v;
  for (LstmCell* c : {&m.fwd, &m.rev}) {
    v.emplace_back(c->w_x.data(), c->w_x.size());
    v.emplace_back(c->w_h.data(), c->w_h.size());
    v.emplace_back(c->b.data(), c->b.size());
  }
  v.emplace_back(m.w_zl.data(), m.w_zl.size());
  v.emplace_back(m.w_zr.data(), m.w_zr.size());
  v.emplace_back(m.w_in.data(), m.w_in.size());
  return v;
}

std::vector<Eigen::Map<const VecX>> block_views(const LstmGradients& g) {
  std::vector<Eigen::Map<const VecX>> v;
  for (const LstmCell* c : {&g.fwd, &g.rev}) {
    v.emplace_back(c->w_x.data(), c->w_x.size());
    v.emplace_back(c->w_h.data(), c->w_h.size());
    v.emplace_back(c->b.data(), c->b.size());
  }
  v.emplace_back(g.w_zl.data(), g.w_zl.size());
  v.emplace_back(g.w_zr.data(), g.w_zr.size());
  v.emplace_back(g.w_in.data(), g.w_in.size());
  return v;
}

void axpy_grads(LstmGradients& acc, const LstmGradients& g, Scalar w) {
  acc.fwd.w_x += w * g.fwd.w_x;
  acc.fwd.w_h += w * g.fwd.w_h;
  acc.fwd.b += w * g.fwd.b;
  acc.rev.w_x += w * g.rev.w_x;
  acc.rev.w_h += w * g.rev.w_h;
  acc.rev.b += w * g.rev.b;
  acc.w_zl += w * g.w_zl;
  acc.w_zr += w * g.w_zr;
  acc.w_in += w * g.w_in;
}

LstmGradients zero_grads(int hidden) {
  LstmGradients g;
  const Eigen::Index H = hidden;
  for (LstmCell* c : {&g.fwd, &g.rev}) {
    c->w_x = MatX::Zero(4 * H, 5);
    c->w_h = MatX::Zero(4 * H, H);
    c->b = VecX::Zero(4 * H);
  }
  g.w_zl.setZero(2, H);
  g.w_zr.setZero(2, H);
  g.w_in.setZero();
  return g;
}

}  // namespace

EvalMetrics evaluate_one_step(const LstmModel& model, const std::vector<Transition>& transitions,
                              int threads) {
  if (transitions.empty()) return {};
  std::vector<Scalar> avg(transitions.size()), mx(transitions.size());
  constexpr std::size_t kChunk = 64;
  const std::size_t n_chunks = (transitions.size() + kChunk - 1) / kChunk;
  parallel_for(n_chunks, threads, [&](std::size_t ci) {
    const std::size_t lo = ci * kChunk;
    const std::size_t hi = std::min(transitions.size(), lo + kChunk);
    std::vector<RopeState> states;
    std::vector<Action> actions;
    for (std::size_t i = lo; i < hi; ++i) {
      states.push_back(transitions[i].state_before);
      actions.push_back(transitions[i].action);
    }
    const auto preds = lstm_forward_batch(model, states, actions);
    for (std::size_t i = lo; i < hi; ++i) {
      avg[i] = avg_deviation(preds[i - lo], transitions[i].state_after);
      mx[i] = max_deviation(preds[i - lo], transitions[i].state_after);
    }
  });
  EvalMetrics m;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    m.avg_dev += avg[i];
    m.max_dev += mx[i];
  }
  m.avg_dev /= static_cast<Scalar>(transitions.size());
  m.max_dev /= static_cast<Scalar>(transitions.size());
  return m;
}

TrainResult train_dynamics(const Dataset& dataset, const TrainConfig& cfg) {
  if (dataset.transitions.empty()) throw std::invalid_argument("train_dynamics: empty dataset");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train_dynamics: lr must be > 0");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction <= 1.0))
    throw std::invalid_argument("train_dynamics: bad split fraction");

  Rng rng(cfg.seed);
  TrainResult res;
  res.model = init_lstm(cfg.hidden, rng, cfg.relu6_site);
  res.model.predict_delta = cfg.predict_delta;
  res.model.train_seed = cfg.seed;

  // Split, then standardize from the training split only.
  const std::size_t n_total = dataset.transitions.size();
  const std::size_t n_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<Scalar>(n_total))));
  std::vector<const Transition*> train, val;
  for (std::size_t i = 0; i < n_total; ++i)
    (i < n_train ? train : val).push_back(&dataset.transitions[i]);

  Vec2 mean = Vec2::Zero();
  std::size_t count = 0;
  for (const Transition* tr : train) {
    mean += tr->state_before.points.rowwise().mean();
    ++count;
  }
  mean /= static_cast<Scalar>(count);
  Scalar var = 0.0;
  Scalar act_ms = 0.0;
  for (const Transition* tr : train) {
    var += (tr->state_before.points.colwise() - mean).squaredNorm() /
           static_cast<Scalar>(tr->state_before.n_points());
    act_ms += tr->action.delta.squaredNorm();
  }
  var /= static_cast<Scalar>(count);
  act_ms /= static_cast<Scalar>(count);
  res.model.norm.pos_mean = mean;
  res.model.norm.pos_scale = std::max(1e-6, std::sqrt(0.5 * var));  // per-coordinate RMS
  res.model.norm.act_scale = std::max(1e-6, std::sqrt(0.5 * act_ms));

  // Adam state over the flat block views.
  auto params = block_views(res.model);
  std::vector<VecX> adam_m, adam_v;
  for (const auto& p : params) {
    adam_m.push_back(VecX::Zero(p.size()));
    adam_v.push_back(VecX::Zero(p.size()));
  }
  long adam_t = 0;

  std::vector<std::size_t> perm(train.size());
  std::iota(perm.begin(), perm.end(), 0);

  std::vector<Transition> val_copy;
  for (const Transition* tr : val) val_copy.push_back(*tr);

  constexpr std::size_t kChunk = 8;  // fixed micro-batch; reduction order is chunk order
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the run's stream.
    for (std::size_t i = perm.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.uniform_index(i));
      std::swap(perm[i - 1], perm[j]);
    }

    Scalar epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(perm.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t bsize = stop - start;
      const std::size_t n_chunks = (bsize + kChunk - 1) / kChunk;

      std::vector<LstmGradients> chunk_grads(n_chunks);
      std::vector<Scalar> chunk_loss(n_chunks, 0.0);
      std::vector<std::size_t> chunk_count(n_chunks, 0);
      parallel_for(n_chunks, cfg.threads, [&](std::size_t ci) {
        std::vector<Transition> chunk;
        for (std::size_t i = start + ci * kChunk; i < std::min(stop, start + (ci + 1) * kChunk); ++i)
          chunk.push_back(*train[perm[i]]);
        const BackwardResult br = lstm_backward(res.model, chunk);
        chunk_grads[ci] = br.grads;
        chunk_loss[ci] = br.loss;
        chunk_count[ci] = chunk.size();
      });

      LstmGradients grad = zero_grads(cfg.hidden);
      Scalar batch_loss = 0.0;
      for (std::size_t ci = 0; ci < n_chunks; ++ci) {
        const Scalar w = static_cast<Scalar>(chunk_count[ci]) / static_cast<Scalar>(bsize);
        axpy_grads(grad, chunk_grads[ci], w);
        batch_loss += w * chunk_loss[ci];
      }
      epoch_loss += batch_loss;
      ++n_batches;

      ++adam_t;
      const Scalar bc1 = 1.0 - std::pow(cfg.beta1, static_cast<Scalar>(adam_t));
      const Scalar bc2 = 1.0 - std::pow(cfg.beta2, static_cast<Scalar>(adam_t));
      const auto gviews = block_views(grad);
      for (std::size_t k = 0; k < params.size(); ++k) {
        adam_m[k] = cfg.beta1 * adam_m[k] + (1.0 - cfg.beta1) * gviews[k];
        adam_v[k] = (cfg.beta2 * adam_v[k].array() +
                     (1.0 - cfg.beta2) * gviews[k].array().square()).matrix();
        params[k].array() -= cfg.learning_rate * (adam_m[k].array() / bc1) /
                             ((adam_v[k].array() / bc2).sqrt() + cfg.adam_eps);
      }
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = n_batches ? epoch_loss / static_cast<Scalar>(n_batches) : 0.0;
    if (!val_copy.empty()) {
      const EvalMetrics m = evaluate_one_step(res.model, val_copy, cfg.threads);
      st.val_avg_dev = m.avg_dev;
      st.val_max_dev = m.max_dev;
    }
    res.history.push_back(st);
  }
  return res;
}

}  // namespace strand
