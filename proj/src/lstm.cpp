#include "strand/lstm.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace strand {

namespace {

// C = A * B column by column. GEMV accumulation order depends only on A, so
// batched results match per-item results bit for bit.
void prod_cols(MatX& C, const MatX& A, const MatX& B) {
  C.resize(A.rows(), B.cols());
  for (Eigen::Index j = 0; j < B.cols(); ++j) C.col(j).noalias() = A * B.col(j);
}

void prod_cols_add(MatX& C, const MatX& A, const MatX& B) {
  for (Eigen::Index j = 0; j < B.cols(); ++j) C.col(j).noalias() += A * B.col(j);
}

using ArrXX = Eigen::ArrayXXd;
inline ArrXX sigmoid(const ArrXX& x) { return 1.0 / (1.0 + (-x).exp()); }
inline ArrXX relu6(const ArrXX& x) { return x.max(0.0).min(6.0); }
inline ArrXX relu6_mask(const ArrXX& y) { return ((y > 0.0) && (y < 6.0)).cast<Scalar>(); }

struct NodeCache {
  MatX i, f, g, o;  // H x B, post-activation
  MatX c, r, z;     // cell, relu6(c), output
};

struct ChainCache {
  std::vector<NodeCache> nodes;  // indexed by processing position
};

// Runs one chain over the given node order. X[node] is 5 x B.
ChainCache run_chain(const LstmCell& cell, const std::vector<MatX>& X,
                     const std::vector<Eigen::Index>& order, Relu6Site site, int hidden) {
  const Eigen::Index B = X.empty() ? 0 : X[0].cols();
  const Eigen::Index H = hidden;
  ChainCache cache;
  cache.nodes.resize(order.size());
  MatX h_prev = MatX::Zero(H, B);
  MatX c_prev = MatX::Zero(H, B);
  MatX G;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const MatX& x = X[static_cast<std::size_t>(order[pos])];
    prod_cols(G, cell.w_x, x);
    prod_cols_add(G, cell.w_h, h_prev);
    G.colwise() += cell.b;

    NodeCache& nc = cache.nodes[pos];
    nc.i = sigmoid(G.topRows(H).array()).matrix();
    nc.f = sigmoid(G.middleRows(H, H).array()).matrix();
    if (site == Relu6Site::cell_output)
      nc.g = G.middleRows(2 * H, H).array().tanh().matrix();
    else
      nc.g = relu6(G.middleRows(2 * H, H).array()).matrix();
    nc.o = sigmoid(G.bottomRows(H).array()).matrix();
    nc.c = (nc.f.array() * c_prev.array() + nc.i.array() * nc.g.array()).matrix();
    nc.r = relu6(nc.c.array()).matrix();
    nc.z = (nc.o.array() * nc.r.array()).matrix();
    h_prev = nc.z;
    c_prev = nc.c;
  }
  return cache;
}

// Backward through one chain. dz_by_pos accumulates upstream gradients on the
// chain outputs; returns input-weight gradients and (optionally) nothing else
// since inputs are data.
void chain_backward(const LstmCell& cell, const std::vector<MatX>& X,
                    const std::vector<Eigen::Index>& order, Relu6Site site, int hidden,
                    const ChainCache& cache, const std::vector<MatX>& dz_by_pos,
                    LstmCell& grad) {
  const Eigen::Index H = hidden;
  const Eigen::Index B = X.empty() ? 0 : X[0].cols();
  MatX dh_next = MatX::Zero(H, B);
  MatX dc_next = MatX::Zero(H, B);
  MatX dG(4 * H, B);
  for (std::size_t pos = order.size(); pos-- > 0;) {
    const NodeCache& nc = cache.nodes[pos];
    const MatX& x = X[static_cast<std::size_t>(order[pos])];
    const bool first = pos == 0;

    MatX dz = dz_by_pos[pos] + dh_next;
    auto dz_a = dz.array();
    auto do_ = dz_a * nc.r.array();
    auto dr = dz_a * nc.o.array();
    MatX dc = (dr * relu6_mask(nc.c.array()) + dc_next.array()).matrix();
    auto dc_a = dc.array();
    auto dg = dc_a * nc.i.array();
    auto di = dc_a * nc.g.array();
    // forget-gate input is the previous cell state (zero at the chain head)
    MatX df;
    if (first)
      df = MatX::Zero(H, B);
    else
      df = (dc_a * cache.nodes[pos - 1].c.array()).matrix();

    dG.topRows(H) = (di * nc.i.array() * (1.0 - nc.i.array())).matrix();
    dG.middleRows(H, H) = (df.array() * nc.f.array() * (1.0 - nc.f.array())).matrix();
    if (site == Relu6Site::cell_output)
      dG.middleRows(2 * H, H) = (dg * (1.0 - nc.g.array().square())).matrix();
    else
      dG.middleRows(2 * H, H) = (dg * relu6_mask(nc.g.array())).matrix();
    dG.bottomRows(H) = (do_ * nc.o.array() * (1.0 - nc.o.array())).matrix();

    grad.w_x.noalias() += dG * x.transpose();
    if (!first) grad.w_h.noalias() += dG * cache.nodes[pos - 1].z.transpose();
    grad.b.noalias() += dG.rowwise().sum();

    dh_next.noalias() = cell.w_h.transpose() * dG;
    dc_next = (dc_a * nc.f.array()).matrix();
  }
}

std::vector<MatX> build_inputs(const LstmModel& model, const std::vector<RopeState>& states,
                               const std::vector<Action>& actions) {
  const Eigen::Index N = states[0].n_points();
  const Eigen::Index B = static_cast<Eigen::Index>(states.size());
  std::vector<MatX> X(static_cast<std::size_t>(N), MatX::Zero(5, B));
  for (Eigen::Index b = 0; b < B; ++b) {
    const RopeState& s = states[static_cast<std::size_t>(b)];
    if (s.frame != Frame::world)
      throw std::invalid_argument("lstm: states must be in world frame");
    if (s.n_points() != N) throw std::invalid_argument("lstm: mismatched node counts in batch");
    const Action& a = actions[static_cast<std::size_t>(b)];
    if (a.grasp_index < 0 || a.grasp_index >= N)
      throw std::invalid_argument("lstm: grasp index out of range");
    for (Eigen::Index i = 0; i < N; ++i) {
      X[static_cast<std::size_t>(i)](0, b) = (s.points(0, i) - model.norm.pos_mean.x()) / model.norm.pos_scale;
      X[static_cast<std::size_t>(i)](1, b) = (s.points(1, i) - model.norm.pos_mean.y()) / model.norm.pos_scale;
    }
    if (a.delta.squaredNorm() > 0.0) {
      MatX& xg = X[static_cast<std::size_t>(a.grasp_index)];
      xg(2, b) = a.delta.x() / model.norm.act_scale;
      xg(3, b) = a.delta.y() / model.norm.act_scale;
      xg(4, b) = 1.0;
    }
  }
  return X;
}

std::vector<Eigen::Index> forward_order(Eigen::Index n) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  return order;
}

std::vector<Eigen::Index> reverse_order(Eigen::Index n) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = n - 1 - i;
  return order;
}

// Mixer outputs y[node] (2 x B) from the two chains and the raw inputs.
std::vector<MatX> mix_outputs(const LstmModel& model, const std::vector<MatX>& X,
                              const ChainCache& L, const ChainCache& R) {
  const Eigen::Index N = static_cast<Eigen::Index>(X.size());
  std::vector<MatX> y(static_cast<std::size_t>(N));
  const MatX w_zl = model.w_zl, w_zr = model.w_zr, w_in = model.w_in;
  for (Eigen::Index i = 0; i < N; ++i) {
    const MatX& zl = L.nodes[static_cast<std::size_t>(i)].z;
    const MatX& zr = R.nodes[static_cast<std::size_t>(N - 1 - i)].z;
    MatX& yi = y[static_cast<std::size_t>(i)];
    prod_cols(yi, w_zl, zl);
    prod_cols_add(yi, w_zr, zr);
    prod_cols_add(yi, w_in, X[static_cast<std::size_t>(i)]);
  }
  return y;
}

}  // namespace

void LstmModel::validate() const {
  const Eigen::Index H = hidden;
  auto check = [](const MatX& m, Eigen::Index r, Eigen::Index c, const char* name) {
    if (m.rows() != r || m.cols() != c || !m.allFinite())
      throw std::invalid_argument(std::string("LstmModel: bad block ") + name);
  };
  check(fwd.w_x, 4 * H, 5, "fwd.w_x");
  check(fwd.w_h, 4 * H, H, "fwd.w_h");
  check(rev.w_x, 4 * H, 5, "rev.w_x");
  check(rev.w_h, 4 * H, H, "rev.w_h");
  if (fwd.b.size() != 4 * H || rev.b.size() != 4 * H || !fwd.b.allFinite() || !rev.b.allFinite())
    throw std::invalid_argument("LstmModel: bad bias");
  check(w_zl, 2, H, "w_zl");
  check(w_zr, 2, H, "w_zr");
  if (!w_in.allFinite()) throw std::invalid_argument("LstmModel: bad w_in");
  if (!(norm.pos_scale > 0.0) || !(norm.act_scale > 0.0))
    throw std::invalid_argument("LstmModel: non-positive normalization scale");
}

LstmModel init_lstm(int hidden, Rng& rng, Relu6Site site) {
  if (hidden < 1) throw std::invalid_argument("init_lstm: hidden must be >= 1");
  LstmModel m;
  m.hidden = hidden;
  m.relu6_site = site;
  const Eigen::Index H = hidden;
  auto fill = [&rng](MatX& w, Eigen::Index rows, Eigen::Index cols) {
    w.resize(rows, cols);
    const Scalar s = 1.0 / std::sqrt(static_cast<Scalar>(cols));
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) w(i, j) = rng.uniform(-s, s);
  };
  for (LstmCell* cell : {&m.fwd, &m.rev}) {
    fill(cell->w_x, 4 * H, 5);
    fill(cell->w_h, 4 * H, H);
    cell->b = VecX::Zero(4 * H);
    cell->b.segment(H, H).setConstant(1.0);  // forget-gate bias
  }
  MatX tmp;
  fill(tmp, 2, H);
  m.w_zl = tmp;
  fill(tmp, 2, H);
  m.w_zr = tmp;
  fill(tmp, 2, 5);
  m.w_in = tmp;
  return m;
}

std::vector<RopeState> lstm_forward_batch(const LstmModel& model,
                                          const std::vector<RopeState>& states,
                                          const std::vector<Action>& actions) {
  if (states.empty()) return {};
  if (states.size() != actions.size())
    throw std::invalid_argument("lstm_forward_batch: state/action count mismatch");
  model.validate();
  const Eigen::Index N = states[0].n_points();
  if (N < 2) throw std::invalid_argument("lstm_forward_batch: need >= 2 nodes");

  const auto X = build_inputs(model, states, actions);
  const auto fwd_o = forward_order(N);
  const auto rev_o = reverse_order(N);
  const ChainCache L = run_chain(model.fwd, X, fwd_o, model.relu6_site, model.hidden);
  const ChainCache R = run_chain(model.rev, X, rev_o, model.relu6_site, model.hidden);
  const auto y = mix_outputs(model, X, L, R);

  std::vector<RopeState> out(states.size());
  for (std::size_t b = 0; b < states.size(); ++b) {
    RopeState& s = out[b];
    s.frame = Frame::world;
    s.points.resize(2, N);
    for (Eigen::Index i = 0; i < N; ++i) {
      const Vec2 yi = y[static_cast<std::size_t>(i)].col(static_cast<Eigen::Index>(b));
      Vec2 p = model.norm.pos_mean + model.norm.pos_scale * yi;
      if (model.predict_delta)
        p = states[b].points.col(i) + model.norm.pos_scale * yi;
      s.points.col(i) = p;
    }
    if (!s.points.allFinite()) throw std::runtime_error("lstm_forward: non-finite prediction");
  }
  return out;
}

RopeState lstm_forward(const LstmModel& model, const RopeState& state, const Action& action) {
  return lstm_forward_batch(model, {state}, {action})[0];
}

std::vector<RopeState> lstm_rollout(const LstmModel& model, const RopeState& state,
                                    const std::vector<Action>& actions) {
  std::vector<RopeState> out;
  out.reserve(actions.size());
  RopeState cur = state;
  for (const Action& a : actions) {
    cur = lstm_forward(model, cur, a);
    out.push_back(cur);
  }
  return out;
}

std::vector<std::vector<RopeState>> lstm_rollout_batch(
    const LstmModel& model, const RopeState& start,
    const std::vector<std::vector<Action>>& action_seqs) {
  const std::size_t K = action_seqs.size();
  if (K == 0) return {};
  const std::size_t T = action_seqs[0].size();
  for (const auto& seq : action_seqs)
    if (seq.size() != T) throw std::invalid_argument("lstm_rollout_batch: ragged horizons");

  std::vector<std::vector<RopeState>> out(K, std::vector<RopeState>());
  for (auto& tr : out) tr.reserve(T);
  std::vector<RopeState> cur(K, start);
  std::vector<Action> step_actions(K);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < K; ++k) step_actions[k] = action_seqs[k][t];
    cur = lstm_forward_batch(model, cur, step_actions);
    for (std::size_t k = 0; k < K; ++k) out[k].push_back(cur[k]);
  }
  return out;
}

BackwardResult lstm_backward(const LstmModel& model, const std::vector<Transition>& batch) {
  if (batch.empty()) throw std::invalid_argument("lstm_backward: empty batch");
  model.validate();
  const Eigen::Index N = batch[0].state_before.n_points();
  const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index H = model.hidden;

  std::vector<RopeState> states(batch.size());
  std::vector<Action> actions(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].state_before.n_points() != N || batch[b].state_after.n_points() != N)
      throw std::invalid_argument("lstm_backward: mismatched node counts");
    states[b] = batch[b].state_before;
    actions[b] = batch[b].action;
  }

  const auto X = build_inputs(model, states, actions);
  const auto fwd_o = forward_order(N);
  const auto rev_o = reverse_order(N);
  const ChainCache L = run_chain(model.fwd, X, fwd_o, model.relu6_site, model.hidden);
  const ChainCache R = run_chain(model.rev, X, rev_o, model.relu6_site, model.hidden);
  const auto y = mix_outputs(model, X, L, R);

  // Loss in meters^2: prediction error scales by pos_scale out of the
  // normalized space.
  const Scalar s = model.norm.pos_scale;
  const Scalar inv_count = 1.0 / static_cast<Scalar>(B * N);
  Scalar loss = 0.0;
  std::vector<MatX> dy(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) {
    MatX target(2, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& tr = batch[static_cast<std::size_t>(b)];
      Vec2 t = (tr.state_after.points.col(i) - model.norm.pos_mean) / s;
      if (model.predict_delta)
        t = (tr.state_after.points.col(i) - tr.state_before.points.col(i)) / s;
      target.col(b) = t;
    }
    const MatX diff = y[static_cast<std::size_t>(i)] - target;
    loss += s * s * inv_count * diff.squaredNorm();
    dy[static_cast<std::size_t>(i)] = 2.0 * s * s * inv_count * diff;
  }

  BackwardResult res;
  res.loss = loss;
  auto zero_cell = [H](LstmCell& c) {
    c.w_x = MatX::Zero(4 * H, 5);
    c.w_h = MatX::Zero(4 * H, H);
    c.b = VecX::Zero(4 * H);
  };
  zero_cell(res.grads.fwd);
  zero_cell(res.grads.rev);
  res.grads.w_zl.setZero(2, H);
  res.grads.w_zr.setZero(2, H);
  res.grads.w_in.setZero();

  std::vector<MatX> dzl(static_cast<std::size_t>(N), MatX::Zero(H, B));
  std::vector<MatX> dzr(static_cast<std::size_t>(N), MatX::Zero(H, B));
  for (Eigen::Index i = 0; i < N; ++i) {
    const MatX& dyi = dy[static_cast<std::size_t>(i)];
    const MatX& zl = L.nodes[static_cast<std::size_t>(i)].z;
    const MatX& zr = R.nodes[static_cast<std::size_t>(N - 1 - i)].z;
    res.grads.w_zl.noalias() += dyi * zl.transpose();
    res.grads.w_zr.noalias() += dyi * zr.transpose();
    res.grads.w_in.noalias() += dyi * X[static_cast<std::size_t>(i)].transpose();
    dzl[static_cast<std::size_t>(i)].noalias() = model.w_zl.transpose() * dyi;
    // position N-1-i in the reverse chain handles node i
    dzr[static_cast<std::size_t>(N - 1 - i)].noalias() = model.w_zr.transpose() * dyi;
  }

  chain_backward(model.fwd, X, fwd_o, model.relu6_site, model.hidden, L, dzl, res.grads.fwd);
  chain_backward(model.rev, X, rev_o, model.relu6_site, model.hidden, R, dzr, res.grads.rev);
  return res;
}

namespace {
constexpr char kMagic[8] = {'S', 'T', 'R', 'N', 'D', 'L', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

void write_block(std::ofstream& out, const Scalar* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(Scalar)));
}

void read_block(std::ifstream& in, Scalar* data, std::size_t count, const std::string& path) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(Scalar)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(Scalar)))
    throw std::runtime_error("load_model: truncated file " + path);
}
}  // namespace

void save_model(const LstmModel& model, const std::string& path) {
  model.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kVersion;
  const std::uint32_t hidden = static_cast<std::uint32_t>(model.hidden);
  const std::uint32_t site = static_cast<std::uint32_t>(model.relu6_site);
  const std::uint32_t delta = model.predict_delta ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&hidden), 4);
  out.write(reinterpret_cast<const char*>(&site), 4);
  out.write(reinterpret_cast<const char*>(&delta), 4);
  out.write(reinterpret_cast<const char*>(&model.train_seed), 8);
  const Scalar norm[4] = {model.norm.pos_mean.x(), model.norm.pos_mean.y(),
                          model.norm.pos_scale, model.norm.act_scale};
  write_block(out, norm, 4);
  for (const LstmCell* cell : {&model.fwd, &model.rev}) {
    write_block(out, cell->w_x.data(), static_cast<std::size_t>(cell->w_x.size()));
    write_block(out, cell->w_h.data(), static_cast<std::size_t>(cell->w_h.size()));
    write_block(out, cell->b.data(), static_cast<std::size_t>(cell->b.size()));
  }
  write_block(out, model.w_zl.data(), static_cast<std::size_t>(model.w_zl.size()));
  write_block(out, model.w_zr.data(), static_cast<std::size_t>(model.w_zr.size()));
  write_block(out, model.w_in.data(), static_cast<std::size_t>(model.w_in.size()));
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

LstmModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_model: bad magic in " + path);
  std::uint32_t version = 0, hidden = 0, site = 0, delta = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&hidden), 4);
  in.read(reinterpret_cast<char*>(&site), 4);
  in.read(reinterpret_cast<char*>(&delta), 4);
  if (!in || version != kVersion)
    throw std::runtime_error("load_model: unsupported version in " + path);
  if (hidden < 1 || hidden > (1u << 16) || site > 1)
    throw std::runtime_error("load_model: corrupt header in " + path);

  LstmModel m;
  m.hidden = static_cast<int>(hidden);
  m.relu6_site = static_cast<Relu6Site>(site);
  m.predict_delta = delta != 0;
  in.read(reinterpret_cast<char*>(&m.train_seed), 8);
  Scalar norm[4];
  read_block(in, norm, 4, path);
  m.norm.pos_mean = Vec2(norm[0], norm[1]);
  m.norm.pos_scale = norm[2];
  m.norm.act_scale = norm[3];
  const Eigen::Index H = m.hidden;
  for (LstmCell* cell : {&m.fwd, &m.rev}) {
    cell->w_x.resize(4 * H, 5);
    cell->w_h.resize(4 * H, H);
    cell->b.resize(4 * H);
    read_block(in, cell->w_x.data(), static_cast<std::size_t>(cell->w_x.size()), path);
    read_block(in, cell->w_h.data(), static_cast<std::size_t>(cell->w_h.size()), path);
    read_block(in, cell->b.data(), static_cast<std::size_t>(cell->b.size()), path);
  }
  m.w_zl.resize(2, H);
  m.w_zr.resize(2, H);
  read_block(in, m.w_zl.data(), static_cast<std::size_t>(m.w_zl.size()), path);
  read_block(in, m.w_zr.data(), static_cast<std::size_t>(m.w_zr.size()), path);
  read_block(in, m.w_in.data(), static_cast<std::size_t>(m.w_in.size()), path);
  char extra;
  if (in.read(&extra, 1) && in.gcount() == 1)
    throw std::runtime_error("load_model: trailing bytes in " + path);
  m.validate();
  return m;
}

}  // namespace strand
