#include "fortune/rnn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "fortune/errors.hpp"
#include "fortune/kernels.hpp"
#include "fortune/rng.hpp"
#include "fsio.hpp"

namespace fortune {
namespace {

void check_finite(const double* p, std::size_t n, const char* what) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(p[i]))
      throw NumericError(std::string("non-finite value in ") + what);
}

void check_lstm_shapes(const LstmParams& p) {
  const std::size_t h = p.hidden, m = p.input;
  if (h == 0 || m == 0) throw DataError("LSTM dimensions must be positive");
  if (p.w_all.rows() != 4 * h || p.w_all.cols() != h + m ||
      p.b_all.rows() != 4 * h || p.b_all.cols() != 1)
    throw DataError("LSTM parameter shapes do not match declared dimensions");
}

void check_gru_shapes(const GruParams& p) {
  const std::size_t h = p.hidden, m = p.input;
  if (h == 0 || m == 0) throw DataError("GRU dimensions must be positive");
  if (p.w_x.rows() != 3 * h || p.w_x.cols() != m || p.u_zr.rows() != 2 * h ||
      p.u_zr.cols() != h || p.u.rows() != h || p.u.cols() != h ||
      p.b.rows() != 3 * h || p.b.cols() != 1)
    throw DataError("GRU parameter shapes do not match declared dimensions");
}

// ---- per-window forward/backward engines ----------------------------------

struct LstmScratch {
  std::size_t W = 0, h = 0, m = 0;
  Mat z;       // W x (h+m), [h_prev | x] per step
  Mat gates;   // W x 4h, activated [f|i|o|g]
  Mat c;       // (W+1) x h, row 0 = initial zeros
  Mat tanh_c;  // W x h
  Vec hcur, pre, dh, dc, dpre, dz;

  void ensure(std::size_t W_, std::size_t h_, std::size_t m_) {
    if (W == W_ && h == h_ && m == m_) return;
    W = W_;
    h = h_;
    m = m_;
    z = Mat(W, h + m);
    gates = Mat(W, 4 * h);
    c = Mat(W + 1, h);
    tanh_c = Mat(W, h);
    hcur.assign(h, 0.0);
    pre.assign(4 * h, 0.0);
    dh.assign(h, 0.0);
    dc.assign(h, 0.0);
    dpre.assign(4 * h, 0.0);
    dz.assign(h + m, 0.0);
  }
};

void lstm_forward(const LstmParams& p, const double* win, std::size_t W,
                  LstmScratch& s) {
  const std::size_t h = p.hidden, m = p.input, hm = h + m, h4 = 4 * h;
  s.ensure(W, h, m);
  std::fill(s.hcur.begin(), s.hcur.end(), 0.0);
  std::fill(s.c.row(0), s.c.row(0) + h, 0.0);
  const double* b = p.b_all.data();
  for (std::size_t t = 0; t < W; ++t) {
    double* z = s.z.row(t);
    std::copy(s.hcur.begin(), s.hcur.end(), z);
    std::copy(win + t * m, win + (t + 1) * m, z + h);
    kernels::matvec(p.w_all.data(), h4, hm, z, s.pre.data());
    for (std::size_t j = 0; j < h4; ++j) s.pre[j] += b[j];
    double* g = s.gates.row(t);
    kernels::vsigmoid(s.pre.data(), g, 3 * h);
    kernels::vtanh(s.pre.data() + 3 * h, g + 3 * h, h);
    const double* cp = s.c.row(t);
    double* cn = s.c.row(t + 1);
    for (std::size_t j = 0; j < h; ++j)
      cn[j] = g[j] * cp[j] + g[h + j] * g[3 * h + j];
    double* th = s.tanh_c.row(t);
    kernels::vtanh(cn, th, h);
    const double* o = g + 2 * h;
    for (std::size_t j = 0; j < h; ++j) s.hcur[j] = o[j] * th[j];
  }
}

void lstm_backward(const LstmParams& p, LstmScratch& s, std::size_t W,
                   const Vec& dh_final, LstmParams& grad) {
  const std::size_t h = p.hidden, m = p.input, hm = h + m, h4 = 4 * h;
  s.dh = dh_final;
  std::fill(s.dc.begin(), s.dc.end(), 0.0);
  double* dpre = s.dpre.data();
  for (std::size_t t = W; t-- > 0;) {
    const double* gate = s.gates.row(t);
    const double* cp = s.c.row(t);
    const double* th = s.tanh_c.row(t);
    for (std::size_t j = 0; j < h; ++j) {
      const double f = gate[j], i = gate[h + j], o = gate[2 * h + j],
                   g = gate[3 * h + j];
      const double do_ = s.dh[j] * th[j];
      const double dc = s.dc[j] + s.dh[j] * o * (1.0 - th[j] * th[j]);
      dpre[j] = dc * cp[j] * f * (1.0 - f);
      dpre[h + j] = dc * g * i * (1.0 - i);
      dpre[2 * h + j] = do_ * o * (1.0 - o);
      dpre[3 * h + j] = dc * i * (1.0 - g * g);
      s.dc[j] = dc * f;
    }
    kernels::ger_acc(grad.w_all.data(), h4, hm, dpre, s.z.row(t));
    double* gb = grad.b_all.data();
    for (std::size_t j = 0; j < h4; ++j) gb[j] += dpre[j];
    std::fill(s.dz.begin(), s.dz.end(), 0.0);
    kernels::matvec_t_acc(p.w_all.data(), h4, hm, dpre, s.dz.data());
    std::copy(s.dz.begin(), s.dz.begin() + h, s.dh.begin());
  }
}

struct GruScratch {
  std::size_t W = 0, h = 0, m = 0;
  Mat hrow;  // (W+1) x h
  Mat zr;    // W x 2h, activated [z|r]
  Mat uh;    // W x h, u h_prev before the reset gate
  Mat hc;    // W x h, candidate
  Vec pre3, pre2, prec, dh, dpre3, duh, tmp;

  void ensure(std::size_t W_, std::size_t h_, std::size_t m_) {
    if (W == W_ && h == h_ && m == m_) return;
    W = W_;
    h = h_;
    m = m_;
    hrow = Mat(W + 1, h);
    zr = Mat(W, 2 * h);
    uh = Mat(W, h);
    hc = Mat(W, h);
    pre3.assign(3 * h, 0.0);
    pre2.assign(2 * h, 0.0);
    prec.assign(h, 0.0);
    dh.assign(h, 0.0);
    dpre3.assign(3 * h, 0.0);
    duh.assign(h, 0.0);
    tmp.assign(h, 0.0);
  }
};

void gru_forward(const GruParams& p, const double* win, std::size_t W,
                 GruScratch& s) {
  const std::size_t h = p.hidden, m = p.input;
  s.ensure(W, h, m);
  std::fill(s.hrow.row(0), s.hrow.row(0) + h, 0.0);
  const double* b = p.b.data();
  for (std::size_t t = 0; t < W; ++t) {
    const double* x = win + t * m;
    const double* hp = s.hrow.row(t);
    kernels::matvec(p.w_x.data(), 3 * h, m, x, s.pre3.data());
    for (std::size_t j = 0; j < 3 * h; ++j) s.pre3[j] += b[j];
    kernels::matvec(p.u_zr.data(), 2 * h, h, hp, s.pre2.data());
    for (std::size_t j = 0; j < 2 * h; ++j) s.pre3[j] += s.pre2[j];
    kernels::vsigmoid(s.pre3.data(), s.zr.row(t), 2 * h);
    kernels::matvec(p.u.data(), h, h, hp, s.uh.row(t));
    const double* r = s.zr.row(t) + h;
    for (std::size_t j = 0; j < h; ++j)
      s.prec[j] = s.pre3[2 * h + j] + r[j] * s.uh.row(t)[j];
    kernels::vtanh(s.prec.data(), s.hc.row(t), h);
    const double* z = s.zr.row(t);
    double* hn = s.hrow.row(t + 1);
    const double* cand = s.hc.row(t);
    for (std::size_t j = 0; j < h; ++j)
      hn[j] = z[j] * hp[j] + (1.0 - z[j]) * cand[j];
  }
}

void gru_backward(const GruParams& p, GruScratch& s, std::size_t W,
                  const double* win, const Vec& dh_final, GruParams& grad) {
  const std::size_t h = p.hidden, m = p.input;
  s.dh = dh_final;
  double* d3 = s.dpre3.data();
  for (std::size_t t = W; t-- > 0;) {
    const double* z = s.zr.row(t);
    const double* r = s.zr.row(t) + h;
    const double* hp = s.hrow.row(t);
    const double* cand = s.hc.row(t);
    const double* uht = s.uh.row(t);
    for (std::size_t j = 0; j < h; ++j) {
      const double dzg = s.dh[j] * (hp[j] - cand[j]);
      const double dhc = s.dh[j] * (1.0 - z[j]);
      const double dpc = dhc * (1.0 - cand[j] * cand[j]);
      const double drg = dpc * uht[j];
      s.duh[j] = dpc * r[j];
      d3[j] = dzg * z[j] * (1.0 - z[j]);
      d3[h + j] = drg * r[j] * (1.0 - r[j]);
      d3[2 * h + j] = dpc;
      s.tmp[j] = s.dh[j] * z[j];
    }
    kernels::ger_acc(grad.w_x.data(), 3 * h, m, d3, win + t * m);
    double* gb = grad.b.data();
    for (std::size_t j = 0; j < 3 * h; ++j) gb[j] += d3[j];
    kernels::ger_acc(grad.u_zr.data(), 2 * h, h, d3, hp);
    kernels::ger_acc(grad.u.data(), h, h, s.duh.data(), hp);
    kernels::matvec_t_acc(p.u.data(), h, h, s.duh.data(), s.tmp.data());
    kernels::matvec_t_acc(p.u_zr.data(), 2 * h, h, d3, s.tmp.data());
    s.dh = s.tmp;
  }
}

struct Engine {
  LstmScratch lstm;
  GruScratch gru;

  // Returns the final hidden state after running the window from zero state.
  const double* forward(const PredictorModel& mdl, const double* win,
                        std::size_t W) {
    if (mdl.kind == CellKind::kLstm) {
      lstm_forward(mdl.lstm, win, W, lstm);
      return lstm.hcur.data();
    }
    gru_forward(mdl.gru, win, W, gru);
    return gru.hrow.row(W);
  }

  void backward(const PredictorModel& mdl, const double* win, std::size_t W,
                const Vec& dh_final, LstmParams& glstm, GruParams& ggru) {
    if (mdl.kind == CellKind::kLstm)
      lstm_backward(mdl.lstm, lstm, W, dh_final, glstm);
    else
      gru_backward(mdl.gru, gru, W, win, dh_final, ggru);
  }
};

void head_forward(const OutputHead& head, const double* hfin, double* y) {
  const std::size_t m = head.w.rows(), h = head.w.cols();
  kernels::matvec(head.w.data(), m, h, hfin, y);
  for (std::size_t i = 0; i < m; ++i) y[i] += head.b.data()[i];
}

struct Grads {
  LstmParams lstm;
  GruParams gru;
  OutputHead head;
};

Grads zero_grads(const PredictorModel& mdl) {
  Grads g;
  if (mdl.kind == CellKind::kLstm) {
    g.lstm.hidden = mdl.hidden;
    g.lstm.input = mdl.input;
    g.lstm.w_all = Mat(mdl.lstm.w_all.rows(), mdl.lstm.w_all.cols());
    g.lstm.b_all = Mat(mdl.lstm.b_all.rows(), 1);
  } else {
    g.gru.hidden = mdl.hidden;
    g.gru.input = mdl.input;
    g.gru.w_x = Mat(mdl.gru.w_x.rows(), mdl.gru.w_x.cols());
    g.gru.u_zr = Mat(mdl.gru.u_zr.rows(), mdl.gru.u_zr.cols());
    g.gru.u = Mat(mdl.gru.u.rows(), mdl.gru.u.cols());
    g.gru.b = Mat(mdl.gru.b.rows(), 1);
  }
  g.head.w = Mat(mdl.head.w.rows(), mdl.head.w.cols());
  g.head.b = Mat(mdl.head.b.rows(), 1);
  return g;
}

struct TensorRef {
  Mat* mat;
};

std::vector<TensorRef> model_tensors(PredictorModel& mdl) {
  if (mdl.kind == CellKind::kLstm)
    return {{&mdl.lstm.w_all}, {&mdl.lstm.b_all}, {&mdl.head.w}, {&mdl.head.b}};
  return {{&mdl.gru.w_x}, {&mdl.gru.u_zr}, {&mdl.gru.u},
          {&mdl.gru.b},   {&mdl.head.w},   {&mdl.head.b}};
}

std::vector<TensorRef> grad_tensors(Grads& g, CellKind kind) {
  if (kind == CellKind::kLstm)
    return {{&g.lstm.w_all}, {&g.lstm.b_all}, {&g.head.w}, {&g.head.b}};
  return {{&g.gru.w_x}, {&g.gru.u_zr}, {&g.gru.u},
          {&g.gru.b},   {&g.head.w},   {&g.head.b}};
}

void validate_model(const PredictorModel& mdl) {
  if (mdl.input == 0 || mdl.hidden == 0)
    throw DataError("model dimensions must be positive");
  if (mdl.kind == CellKind::kLstm) {
    if (mdl.lstm.hidden != mdl.hidden || mdl.lstm.input != mdl.input)
      throw DataError("cell dimensions disagree with model dimensions");
    check_lstm_shapes(mdl.lstm);
  } else {
    if (mdl.gru.hidden != mdl.hidden || mdl.gru.input != mdl.input)
      throw DataError("cell dimensions disagree with model dimensions");
    check_gru_shapes(mdl.gru);
  }
  if (mdl.head.w.rows() != mdl.input || mdl.head.w.cols() != mdl.hidden ||
      mdl.head.b.rows() != mdl.input || mdl.head.b.cols() != 1)
    throw DataError("output head shapes do not match model dimensions");
  if (!mdl.scaler.min.empty()) {
    if (mdl.scaler.channels() != mdl.input ||
        mdl.scaler.max.size() != mdl.scaler.min.size())
      throw DataError("scaler channel count does not match model input");
    for (std::size_t c = 0; c < mdl.scaler.channels(); ++c)
      if (!(mdl.scaler.max[c] > mdl.scaler.min[c]))
        throw DataError("scaler max must exceed min on every channel");
  }
}

}  // namespace

const char* to_string(CellKind k) {
  return k == CellKind::kLstm ? "LSTM" : "GRU";
}

CellState lstm_cell_forward(const Vec& x, const CellState& prev,
                            const LstmParams& p) {
  check_lstm_shapes(p);
  const std::size_t h = p.hidden, m = p.input;
  if (x.size() != m || prev.h.size() != h || prev.c.size() != h)
    throw DataError("LSTM step input sizes do not match parameters");
  check_finite(x.data(), m, "LSTM input");
  check_finite(prev.h.data(), h, "LSTM state");
  check_finite(prev.c.data(), h, "LSTM state");

  Vec z(h + m);
  std::copy(prev.h.begin(), prev.h.end(), z.begin());
  std::copy(x.begin(), x.end(), z.begin() + h);
  Vec pre(4 * h);
  kernels::matvec(p.w_all.data(), 4 * h, h + m, z.data(), pre.data());
  for (std::size_t j = 0; j < 4 * h; ++j) pre[j] += p.b_all.data()[j];
  Vec act(4 * h);
  kernels::vsigmoid(pre.data(), act.data(), 3 * h);
  kernels::vtanh(pre.data() + 3 * h, act.data() + 3 * h, h);

  CellState out;
  out.h.resize(h);
  out.c.resize(h);
  Vec tc(h);
  for (std::size_t j = 0; j < h; ++j)
    out.c[j] = act[j] * prev.c[j] + act[h + j] * act[3 * h + j];
  kernels::vtanh(out.c.data(), tc.data(), h);
  for (std::size_t j = 0; j < h; ++j) out.h[j] = act[2 * h + j] * tc[j];
  return out;
}

Vec gru_cell_forward(const Vec& x, const Vec& h_prev, const GruParams& p) {
  check_gru_shapes(p);
  const std::size_t h = p.hidden, m = p.input;
  if (x.size() != m || h_prev.size() != h)
    throw DataError("GRU step input sizes do not match parameters");
  check_finite(x.data(), m, "GRU input");
  check_finite(h_prev.data(), h, "GRU state");

  Vec pre(3 * h);
  kernels::matvec(p.w_x.data(), 3 * h, m, x.data(), pre.data());
  for (std::size_t j = 0; j < 3 * h; ++j) pre[j] += p.b.data()[j];
  Vec pre2(2 * h);
  kernels::matvec(p.u_zr.data(), 2 * h, h, h_prev.data(), pre2.data());
  for (std::size_t j = 0; j < 2 * h; ++j) pre[j] += pre2[j];
  Vec zr(2 * h);
  kernels::vsigmoid(pre.data(), zr.data(), 2 * h);
  Vec uh(h);
  kernels::matvec(p.u.data(), h, h, h_prev.data(), uh.data());
  Vec prec(h), cand(h);
  for (std::size_t j = 0; j < h; ++j)
    prec[j] = pre[2 * h + j] + zr[h + j] * uh[j];
  kernels::vtanh(prec.data(), cand.data(), h);
  Vec out(h);
  for (std::size_t j = 0; j < h; ++j)
    out[j] = zr[j] * h_prev[j] + (1.0 - zr[j]) * cand[j];
  return out;
}

Vec forward_window(const PredictorModel& model,
                   std::span<const double> window) {
  validate_model(model);
  const std::size_t m = model.input;
  if (window.empty() || window.size() % m != 0)
    throw DataError("window length must be a positive multiple of the input size");
  check_finite(window.data(), window.size(), "window");
  Engine eng;
  const double* hfin = eng.forward(model, window.data(), window.size() / m);
  Vec y(m);
  head_forward(model.head, hfin, y.data());
  return y;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw UsageError("epochs must be at least 1");
  if (batch_size == 0) throw UsageError("batch size must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw UsageError("learning rate must be positive and finite");
  if (!(clip_norm > 0.0)) throw UsageError("clip norm must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw UsageError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw UsageError("Adam epsilon must be positive");
  if (!(early_stop_delta >= 0.0))
    throw UsageError("early-stop delta must be non-negative");
}

PredictorModel init_model(CellKind kind, std::size_t input, std::size_t hidden,
                          std::size_t window, const Scaler& scaler,
                          std::uint64_t seed) {
  if (input == 0 || hidden == 0 || window == 0)
    throw DataError("model dimensions must be positive");
  if (!scaler.min.empty() && scaler.channels() != input)
    throw DataError("scaler channel count does not match model input");
  PredictorModel mdl;
  mdl.kind = kind;
  mdl.input = input;
  mdl.hidden = hidden;
  mdl.window = window;
  mdl.scaler = scaler;
  mdl.seed = seed;

  Rng rng(Rng::derive(seed, 0x12171ULL));
  auto fill_uniform = [&](Mat& m, double r) {
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-r, r);
  };
  const std::size_t h = hidden, m = input;
  if (kind == CellKind::kLstm) {
    mdl.lstm.hidden = h;
    mdl.lstm.input = m;
    mdl.lstm.w_all = Mat(4 * h, h + m);
    mdl.lstm.b_all = Mat(4 * h, 1);
    fill_uniform(mdl.lstm.w_all, std::sqrt(6.0 / double(h + m + h)));
    // Forget-gate bias starts at 1 so early training keeps long memories.
    for (std::size_t j = 0; j < h; ++j) mdl.lstm.b_all(j, 0) = 1.0;
  } else {
    mdl.gru.hidden = h;
    mdl.gru.input = m;
    mdl.gru.w_x = Mat(3 * h, m);
    mdl.gru.u_zr = Mat(2 * h, h);
    mdl.gru.u = Mat(h, h);
    mdl.gru.b = Mat(3 * h, 1);
    fill_uniform(mdl.gru.w_x, std::sqrt(6.0 / double(m + h)));
    fill_uniform(mdl.gru.u_zr, std::sqrt(6.0 / double(h + h)));
    fill_uniform(mdl.gru.u, std::sqrt(6.0 / double(h + h)));
  }
  mdl.head.w = Mat(m, h);
  mdl.head.b = Mat(m, 1);
  fill_uniform(mdl.head.w, std::sqrt(6.0 / double(h + m)));
  return mdl;
}

TrainResult train_predictor(CellKind kind,
                            const std::vector<TraceMatrix>& scaled,
                            const Scaler& scaler, std::size_t window,
                            std::size_t hidden, const TrainConfig& cfg) {
  cfg.validate();
  if (scaled.empty()) throw DataError("training set is empty");
  if (window == 0) throw UsageError("window length must be at least 1");
  if (hidden == 0) throw UsageError("hidden size must be at least 1");
  const std::size_t m = scaler.channels();
  if (m == 0) throw DataError("scaler is empty");
  for (const auto& t : scaled) {
    if (t.channels() != m)
      throw DataError("training trace channel count does not match scaler");
    check_finite(t.values.data(), t.values.size(), "training trace");
  }

  std::vector<WindowBatch> batches;
  batches.reserve(scaled.size());
  std::vector<std::pair<std::uint32_t, std::uint32_t>> order;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    batches.emplace_back(scaled[i], window);
    for (std::size_t k = 0; k < batches.back().count(); ++k)
      order.emplace_back(static_cast<std::uint32_t>(i),
                         static_cast<std::uint32_t>(k));
  }

  TrainResult result;
  result.model = init_model(kind, m, hidden, window, scaler, cfg.seed);
  PredictorModel& mdl = result.model;

  Grads grads = zero_grads(mdl);
  Grads m1 = zero_grads(mdl);
  Grads m2 = zero_grads(mdl);
  auto gref = grad_tensors(grads, kind);
  auto m1ref = grad_tensors(m1, kind);
  auto m2ref = grad_tensors(m2, kind);
  auto pref = model_tensors(mdl);

  Engine eng;
  Vec y(m), dy(m), dh(hidden);
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(cfg.seed, 0x5EED0000ULL + epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double err_sum = 0.0;
    std::size_t err_n = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (auto& r : gref) r.mat->fill(0.0);

      for (std::size_t i = start; i < stop; ++i) {
        const WindowBatch& wb = batches[order[i].first];
        const std::span<const double> win = wb.input(order[i].second);
        const std::span<const double> tgt = wb.target(order[i].second);
        const double* hfin = eng.forward(mdl, win.data(), window);
        head_forward(mdl.head, hfin, y.data());
        const double loss =
            kernels::sum_sq_diff(y.data(), tgt.data(), m) / double(m);
        if (!std::isfinite(loss))
          throw NumericError("non-finite training loss at epoch " +
                             std::to_string(epoch + 1) + ", batch " +
                             std::to_string(start / cfg.batch_size + 1));
        err_sum += loss;
        ++err_n;
        for (std::size_t j = 0; j < m; ++j)
          dy[j] = 2.0 / double(m) * (y[j] - tgt[j]);
        kernels::ger_acc(grads.head.w.data(), m, hidden, dy.data(), hfin);
        for (std::size_t j = 0; j < m; ++j) grads.head.b.data()[j] += dy[j];
        std::fill(dh.begin(), dh.end(), 0.0);
        kernels::matvec_t_acc(mdl.head.w.data(), m, hidden, dy.data(),
                              dh.data());
        eng.backward(mdl, win.data(), window, dh, grads.lstm, grads.gru);
      }

      const double inv = 1.0 / double(stop - start);
      double norm_sq = 0.0;
      for (auto& r : gref) {
        for (std::size_t j = 0; j < r.mat->size(); ++j) r.mat->data()[j] *= inv;
        norm_sq += kernels::dot(r.mat->data(), r.mat->data(), r.mat->size());
      }
      const double norm = std::sqrt(norm_sq);
      if (norm > cfg.clip_norm) {
        const double scale = cfg.clip_norm / norm;
        for (auto& r : gref)
          for (std::size_t j = 0; j < r.mat->size(); ++j)
            r.mat->data()[j] *= scale;
      }

      ++step;
      const double corr = cfg.learning_rate *
                          std::sqrt(1.0 - std::pow(cfg.beta2, double(step))) /
                          (1.0 - std::pow(cfg.beta1, double(step)));
      for (std::size_t r = 0; r < gref.size(); ++r) {
        double* g = gref[r].mat->data();
        double* a = m1ref[r].mat->data();
        double* b = m2ref[r].mat->data();
        double* pdat = pref[r].mat->data();
        const std::size_t n = gref[r].mat->size();
        for (std::size_t j = 0; j < n; ++j) {
          a[j] = cfg.beta1 * a[j] + (1.0 - cfg.beta1) * g[j];
          b[j] = cfg.beta2 * b[j] + (1.0 - cfg.beta2) * g[j] * g[j];
          pdat[j] -= corr * a[j] / (std::sqrt(b[j]) + cfg.eps);
        }
      }
    }

    const double epoch_err = err_sum / double(err_n);
    result.epoch_val_error.push_back(epoch_err);
    mdl.epochs_run = epoch + 1;
    mdl.final_val_error = epoch_err;
    if (epoch >= 1) {
      const double improvement =
          result.epoch_val_error[epoch - 1] - epoch_err;
      if (improvement < cfg.early_stop_delta) break;
    }
  }
  return result;
}

double grad_check(const PredictorModel& model, std::span<const double> window,
                  std::span<const double> target, double epsilon) {
  validate_model(model);
  if (!(epsilon > 0.0)) throw UsageError("epsilon must be positive");
  const std::size_t m = model.input;
  if (window.empty() || window.size() % m != 0 || target.size() != m)
    throw DataError("window or target size does not match the model");
  const std::size_t W = window.size() / m;

  PredictorModel mdl = model;
  Engine eng;
  Vec y(m);
  auto loss_now = [&]() {
    const double* hfin = eng.forward(mdl, window.data(), W);
    head_forward(mdl.head, hfin, y.data());
    return kernels::sum_sq_diff(y.data(), target.data(), m) / double(m);
  };

  Grads grads = zero_grads(mdl);
  {
    const double* hfin = eng.forward(mdl, window.data(), W);
    head_forward(mdl.head, hfin, y.data());
    Vec dy(m), dh(mdl.hidden, 0.0);
    for (std::size_t j = 0; j < m; ++j)
      dy[j] = 2.0 / double(m) * (y[j] - target[j]);
    kernels::ger_acc(grads.head.w.data(), m, mdl.hidden, dy.data(), hfin);
    for (std::size_t j = 0; j < m; ++j) grads.head.b.data()[j] += dy[j];
    kernels::matvec_t_acc(mdl.head.w.data(), m, mdl.hidden, dy.data(),
                          dh.data());
    eng.backward(mdl, window.data(), W, dh, grads.lstm, grads.gru);
  }

  auto pref = model_tensors(mdl);
  auto gref = grad_tensors(grads, mdl.kind);
  double worst = 0.0;
  for (std::size_t r = 0; r < pref.size(); ++r) {
    double* pdat = pref[r].mat->data();
    const double* gdat = gref[r].mat->data();
    for (std::size_t j = 0; j < pref[r].mat->size(); ++j) {
      const double saved = pdat[j];
      pdat[j] = saved + epsilon;
      const double lp = loss_now();
      pdat[j] = saved - epsilon;
      const double lm = loss_now();
      pdat[j] = saved;
      const double numeric = (lp - lm) / (2.0 * epsilon);
      const double dev = std::abs(gdat[j] - numeric) /
                         std::max({std::abs(gdat[j]), std::abs(numeric), 1e-6});
      worst = std::max(worst, dev);
    }
  }
  return worst;
}

Mat predict_stream(const PredictorModel& model, const TraceMatrix& raw) {
  validate_model(model);
  if (model.scaler.min.empty())
    throw DataError("model carries no scaler; cannot predict raw traces");
  if (model.window == 0) throw DataError("model window is unset");
  raw.validate();
  const TraceMatrix scaled = apply_scaler(raw, model.scaler);
  const WindowBatch wb(scaled, model.window);
  const std::size_t m = model.input;
  Mat out(wb.count(), m);
  Engine eng;
  Vec y(m);
  for (std::size_t i = 0; i < wb.count(); ++i) {
    const double* hfin = eng.forward(model, wb.input(i).data(), model.window);
    head_forward(model.head, hfin, y.data());
    unscale_sample(y.data(), model.scaler, out.row(i));
  }
  return out;
}

// ---- serialization --------------------------------------------------------

namespace {

constexpr const char* kModelMagic = "fortune-model v1";

void append_g17(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void append_rows(std::string& out, const char* name, const Mat& src,
                 std::size_t row_begin, std::size_t row_count) {
  out += "tensor ";
  out += name;
  out += ' ';
  out += std::to_string(row_count);
  out += ' ';
  out += std::to_string(src.cols());
  out += '\n';
  for (std::size_t r = 0; r < row_count; ++r) {
    const double* row = src.row(row_begin + r);
    for (std::size_t c = 0; c < src.cols(); ++c) {
      if (c) out += ' ';
      append_g17(out, row[c]);
    }
    out += '\n';
  }
}

double parse_double_token(const std::string& tok, const char* what) {
  double out = 0.0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e || tok.empty())
    throw DataError(std::string("model file: bad number in ") + what);
  return out;
}

std::uint64_t parse_u64_token(const std::string& tok, const char* what) {
  std::uint64_t out = 0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e || tok.empty())
    throw DataError(std::string("model file: bad integer in ") + what);
  return out;
}

}  // namespace

void save_model(const PredictorModel& model, const std::filesystem::path& path) {
  validate_model(model);
  if (model.scaler.min.empty())
    throw DataError("refusing to save a model without a scaler");
  for (auto& ref : model_tensors(const_cast<PredictorModel&>(model)))
    check_finite(ref.mat->data(), ref.mat->size(), "model tensor");

  const std::size_t h = model.hidden, m = model.input;
  std::string out;
  out.reserve(1 << 20);
  out += kModelMagic;
  out += "\ncell=";
  out += to_string(model.kind);
  out += "\nm=" + std::to_string(m);
  out += "\nh=" + std::to_string(h);
  out += "\nW=" + std::to_string(model.window);
  out += "\nepochs_run=" + std::to_string(model.epochs_run);
  out += "\nfinal_val_error=";
  append_g17(out, model.final_val_error);
  out += "\nseed=" + std::to_string(model.seed);
  out += "\nscaler_min";
  for (std::size_t c = 0; c < m; ++c) {
    out += ' ';
    append_g17(out, model.scaler.min[c]);
  }
  out += "\nscaler_max";
  for (std::size_t c = 0; c < m; ++c) {
    out += ' ';
    append_g17(out, model.scaler.max[c]);
  }
  out += '\n';

  if (model.kind == CellKind::kLstm) {
    const Mat& w = model.lstm.w_all;
    const Mat& b = model.lstm.b_all;
    append_rows(out, "w_f", w, 0, h);
    append_rows(out, "w_i", w, h, h);
    append_rows(out, "w_o", w, 2 * h, h);
    append_rows(out, "w_g", w, 3 * h, h);
    append_rows(out, "b_f", b, 0, h);
    append_rows(out, "b_i", b, h, h);
    append_rows(out, "b_o", b, 2 * h, h);
    append_rows(out, "b_g", b, 3 * h, h);
  } else {
    const GruParams& g = model.gru;
    append_rows(out, "w_z", g.w_x, 0, h);
    append_rows(out, "u_z", g.u_zr, 0, h);
    append_rows(out, "w_r", g.w_x, h, h);
    append_rows(out, "u_r", g.u_zr, h, h);
    append_rows(out, "w", g.w_x, 2 * h, h);
    append_rows(out, "u", g.u, 0, h);
    append_rows(out, "b_z", g.b, 0, h);
    append_rows(out, "b_r", g.b, h, h);
    append_rows(out, "b_h", g.b, 2 * h, h);
  }
  append_rows(out, "w_out", model.head.w, 0, m);
  append_rows(out, "b_out", model.head.b, 0, m);
  out += "end\n";
  atomic_write_file(path, out);
}

PredictorModel load_model(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != kModelMagic)
    throw DataError(path.string() + ": not a " + kModelMagic + " file");

  PredictorModel mdl;
  std::size_t m = 0, h = 0;
  bool have_cell = false, have_m = false, have_h = false, have_w = false;
  while (std::getline(in, line)) {
    if (line.rfind("scaler_min", 0) == 0) break;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(path.string() + ": malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "cell") {
      if (val == "LSTM")
        mdl.kind = CellKind::kLstm;
      else if (val == "GRU")
        mdl.kind = CellKind::kGru;
      else
        throw DataError(path.string() + ": unknown cell '" + val + "'");
      have_cell = true;
    } else if (key == "m") {
      m = static_cast<std::size_t>(parse_u64_token(val, "m"));
      have_m = true;
    } else if (key == "h") {
      h = static_cast<std::size_t>(parse_u64_token(val, "h"));
      have_h = true;
    } else if (key == "W") {
      mdl.window = static_cast<std::size_t>(parse_u64_token(val, "W"));
      have_w = true;
    } else if (key == "epochs_run") {
      mdl.epochs_run = static_cast<std::size_t>(parse_u64_token(val, "epochs_run"));
    } else if (key == "final_val_error") {
      mdl.final_val_error = parse_double_token(val, "final_val_error");
    } else if (key == "seed") {
      mdl.seed = parse_u64_token(val, "seed");
    } else {
      throw DataError(path.string() + ": unknown header key '" + key + "'");
    }
  }
  if (!have_cell || !have_m || !have_h || !have_w)
    throw DataError(path.string() + ": truncated model file: missing header");
  if (m == 0 || h == 0 || mdl.window == 0)
    throw DataError(path.string() + ": model dimensions must be positive");
  mdl.input = m;
  mdl.hidden = h;

  auto parse_values_line = [&](const std::string& l, const char* what,
                               std::size_t count, double* dst) {
    std::istringstream ls(l);
    std::string tok;
    for (std::size_t i = 0; i < count; ++i) {
      if (!(ls >> tok))
        throw DataError(path.string() + ": truncated model file: " +
                        std::string(what));
      dst[i] = parse_double_token(tok, what);
    }
    if (ls >> tok)
      throw DataError(path.string() + ": trailing values in " +
                      std::string(what));
  };

  // line currently holds "scaler_min ..."
  mdl.scaler.min.resize(m);
  mdl.scaler.max.resize(m);
  if (line.rfind("scaler_min", 0) != 0)
    throw DataError(path.string() + ": truncated model file: missing scaler");
  parse_values_line(line.substr(10), "scaler_min", m, mdl.scaler.min.data());
  if (!std::getline(in, line) || line.rfind("scaler_max", 0) != 0)
    throw DataError(path.string() + ": truncated model file: missing scaler_max");
  parse_values_line(line.substr(10), "scaler_max", m, mdl.scaler.max.data());

  // Allocate stacked tensors, then fill named slices as they arrive.
  struct Slice {
    Mat* mat;
    std::size_t row_begin, rows, cols;
    bool seen = false;
  };
  std::vector<std::pair<std::string, Slice>> slices;
  if (mdl.kind == CellKind::kLstm) {
    mdl.lstm.hidden = h;
    mdl.lstm.input = m;
    mdl.lstm.w_all = Mat(4 * h, h + m);
    mdl.lstm.b_all = Mat(4 * h, 1);
    slices = {{"w_f", {&mdl.lstm.w_all, 0, h, h + m}},
              {"w_i", {&mdl.lstm.w_all, h, h, h + m}},
              {"w_o", {&mdl.lstm.w_all, 2 * h, h, h + m}},
              {"w_g", {&mdl.lstm.w_all, 3 * h, h, h + m}},
              {"b_f", {&mdl.lstm.b_all, 0, h, 1}},
              {"b_i", {&mdl.lstm.b_all, h, h, 1}},
              {"b_o", {&mdl.lstm.b_all, 2 * h, h, 1}},
              {"b_g", {&mdl.lstm.b_all, 3 * h, h, 1}}};
  } else {
    mdl.gru.hidden = h;
    mdl.gru.input = m;
    mdl.gru.w_x = Mat(3 * h, m);
    mdl.gru.u_zr = Mat(2 * h, h);
    mdl.gru.u = Mat(h, h);
    mdl.gru.b = Mat(3 * h, 1);
    slices = {{"w_z", {&mdl.gru.w_x, 0, h, m}},
              {"u_z", {&mdl.gru.u_zr, 0, h, h}},
              {"w_r", {&mdl.gru.w_x, h, h, m}},
              {"u_r", {&mdl.gru.u_zr, h, h, h}},
              {"w", {&mdl.gru.w_x, 2 * h, h, m}},
              {"u", {&mdl.gru.u, 0, h, h}},
              {"b_z", {&mdl.gru.b, 0, h, 1}},
              {"b_r", {&mdl.gru.b, h, h, 1}},
              {"b_h", {&mdl.gru.b, 2 * h, h, 1}}};
  }
  mdl.head.w = Mat(m, h);
  mdl.head.b = Mat(m, 1);
  slices.emplace_back("w_out", Slice{&mdl.head.w, 0, m, h});
  slices.emplace_back("b_out", Slice{&mdl.head.b, 0, m, 1});

  bool saw_end = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word, name;
    std::size_t rows = 0, cols = 0;
    if (!(ls >> word >> name >> rows >> cols) || word != "tensor")
      throw DataError(path.string() + ": expected a tensor block, got '" +
                      line + "'");
    Slice* slice = nullptr;
    for (auto& [n, s] : slices)
      if (n == name) slice = &s;
    if (!slice)
      throw DataError(path.string() + ": unknown tensor '" + name + "'");
    if (slice->seen)
      throw DataError(path.string() + ": duplicate tensor '" + name + "'");
    if (rows != slice->rows || cols != slice->cols)
      throw DataError(path.string() + ": tensor '" + name +
                      "' has shape " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", expected " +
                      std::to_string(slice->rows) + "x" +
                      std::to_string(slice->cols));
    for (std::size_t r = 0; r < rows; ++r) {
      if (!std::getline(in, line))
        throw DataError(path.string() + ": truncated model file: tensor '" +
                        name + "' row " + std::to_string(r + 1));
      parse_values_line(line, name.c_str(), cols,
                        slice->mat->row(slice->row_begin + r));
    }
    slice->seen = true;
  }
  if (!saw_end)
    throw DataError(path.string() + ": truncated model file: missing end marker");
  for (const auto& [n, s] : slices)
    if (!s.seen)
      throw DataError(path.string() + ": truncated model file: missing tensor '" +
                      n + "'");
  validate_model(mdl);
  return mdl;
}

}  // namespace fortune
