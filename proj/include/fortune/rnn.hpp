#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fortune/mat.hpp"
#include "fortune/trace.hpp"

namespace fortune {

enum class CellKind { kLstm, kGru };
const char* to_string(CellKind k);

// LSTM with the four gates stacked into one matrix:
//   pre = w_all [h_prev; x] + b_all, rows ordered [forget|input|output|cand]
//   f,i,o = sigmoid(pre), g = tanh(pre_cand)
//   c_t = f (.) c_{t-1} + i (.) g
//   h_t = o (.) tanh(c_t)
struct LstmParams {
  std::size_t hidden = 0, input = 0;
  Mat w_all;  // 4h x (h+m), columns [h_prev | x]
  Mat b_all;  // 4h x 1
};

// GRU:
//   z = sigmoid(w_z x + u_z h_prev + b_z)
//   r = sigmoid(w_r x + u_r h_prev + b_r)
//   hc = tanh(w x + r (.) (u h_prev) + b_h)   (reset gates the recurrent term)
//   h_t = z (.) h_prev + (1 - z) (.) hc
// Stacked: w_x = [w_z; w_r; w], u_zr = [u_z; u_r], b = [b_z; b_r; b_h].
struct GruParams {
  std::size_t hidden = 0, input = 0;
  Mat w_x;   // 3h x m
  Mat u_zr;  // 2h x h
  Mat u;     // h x h
  Mat b;     // 3h x 1
};

struct OutputHead {
  Mat w;  // m x h
  Mat b;  // m x 1
};

struct CellState {
  Vec h, c;  // c is LSTM-only; GRU leaves it empty
};

struct PredictorModel {
  CellKind kind = CellKind::kLstm;
  std::size_t input = 0, hidden = 0, window = 0;
  LstmParams lstm;
  GruParams gru;
  OutputHead head;
  Scaler scaler;
  std::size_t epochs_run = 0;
  double final_val_error = 0.0;  // scaled units
  std::uint64_t seed = 0;
};

// Single cell steps. Shapes must match and values must be finite.
CellState lstm_cell_forward(const Vec& x, const CellState& prev,
                            const LstmParams& p);
Vec gru_cell_forward(const Vec& x, const Vec& h_prev, const GruParams& p);

// Runs the cell from zero state over a time-major window (length W*m,
// W >= 1) and returns the next-sample prediction in scaled units.
Vec forward_window(const PredictorModel& model, std::span<const double> window);

struct TrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  double clip_norm = 5.0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  // Stop once epoch-over-epoch improvement of the validation error drops
  // below this absolute amount.
  double early_stop_delta = 1e-5;
  std::uint64_t seed = 0;
  void validate() const;
};

struct TrainResult {
  PredictorModel model;
  std::vector<double> epoch_val_error;
};

// Unsupervised next-step training on scaled benign traces. Each window is a
// truncated-BPTT segment run from zero state; loss is the per-sample MSE
// (1/m) sum (y - target)^2; updates use Adam with global-norm clipping.
// The reported per-epoch validation error is the mean window loss observed
// in-stream over that epoch (each loss measured before the window's update).
TrainResult train_predictor(CellKind kind,
                            const std::vector<TraceMatrix>& scaled,
                            const Scaler& scaler, std::size_t window,
                            std::size_t hidden, const TrainConfig& cfg);

// Max relative deviation between the analytic gradient and a central finite
// difference of the one-window loss, over all parameters:
//   dev = |a - n| / max(|a|, |n|, 1e-6)
double grad_check(const PredictorModel& model, std::span<const double> window,
                  std::span<const double> target, double epsilon);

// Sliding next-step predictions for a raw trace in raw counter units:
// row k predicts sample W+k. Result is (T-W) x m.
Mat predict_stream(const PredictorModel& model, const TraceMatrix& raw);

PredictorModel init_model(CellKind kind, std::size_t input, std::size_t hidden,
                          std::size_t window, const Scaler& scaler,
                          std::uint64_t seed);

// fortune-model v1: plain-text, self-describing, 17-significant-digit
// values, so save -> load -> save is byte-identical and load -> predict is
// bit-identical to the in-memory model.
void save_model(const PredictorModel& model, const std::filesystem::path& path);
PredictorModel load_model(const std::filesystem::path& path);

}  // namespace fortune
