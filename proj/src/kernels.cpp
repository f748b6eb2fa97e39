#include "fortune/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include "fortune/errors.hpp"

#include "kernels_detail.hpp"

namespace fortune::kernels {
namespace {

constexpr double kExpLo = -700.0;
constexpr double kExpHi = 709.4;

void matvec_scalar(const double* a, std::size_t rows, std::size_t cols,
                   const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a + r * cols;
    double s = 0.0;
    for (std::size_t i = 0; i < cols; ++i) s += row[i] * x[i];
    y[r] = s;
  }
}

void matvec_t_acc_scalar(const double* a, std::size_t rows, std::size_t cols,
                         const double* x, double* acc) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a + r * cols;
    const double xr = x[r];
    for (std::size_t i = 0; i < cols; ++i) acc[i] += xr * row[i];
  }
}

void ger_acc_scalar(double* a, std::size_t rows, std::size_t cols,
                    const double* x, const double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = a + r * cols;
    const double xr = x[r];
    for (std::size_t i = 0; i < cols; ++i) row[i] += xr * y[i];
  }
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_sq_diff_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void vexp_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double v = x[i];
    if (v < kExpLo) v = kExpLo;
    if (v > kExpHi) v = kExpHi;
    y[i] = std::exp(v);
  }
}

void vsigmoid_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    if (v >= 0.0) {
      const double e = std::exp(-v);
      y[i] = 1.0 / (1.0 + e);
    } else {
      const double e = std::exp(v);
      y[i] = e / (1.0 + e);
    }
  }
}

void vtanh_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

std::atomic<const detail::Table*> g_active{nullptr};

const detail::Table* resolve_default() {
  if (const char* env = std::getenv("FORTUNE_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return &detail::scalar_table();
    if (std::strcmp(env, "avx2") == 0) {
      if (const detail::Table* t = detail::avx2_table()) return t;
      // Requested backend unavailable on this CPU; fall back quietly.
      return &detail::scalar_table();
    }
    throw UsageError(std::string("FORTUNE_KERNELS: unknown backend '") + env +
                     "' (expected scalar or avx2)");
  }
  if (const detail::Table* t = detail::avx2_table()) return t;
  return &detail::scalar_table();
}

const detail::Table* active() {
  const detail::Table* t = g_active.load(std::memory_order_acquire);
  if (!t) {
    t = resolve_default();
    g_active.store(t, std::memory_order_release);
  }
  return t;
}

}  // namespace

namespace detail {

const Table& scalar_table() {
  static const Table t{matvec_scalar, matvec_t_acc_scalar, ger_acc_scalar,
                       axpy_scalar,   dot_scalar,          sum_sq_diff_scalar,
                       vexp_scalar,   vsigmoid_scalar,     vtanh_scalar};
  return t;
}

}  // namespace detail

Backend active_backend() {
  return active() == &detail::scalar_table() ? Backend::kScalar : Backend::kAvx2;
}

bool backend_available(Backend b) {
  return b == Backend::kScalar || detail::avx2_table() != nullptr;
}

bool set_backend(Backend b) {
  if (b == Backend::kScalar) {
    g_active.store(&detail::scalar_table(), std::memory_order_release);
    return true;
  }
  if (const detail::Table* t = detail::avx2_table()) {
    g_active.store(t, std::memory_order_release);
    return true;
  }
  return false;
}

const char* backend_name(Backend b) {
  return b == Backend::kScalar ? "scalar" : "avx2";
}

void matvec(const double* a, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
  active()->matvec(a, rows, cols, x, y);
}

void matvec_t_acc(const double* a, std::size_t rows, std::size_t cols,
                  const double* x, double* acc) {
  active()->matvec_t_acc(a, rows, cols, x, acc);
}

void ger_acc(double* a, std::size_t rows, std::size_t cols,
             const double* x, const double* y) {
  active()->ger_acc(a, rows, cols, x, y);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active()->axpy(alpha, x, y, n);
}

double dot(const double* a, const double* b, std::size_t n) {
  return active()->dot(a, b, n);
}

double sum_sq_diff(const double* a, const double* b, std::size_t n) {
  return active()->sum_sq_diff(a, b, n);
}

void vexp(const double* x, double* y, std::size_t n) { active()->vexp(x, y, n); }
void vsigmoid(const double* x, double* y, std::size_t n) { active()->vsigmoid(x, y, n); }
void vtanh(const double* x, double* y, std::size_t n) { active()->vtanh(x, y, n); }

}  // namespace fortune::kernels
