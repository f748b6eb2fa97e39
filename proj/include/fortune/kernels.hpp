#pragma once

#include <cstddef>

// Low-level numeric kernels used by the RNN and the detectors. Two backends:
// a scalar reference implementation and an AVX2+FMA implementation selected
// at runtime when the CPU supports it. The scalar backend is the semantic
// reference; the vector backend is required to agree within normalized
// floating-point tolerances (see tests/test_kernels.cpp).
//
// Backend selection order: FORTUNE_KERNELS env var ("scalar" or "avx2") if
// set and available, otherwise the best available backend. Selection is
// process-wide and stable, so repeated runs on one machine use one backend.
namespace fortune::kernels {

enum class Backend { kScalar, kAvx2 };

Backend active_backend();
bool backend_available(Backend b);
// Returns false and leaves dispatch unchanged when b is unavailable here.
bool set_backend(Backend b);
const char* backend_name(Backend b);

// y = A x, A row-major rows x cols.
void matvec(const double* a, std::size_t rows, std::size_t cols,
            const double* x, double* y);
// acc += A^T x (x has `rows` elements, acc has `cols`).
void matvec_t_acc(const double* a, std::size_t rows, std::size_t cols,
                  const double* x, double* acc);
// A += x y^T (x has `rows` elements, y has `cols`).
void ger_acc(double* a, std::size_t rows, std::size_t cols,
             const double* x, const double* y);
// y += alpha x.
void axpy(double alpha, const double* x, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
// sum_i (a_i - b_i)^2
double sum_sq_diff(const double* a, const double* b, std::size_t n);

// Elementwise transcendentals. vexp clamps inputs to [-700, 709.4] before
// exponentiating (callers here only need the sigmoid/tanh range); vsigmoid
// and vtanh are exact logistic / hyperbolic tangent maps, monotone, with
// vsigmoid(0)=0.5 and vtanh(0)=0 reproduced exactly.
void vexp(const double* x, double* y, std::size_t n);
void vsigmoid(const double* x, double* y, std::size_t n);
void vtanh(const double* x, double* y, std::size_t n);

}  // namespace fortune::kernels
