// AVX2+FMA backend. Compiled with -mavx2 -mfma on x86-64; the table is only
// handed out after a runtime CPU feature check, so linking this TU into a
// binary that runs on an older CPU is safe.

#include "kernels_detail.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstddef>

namespace fortune::kernels::detail {
namespace {

constexpr double kExpLo = -700.0;
constexpr double kExpHi = 709.4;

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swap = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swap));
}

// exp via argument reduction x = n ln2 + r and a Pade approximant in r,
// then 2^n scaling through the exponent bits. Inputs are clamped to
// [-700, 709.4], which keeps n + 1023 inside the normal exponent range.
inline __m256d exp_pd(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d two = _mm256_set1_pd(2.0);

  x = _mm256_max_pd(x, _mm256_set1_pd(kExpLo));
  x = _mm256_min_pd(x, _mm256_set1_pd(kExpHi));

  const __m256d nd = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(nd, c1, x);
  r = _mm256_fnmadd_pd(nd, c2, r);
  const __m256d r2 = _mm256_mul_pd(r, r);

  __m256d px = _mm256_fmadd_pd(p0, r2, p1);
  px = _mm256_fmadd_pd(px, r2, p2);
  px = _mm256_mul_pd(px, r);
  __m256d qx = _mm256_fmadd_pd(q0, r2, q1);
  qx = _mm256_fmadd_pd(qx, r2, q2);
  qx = _mm256_fmadd_pd(qx, r2, q3);

  const __m256d e = _mm256_fmadd_pd(
      two, _mm256_div_pd(px, _mm256_sub_pd(qx, px)), one);

  const __m128i n32 = _mm256_cvtpd_epi32(nd);
  const __m256i n64 = _mm256_cvtepi32_epi64(n32);
  const __m256i bits =
      _mm256_slli_epi64(_mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(e, _mm256_castsi256_pd(bits));
}

void matvec_avx2(const double* a, std::size_t rows, std::size_t cols,
                 const double* x, double* y) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* a0 = a + (r + 0) * cols;
    const double* a1 = a + (r + 1) * cols;
    const double* a2 = a + (r + 2) * cols;
    const double* a3 = a + (r + 3) * cols;
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= cols; i += 4) {
      const __m256d xv = _mm256_loadu_pd(x + i);
      s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a0 + i), xv, s0);
      s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a1 + i), xv, s1);
      s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a2 + i), xv, s2);
      s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a3 + i), xv, s3);
    }
    double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
    for (; i < cols; ++i) {
      const double xv = x[i];
      t0 += a0[i] * xv;
      t1 += a1[i] * xv;
      t2 += a2[i] * xv;
      t3 += a3[i] * xv;
    }
    y[r + 0] = t0;
    y[r + 1] = t1;
    y[r + 2] = t2;
    y[r + 3] = t3;
  }
  for (; r < rows; ++r) {
    const double* a0 = a + r * cols;
    __m256d s0 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= cols; i += 4)
      s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a0 + i), _mm256_loadu_pd(x + i), s0);
    double t0 = hsum(s0);
    for (; i < cols; ++i) t0 += a0[i] * x[i];
    y[r] = t0;
  }
}

void matvec_t_acc_avx2(const double* a, std::size_t rows, std::size_t cols,
                       const double* x, double* acc) {
  std::size_t r = 0;
  for (; r + 2 <= rows; r += 2) {
    const double* a0 = a + (r + 0) * cols;
    const double* a1 = a + (r + 1) * cols;
    const __m256d b0 = _mm256_set1_pd(x[r + 0]);
    const __m256d b1 = _mm256_set1_pd(x[r + 1]);
    std::size_t i = 0;
    for (; i + 4 <= cols; i += 4) {
      __m256d v = _mm256_loadu_pd(acc + i);
      v = _mm256_fmadd_pd(_mm256_loadu_pd(a0 + i), b0, v);
      v = _mm256_fmadd_pd(_mm256_loadu_pd(a1 + i), b1, v);
      _mm256_storeu_pd(acc + i, v);
    }
    for (; i < cols; ++i) acc[i] += x[r] * a0[i] + x[r + 1] * a1[i];
  }
  for (; r < rows; ++r) {
    const double* a0 = a + r * cols;
    const __m256d b0 = _mm256_set1_pd(x[r]);
    std::size_t i = 0;
    for (; i + 4 <= cols; i += 4) {
      __m256d v = _mm256_loadu_pd(acc + i);
      v = _mm256_fmadd_pd(_mm256_loadu_pd(a0 + i), b0, v);
      _mm256_storeu_pd(acc + i, v);
    }
    for (; i < cols; ++i) acc[i] += x[r] * a0[i];
  }
}

void ger_acc_avx2(double* a, std::size_t rows, std::size_t cols,
                  const double* x, const double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = a + r * cols;
    const __m256d b = _mm256_set1_pd(x[r]);
    std::size_t i = 0;
    for (; i + 4 <= cols; i += 4) {
      __m256d v = _mm256_loadu_pd(row + i);
      v = _mm256_fmadd_pd(_mm256_loadu_pd(y + i), b, v);
      _mm256_storeu_pd(row + i, v);
    }
    for (; i < cols; ++i) row[i] += x[r] * y[i];
  }
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(y + i);
    v = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), a, v);
    _mm256_storeu_pd(y + i, v);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4)
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_sq_diff_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    const __m256d d1 =
        _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    s0 = _mm256_fmadd_pd(d0, d0, s0);
    s1 = _mm256_fmadd_pd(d1, d1, s1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    s0 = _mm256_fmadd_pd(d0, d0, s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

template <class F>
inline void for_lanes(const double* x, double* y, std::size_t n, F&& f) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, f(_mm256_loadu_pd(x + i)));
  if (i < n) {
    alignas(32) double tmp[4] = {0, 0, 0, 0};
    for (std::size_t k = i; k < n; ++k) tmp[k - i] = x[k];
    alignas(32) double out[4];
    _mm256_store_pd(out, f(_mm256_load_pd(tmp)));
    for (std::size_t k = i; k < n; ++k) y[k] = out[k - i];
  }
}

void vexp_avx2(const double* x, double* y, std::size_t n) {
  for_lanes(x, y, n, [](__m256d v) { return exp_pd(v); });
}

void vsigmoid_avx2(const double* x, double* y, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d sign = _mm256_set1_pd(-0.0);
  for_lanes(x, y, n, [&](__m256d v) {
    const __m256d av = _mm256_andnot_pd(sign, v);
    const __m256d u = exp_pd(_mm256_sub_pd(_mm256_setzero_pd(), av));
    const __m256d neg = _mm256_cmp_pd(v, _mm256_setzero_pd(), _CMP_LT_OQ);
    const __m256d num = _mm256_blendv_pd(one, u, neg);
    return _mm256_div_pd(num, _mm256_add_pd(one, u));
  });
}

void vtanh_avx2(const double* x, double* y, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d sign = _mm256_set1_pd(-0.0);
  for_lanes(x, y, n, [&](__m256d v) {
    const __m256d sgn = _mm256_and_pd(sign, v);
    const __m256d av = _mm256_andnot_pd(sign, v);
    const __m256d u = exp_pd(_mm256_mul_pd(av, _mm256_set1_pd(-2.0)));
    const __m256d t =
        _mm256_div_pd(_mm256_sub_pd(one, u), _mm256_add_pd(one, u));
    return _mm256_or_pd(t, sgn);
  });
}

}  // namespace

const Table* avx2_table() {
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  if (!supported) return nullptr;
  static const Table t{matvec_avx2, matvec_t_acc_avx2, ger_acc_avx2,
                       axpy_avx2,   dot_avx2,          sum_sq_diff_avx2,
                       vexp_avx2,   vsigmoid_avx2,     vtanh_avx2};
  return &t;
}

}  // namespace fortune::kernels::detail

#else  // non-x86 build: no vector backend

namespace fortune::kernels::detail {
const Table* avx2_table() { return nullptr; }
}  // namespace fortune::kernels::detail

#endif
