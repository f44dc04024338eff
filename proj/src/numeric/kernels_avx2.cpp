// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <algorithm>

#include "labpolicy/numeric/kernels.hpp"

namespace labpolicy::numeric::simd {
namespace {

constexpr std::size_t kNR = 8;
constexpr std::size_t kKC = 256;
constexpr std::size_t kMC = 96;

inline __m256i lane_mask(std::size_t valid) {
  alignas(32) static const long long table[8] = {-1, -1, -1, -1, 0, 0, 0, 0};
  const std::size_t v = std::min<std::size_t>(valid, 4);
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(table + 4 - v));
}

template <int MR>
void micro(std::size_t kc, std::size_t nr, const double* a, std::size_t a_rs, std::size_t a_cs,
           const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  __m256d acc0[MR];
  __m256d acc1[MR];
  for (int r = 0; r < MR; ++r) acc0[r] = acc1[r] = _mm256_setzero_pd();

  if (nr == kNR) {
    for (std::size_t p = 0; p < kc; ++p) {
      const double* bp = b + p * ldb;
      const __m256d b0 = _mm256_loadu_pd(bp);
      const __m256d b1 = _mm256_loadu_pd(bp + 4);
      const double* ap = a + p * a_cs;
      for (int r = 0; r < MR; ++r) {
        const __m256d ar = _mm256_broadcast_sd(ap + r * a_rs);
        acc0[r] = _mm256_fmadd_pd(ar, b0, acc0[r]);
        acc1[r] = _mm256_fmadd_pd(ar, b1, acc1[r]);
      }
    }
    for (int r = 0; r < MR; ++r) {
      double* cr = c + r * ldc;
      _mm256_storeu_pd(cr, _mm256_add_pd(_mm256_loadu_pd(cr), acc0[r]));
      _mm256_storeu_pd(cr + 4, _mm256_add_pd(_mm256_loadu_pd(cr + 4), acc1[r]));
    }
    return;
  }

  const __m256i m0 = lane_mask(nr);
  const __m256i m1 = lane_mask(nr > 4 ? nr - 4 : 0);
  for (std::size_t p = 0; p < kc; ++p) {
    const double* bp = b + p * ldb;
    const __m256d b0 = _mm256_maskload_pd(bp, m0);
    const __m256d b1 = _mm256_maskload_pd(bp + 4, m1);
    const double* ap = a + p * a_cs;
    for (int r = 0; r < MR; ++r) {
      const __m256d ar = _mm256_broadcast_sd(ap + r * a_rs);
      acc0[r] = _mm256_fmadd_pd(ar, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_pd(ar, b1, acc1[r]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    double* cr = c + r * ldc;
    _mm256_maskstore_pd(cr, m0, _mm256_add_pd(_mm256_maskload_pd(cr, m0), acc0[r]));
    _mm256_maskstore_pd(cr + 4, m1, _mm256_add_pd(_mm256_maskload_pd(cr + 4, m1), acc1[r]));
  }
}

using MicroFn = void (*)(std::size_t, std::size_t, const double*, std::size_t, std::size_t,
                         const double*, std::size_t, double*, std::size_t);
constexpr int kMR = 6;
constexpr MicroFn kMicro[kMR + 1] = {nullptr,   &micro<1>, &micro<2>, &micro<3>,
                                     &micro<4>, &micro<5>, &micro<6>};

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_rs,
               std::size_t a_cs, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t pc = 0; pc < k; pc += kKC) {
    const std::size_t kc = std::min(kKC, k - pc);
    for (std::size_t ic = 0; ic < m; ic += kMC) {
      const std::size_t mc = std::min(kMC, m - ic);
      for (std::size_t jc = 0; jc < n; jc += kNR) {
        const std::size_t nr = std::min(kNR, n - jc);
        for (std::size_t ir = 0; ir < mc; ir += kMR) {
          const std::size_t mr = std::min<std::size_t>(kMR, mc - ir);
          const std::size_t row = ic + ir;
          kMicro[mr](kc, nr, a + row * a_rs + pc * a_cs, a_rs, a_cs, b + pc * ldb + jc, ldb,
                     c + row * ldc + jc, ldc);
        }
      }
    }
  }
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(s0, s1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

constexpr KernelTable kAvx2{Isa::avx2, &gemm_avx2, &dot_avx2, &axpy_avx2};

}  // namespace

namespace detail {
const KernelTable* avx2_table() { return &kAvx2; }
}  // namespace detail

}  // namespace labpolicy::numeric::simd
