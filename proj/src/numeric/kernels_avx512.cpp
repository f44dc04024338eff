// Compiled with -mavx512f -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <algorithm>

#include "labpolicy/numeric/kernels.hpp"

namespace labpolicy::numeric::simd {
namespace {

constexpr std::size_t kNR = 16;
constexpr std::size_t kKC = 256;
constexpr std::size_t kMC = 96;

template <int MR>
void micro(std::size_t kc, std::size_t nr, const double* a, std::size_t a_rs, std::size_t a_cs,
           const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  __m512d acc0[MR];
  __m512d acc1[MR];
  for (int r = 0; r < MR; ++r) acc0[r] = acc1[r] = _mm512_setzero_pd();

  const __mmask8 m0 = nr >= 8 ? __mmask8(0xFF) : __mmask8((1u << nr) - 1u);
  const __mmask8 m1 = nr >= 16 ? __mmask8(0xFF) : nr > 8 ? __mmask8((1u << (nr - 8)) - 1u) : __mmask8(0);

  if (nr == kNR) {
    for (std::size_t p = 0; p < kc; ++p) {
      const double* bp = b + p * ldb;
      const __m512d b0 = _mm512_loadu_pd(bp);
      const __m512d b1 = _mm512_loadu_pd(bp + 8);
      const double* ap = a + p * a_cs;
      for (int r = 0; r < MR; ++r) {
        const __m512d ar = _mm512_set1_pd(ap[r * a_rs]);
        acc0[r] = _mm512_fmadd_pd(ar, b0, acc0[r]);
        acc1[r] = _mm512_fmadd_pd(ar, b1, acc1[r]);
      }
    }
  } else {
    for (std::size_t p = 0; p < kc; ++p) {
      const double* bp = b + p * ldb;
      const __m512d b0 = _mm512_maskz_loadu_pd(m0, bp);
      const __m512d b1 = _mm512_maskz_loadu_pd(m1, bp + 8);
      const double* ap = a + p * a_cs;
      for (int r = 0; r < MR; ++r) {
        const __m512d ar = _mm512_set1_pd(ap[r * a_rs]);
        acc0[r] = _mm512_fmadd_pd(ar, b0, acc0[r]);
        acc1[r] = _mm512_fmadd_pd(ar, b1, acc1[r]);
      }
    }
  }
  for (int r = 0; r < MR; ++r) {
    double* cr = c + r * ldc;
    _mm512_mask_storeu_pd(cr, m0, _mm512_add_pd(_mm512_maskz_loadu_pd(m0, cr), acc0[r]));
    _mm512_mask_storeu_pd(cr + 8, m1, _mm512_add_pd(_mm512_maskz_loadu_pd(m1, cr + 8), acc1[r]));
  }
}

using MicroFn = void (*)(std::size_t, std::size_t, const double*, std::size_t, std::size_t,
                         const double*, std::size_t, double*, std::size_t);
constexpr int kMR = 8;
constexpr MicroFn kMicro[kMR + 1] = {nullptr,   &micro<1>, &micro<2>, &micro<3>, &micro<4>,
                                     &micro<5>, &micro<6>, &micro<7>, &micro<8>};

void gemm_avx512(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_rs,
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

double dot_avx512(const double* x, const double* y, std::size_t n) {
  __m512d s = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) s = _mm512_fmadd_pd(_mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i), s);
  if (i < n) {
    const __mmask8 m = __mmask8((1u << (n - i)) - 1u);
    s = _mm512_fmadd_pd(_mm512_maskz_loadu_pd(m, x + i), _mm512_maskz_loadu_pd(m, y + i), s);
  }
  return _mm512_reduce_add_pd(s);
}

void axpy_avx512(std::size_t n, double alpha, const double* x, double* y) {
  const __m512d av = _mm512_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(y + i, _mm512_fmadd_pd(av, _mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i)));
  if (i < n) {
    const __mmask8 m = __mmask8((1u << (n - i)) - 1u);
    _mm512_mask_storeu_pd(y + i, m,
                          _mm512_fmadd_pd(av, _mm512_maskz_loadu_pd(m, x + i), _mm512_maskz_loadu_pd(m, y + i)));
  }
}

constexpr KernelTable kAvx512{Isa::avx512, &gemm_avx512, &dot_avx512, &axpy_avx512};

}  // namespace

namespace detail {
const KernelTable* avx512_table() { return &kAvx512; }
}  // namespace detail

}  // namespace labpolicy::numeric::simd
