#pragma once

// Dense inner loops used by the autodiff tape. Every kernel has a scalar
// reference implementation; SIMD variants are selected once at runtime and
// must agree with the reference to rounding (see tests/unit/test_kernels.cpp).

#include <cstddef>
#include <string_view>
#include <vector>

namespace labpolicy::numeric::simd {

enum class Isa { scalar, avx2, avx512 };

std::string_view isa_name(Isa isa);

// C[m×n] += A·B where A(i,p) = a[i*a_rs + p*a_cs] (so row-major A and its
// transpose share one kernel), B is row-major with leading dimension ldb.
using GemmFn = void (*)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                        std::size_t a_rs, std::size_t a_cs, const double* b, std::size_t ldb,
                        double* c, std::size_t ldc);
using DotFn = double (*)(const double* x, const double* y, std::size_t n);
// y += alpha * x
using AxpyFn = void (*)(std::size_t n, double alpha, const double* x, double* y);

struct KernelTable {
  Isa isa;
  GemmFn gemm;
  DotFn dot;
  AxpyFn axpy;
};

const KernelTable& scalar_kernels();
// nullptr when the variant was not compiled in or the CPU lacks the ISA.
const KernelTable* kernels_for(Isa isa);
std::vector<Isa> available_isas();

// Best supported ISA, or the one named by LABPOLICY_SIMD=scalar|avx2|avx512.
const KernelTable& active();
// Overrides the active table (tests, benchmarks). Returns false if unsupported.
bool force_isa(Isa isa);

namespace detail {
const KernelTable* avx2_table();
const KernelTable* avx512_table();
}  // namespace detail

}  // namespace labpolicy::numeric::simd
