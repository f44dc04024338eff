// Linked on targets without the x86 SIMD translation units.
#include "labpolicy/numeric/kernels.hpp"

namespace labpolicy::numeric::simd::detail {
const KernelTable* avx2_table() { return nullptr; }
const KernelTable* avx512_table() { return nullptr; }
}  // namespace labpolicy::numeric::simd::detail
