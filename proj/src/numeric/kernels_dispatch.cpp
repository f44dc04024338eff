#include <cstdlib>
#include <string>

#include "labpolicy/numeric/kernels.hpp"

namespace labpolicy::numeric::simd {
namespace {

bool cpu_has(Isa isa) {
#if defined(__x86_64__) || defined(__i386__)
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::avx512:
      return __builtin_cpu_supports("avx512f");
  }
  return false;
#else
  return isa == Isa::scalar;
#endif
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("LABPOLICY_SIMD")) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512})
      if (want == isa_name(isa))
        if (const KernelTable* t = kernels_for(isa)) return t;
  }
  for (Isa isa : {Isa::avx512, Isa::avx2})
    if (const KernelTable* t = kernels_for(isa)) return t;
  return &scalar_kernels();
}

const KernelTable*& active_slot() {
  static const KernelTable* slot = pick_default();
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::avx512:
      return "avx512";
  }
  return "unknown";
}

const KernelTable* kernels_for(Isa isa) {
  if (!cpu_has(isa)) return nullptr;
  switch (isa) {
    case Isa::scalar:
      return &scalar_kernels();
    case Isa::avx2:
      return detail::avx2_table();
    case Isa::avx512:
      return detail::avx512_table();
  }
  return nullptr;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512})
    if (kernels_for(isa)) out.push_back(isa);
  return out;
}

const KernelTable& active() { return *active_slot(); }

bool force_isa(Isa isa) {
  const KernelTable* t = kernels_for(isa);
  if (!t) return false;
  active_slot() = t;
  return true;
}

}  // namespace labpolicy::numeric::simd
