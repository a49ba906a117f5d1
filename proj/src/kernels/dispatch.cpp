#include <atomic>
#include <cstdlib>
#include <string>

#include "oddmap/kernels.hpp"

namespace oddmap::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(ODDMAP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("popcnt");
#else
  return false;
#endif
}

Isa clamp(Isa isa) { return (isa == Isa::Avx2 && !cpu_has_avx2()) ? Isa::Scalar : isa; }

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect_isa()};
  return isa;
}

}  // namespace

std::string_view to_string(Isa isa) noexcept { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) { return isa == Isa::Scalar || cpu_has_avx2(); }

Isa detect_isa() {
  Isa best = cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
  if (const char* env = std::getenv("ODDMAP_ISA")) {
    if (std::string(env) == "scalar") best = Isa::Scalar;
  }
  return best;
}

Isa active_isa() { return active().load(); }

void set_active_isa(Isa isa) { active().store(clamp(isa)); }

const KernelSet& kernels_for(Isa isa) {
#if defined(ODDMAP_HAVE_AVX2)
  if (clamp(isa) == Isa::Avx2) return avx2_kernels();
#endif
  (void)isa;
  return scalar_kernels();
}

const KernelSet& active_kernels() { return kernels_for(active_isa()); }

}  // namespace oddmap::kernels
