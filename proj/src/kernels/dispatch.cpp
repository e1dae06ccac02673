#include <cstdlib>
#include <cstring>

#include "nnf/error.hpp"
#include "nnf/kernels.hpp"

namespace nnf::kern {

extern const Ops kScalarOps;
#if defined(__x86_64__) || defined(_M_X64)
extern const Ops kAvx2Ops;
extern const Ops kAvx512Ops;
#endif

namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::Avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::Avx512:
      return __builtin_cpu_supports("avx512f");
#else
    case Isa::Avx2:
    case Isa::Avx512:
      return false;
#endif
  }
  return false;
}

Isa pick_default() {
  if (const char* env = std::getenv("NNF_ISA")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::Scalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_supports(Isa::Avx2))
      return Isa::Avx2;
    if (std::strcmp(env, "avx512") == 0 && cpu_supports(Isa::Avx512))
      return Isa::Avx512;
  }
  if (cpu_supports(Isa::Avx512)) return Isa::Avx512;
  if (cpu_supports(Isa::Avx2)) return Isa::Avx2;
  return Isa::Scalar;
}

Isa g_active = pick_default();

}  // namespace

const Ops* ops_for(Isa isa) {
  if (!cpu_supports(isa)) return nullptr;
  switch (isa) {
    case Isa::Scalar:
      return &kScalarOps;
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::Avx2:
      return &kAvx2Ops;
    case Isa::Avx512:
      return &kAvx512Ops;
#else
    default:
      return nullptr;
#endif
  }
  return nullptr;
}

const Ops& ops() { return *ops_for(g_active); }

Isa active_isa() { return g_active; }

void force_isa(Isa isa) {
  if (!cpu_supports(isa))
    raise(ErrorCode::ConfigError,
          "requested kernel ISA not supported on this CPU: " + isa_name(isa));
  g_active = isa;
}

std::string isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
    case Isa::Avx512:
      return "avx512";
  }
  return "?";
}

}  // namespace nnf::kern
