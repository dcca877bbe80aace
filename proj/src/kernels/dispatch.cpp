#include <atomic>
#include <cstdlib>
#include <string>

#include "mscate/error.hpp"
#include "mscate/kernels.hpp"

namespace mscate::kernels {

#if defined(MSCATE_HAVE_AVX2)
const KernelTable& avx2_table_unchecked();
#endif
#if defined(MSCATE_HAVE_NEON)
const KernelTable& neon_table_unchecked();
#endif

const KernelTable* avx2_table() {
#if defined(MSCATE_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(MSCATE_HAVE_NEON)
  return &neon_table_unchecked();  // NEON is mandatory on AArch64
#else
  return nullptr;
#endif
}

Isa detected_isa() {
  if (avx2_table() != nullptr) return Isa::Avx2;
  if (neon_table() != nullptr) return Isa::Neon;
  return Isa::Scalar;
}

namespace {

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::Avx2: return avx2_table();
    case Isa::Neon: return neon_table();
    case Isa::Scalar: return &scalar_table();
  }
  return nullptr;
}

Isa initial_isa() {
  if (const char* env = std::getenv("MSCATE_SIMD"); env != nullptr && *env != '\0') {
    const Isa wanted = parse_isa(env);
    if (table_for(wanted) != nullptr) return wanted;
  }
  return detected_isa();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  require(table_for(isa) != nullptr, ErrorCode::InvalidArgument,
          std::string("SIMD variant not available on this machine: ") + std::string(isa_name(isa)));
  current().store(isa, std::memory_order_relaxed);
}

const KernelTable& active() { return *table_for(active_isa()); }

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::Scalar;
  if (name == "avx2") return Isa::Avx2;
  if (name == "neon") return Isa::Neon;
  if (name == "auto") return detected_isa();
  fail(ErrorCode::InvalidArgument, "unknown SIMD variant '" + std::string(name) + "'");
}

}  // namespace mscate::kernels
