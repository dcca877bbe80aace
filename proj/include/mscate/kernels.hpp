#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference version and
// optional SIMD versions (AVX2+FMA on x86-64, NEON on AArch64). The active
// variant is chosen once at runtime from CPU features and can be forced to the
// scalar reference with MSCATE_SIMD=scalar or force_isa().

#include <cstddef>
#include <span>
#include <string_view>

namespace mscate::kernels {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  float (*dot_f32)(const float* a, const float* b, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy_f32)(float alpha, const float* x, float* y, std::size_t n);
  // Sum and sum of squares, accumulated in double.
  void (*sum_sumsq_f32)(const float* x, std::size_t n, double* sum, double* sumsq);
  // Squared Euclidean distance, accumulated in double.
  double (*sq_dist_f32)(const float* a, const float* b, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the variant is not compiled in or not supported by this CPU.
const KernelTable* avx2_table();
const KernelTable* neon_table();

Isa detected_isa();
Isa active_isa();
void force_isa(Isa isa);
const KernelTable& active();

std::string_view isa_name(Isa isa);
Isa parse_isa(std::string_view name);

inline float dot(std::span<const float> a, std::span<const float> b) {
  return active().dot_f32(a.data(), b.data(), a.size());
}
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot_f64(a.data(), b.data(), a.size());
}
inline void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  active().axpy_f32(alpha, x.data(), y.data(), x.size());
}
inline void sum_sumsq(std::span<const float> x, double& sum, double& sumsq) {
  active().sum_sumsq_f32(x.data(), x.size(), &sum, &sumsq);
}
inline double sq_dist(std::span<const float> a, std::span<const float> b) {
  return active().sq_dist_f32(a.data(), b.data(), a.size());
}

}  // namespace mscate::kernels
