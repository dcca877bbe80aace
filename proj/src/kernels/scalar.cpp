#include "mscate/kernels.hpp"

namespace mscate::kernels {
namespace {

float dot_f32(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void sum_sumsq_f32(const float* x, std::size_t n, double* sum, double* sumsq) {
  double s = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    s += v;
    ss += v * v;
  }
  *sum = s;
  *sumsq = ss;
}

double sq_dist_f32(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

constexpr KernelTable kScalar{dot_f32, dot_f64, axpy_f32, sum_sumsq_f32, sq_dist_f32};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace mscate::kernels
