#pragma once

// Slow, independent reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace mscate::oracle {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major, n x n).
// Returns eigenvalues sorted descending with matching eigenvectors as rows.
struct Eigen {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};

inline Eigen jacobi(std::vector<double> a, std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });
  Eigen e;
  for (std::size_t k : idx) {
    e.values.push_back(a[k * n + k]);
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = v[i * n + k];
    e.vectors.push_back(col);
  }
  return e;
}

// TOC sums straight from the definition: for each j, average gamma over the j
// highest-priority units (ties broken by position) minus the overall average.
inline std::vector<double> toc_by_definition(const std::vector<double>& gamma, const std::vector<double>& priority) {
  const std::size_t n = gamma.size();
  std::vector<double> toc(n);
  double total = 0;
  for (double g : gamma) total += g;
  const double ate = total / static_cast<double>(n);
  for (std::size_t j = 1; j <= n; ++j) {
    // Select the top j by repeated scanning, not by sorting.
    std::vector<bool> taken(n, false);
    double sum = 0;
    for (std::size_t k = 0; k < j; ++k) {
      std::size_t best = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        if (best == n || priority[i] > priority[best]) best = i;
      }
      taken[best] = true;
      sum += gamma[best];
    }
    toc[j - 1] = sum / static_cast<double>(j) - ate;
  }
  return toc;
}

inline double autoc_by_definition(const std::vector<double>& gamma, const std::vector<double>& priority) {
  const auto toc = toc_by_definition(gamma, priority);
  double s = 0;
  for (double t : toc) s += t;
  return s / static_cast<double>(gamma.size());
}

inline double qini_by_definition(const std::vector<double>& gamma, const std::vector<double>& priority) {
  const auto toc = toc_by_definition(gamma, priority);
  const double n = static_cast<double>(gamma.size());
  double s = 0;
  for (std::size_t j = 1; j <= toc.size(); ++j) s += (static_cast<double>(j) / n) * toc[j - 1];
  return s / n;
}

// Policy gain at spend fraction B: treat units with positive priority among
// the ceil-free top floor(B n + 1e-9) ranks, average Gamma over all n.
inline double policy_gain_by_definition(const std::vector<double>& gamma, const std::vector<double>& priority,
                                        std::size_t j) {
  const std::size_t n = gamma.size();
  std::vector<bool> taken(n, false);
  double sum = 0;
  for (std::size_t k = 0; k < j; ++k) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || priority[i] > priority[best]) best = i;
    }
    taken[best] = true;
    if (priority[best] > 0) sum += gamma[best];
  }
  return sum / static_cast<double>(n);
}

}  // namespace mscate::oracle
