#pragma once

// Dense double-precision inner loops used by the autograd engine.
//
// Every kernel exists as a portable scalar reference and, where the target
// supports it, a SIMD variant (AVX2+FMA on x86-64, NEON on AArch64). The
// active table is chosen once per process from CPU features; setting
// SEVAE_KERNELS=scalar in the environment forces the reference path.

#include <cstddef>
#include <string_view>

namespace sevae::kernels {

struct KernelTable {
  std::string_view name;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
  // max_i x[i]; n must be >= 1
  double (*max)(const double* x, std::size_t n);
};

const KernelTable& scalar_table();

// Null when the variant was not compiled in or the CPU lacks the features.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// The table all library code goes through.
const KernelTable& active();

// Overrides the dispatch decision (tests use this to pin a variant).
void set_active(const KernelTable& table);

inline double dot(const double* x, const double* y, std::size_t n) { return active().dot(x, y, n); }
inline void axpy(double a, const double* x, double* y, std::size_t n) { active().axpy(a, x, y, n); }
inline double sum(const double* x, std::size_t n) { return active().sum(x, n); }
inline double max(const double* x, std::size_t n) { return active().max(x, n); }

}  // namespace sevae::kernels
