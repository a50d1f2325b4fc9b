#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "sevae/kernels.hpp"

using namespace sevae;

namespace {

std::vector<const kernels::KernelTable*> simd_tables() {
  std::vector<const kernels::KernelTable*> out;
  if (auto* t = kernels::avx2_table()) out.push_back(t);
  if (auto* t = kernels::neon_table()) out.push_back(t);
  return out;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("scalar reference kernels on hand values") {
  const auto& s = kernels::scalar_table();
  const double x[] = {1, 2, 3, 4, 5};
  double y[] = {1, 1, 1, 1, 1};
  CHECK(s.dot(x, x, 5) == 55.0);
  CHECK(s.sum(x, 5) == 15.0);
  CHECK(s.max(x, 5) == 5.0);
  s.axpy(2.0, x, y, 5);
  CHECK(y[4] == 11.0);
  CHECK(s.dot(x, x, 0) == 0.0);
}

TEST_CASE("SIMD kernels agree with the scalar reference") {
  const auto& ref = kernels::scalar_table();
  std::mt19937_64 rng(7);
  for (const auto* t : simd_tables()) {
    CAPTURE(t->name);
    for (std::size_t n : {0ul, 1ul, 2ul, 3ul, 4ul, 5ul, 7ul, 8ul, 9ul, 15ul, 16ul, 17ul, 31ul, 100ul, 1023ul}) {
      CAPTURE(n);
      auto a = random_vec(n, rng);
      auto b = random_vec(n, rng);
      const double tol = 1e-12 * (1.0 + static_cast<double>(n));
      CHECK(std::abs(t->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= tol * 10);
      CHECK(std::abs(t->sum(a.data(), n) - ref.sum(a.data(), n)) <= tol);
      if (n > 0) CHECK(t->max(a.data(), n) == ref.max(a.data(), n));
      auto y1 = b, y2 = b;
      t->axpy(0.37, a.data(), y1.data(), n);
      ref.axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-15 * (1.0 + std::abs(y2[i])));
    }
  }
}

TEST_CASE("max handles negative values and a leading maximum") {
  for (const auto* t : simd_tables()) {
    std::vector<double> v(13, -5.0);
    v[0] = -1.0;
    CHECK(t->max(v.data(), v.size()) == -1.0);
    v[12] = 2.0;
    CHECK(t->max(v.data(), v.size()) == 2.0);
  }
}

TEST_CASE("active table can be pinned") {
  const auto& before = kernels::active();
  kernels::set_active(kernels::scalar_table());
  CHECK(kernels::active().name == kernels::scalar_table().name);
  kernels::set_active(before);
  CHECK(kernels::active().name == before.name);
}
