#include <atomic>
#include <cstdlib>
#include <string_view>

#include "sevae/kernels.hpp"

namespace sevae::kernels {
namespace {

const KernelTable* detect() {
  if (const char* forced = std::getenv("SEVAE_KERNELS"); forced && std::string_view(forced) == "scalar") {
    return &scalar_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  if (const KernelTable* t = neon_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{detect()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(const KernelTable& table) { slot().store(&table, std::memory_order_relaxed); }

}  // namespace sevae::kernels
