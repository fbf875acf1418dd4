#include <atomic>
#include <cstdlib>
#include <string_view>

#include "orgseg/kernels.hpp"

namespace orgseg::kernels {

#ifndef ORGSEG_HAVE_AVX2
const KernelTable* avx2_table() noexcept { return nullptr; }
#endif

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::vector<const KernelTable*> available_tables() {
  std::vector<const KernelTable*> out{&scalar_table()};
  if (avx2_table() && cpu_has_avx2()) out.push_back(avx2_table());
  return out;
}

namespace {

const KernelTable* choose_default() noexcept {
  const char* env = std::getenv("ORGSEG_KERNELS");
  if (env && std::string_view(env) == "scalar") return &scalar_table();
  if (avx2_table() && cpu_has_avx2()) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{choose_default()};
  return table;
}

}  // namespace

const KernelTable& active() noexcept { return *current().load(std::memory_order_acquire); }

bool select(std::string_view name) noexcept {
  if (name == "scalar") {
    current().store(&scalar_table(), std::memory_order_release);
    return true;
  }
  if (name == "avx2" && avx2_table() && cpu_has_avx2()) {
    current().store(avx2_table(), std::memory_order_release);
    return true;
  }
  return false;
}

}  // namespace orgseg::kernels
