#include <atomic>
#include <cstdlib>
#include <string_view>

#include "lkmrl/kernels.hpp"

namespace lkmrl::kernels {

#if defined(LKMRL_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* avx2() {
#if defined(LKMRL_HAVE_AVX2)
  static const bool ok = cpu_has_avx2_fma();
  return ok ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* by_name(std::string_view name) {
  if (name == "scalar") return &scalar();
  if (name == "avx2") return avx2();
  return nullptr;
}

namespace {

const KernelTable* pick_default() {
  if (const char* env = std::getenv("LKMRL_KERNELS")) {
    if (const KernelTable* t = by_name(env)) return t;
  }
  if (const KernelTable* t = avx2()) return t;
  return &scalar();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{pick_default()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(const KernelTable& table) {
  slot().store(&table, std::memory_order_release);
}

}  // namespace lkmrl::kernels
