#include <atomic>
#include <cstdlib>
#include <string>

#include "kids/errors.hpp"
#include "kids/kernels.hpp"

namespace kids::kern {

#ifndef KIDS_WITH_AVX2
bool cpu_has_avx2() { return false; }
const KernelTable* avx2_table() { return nullptr; }
#endif

namespace {

std::atomic<const KernelTable*> g_active{nullptr};

const KernelTable* resolve_from_env() {
  const char* env = std::getenv("KIDS_KERNEL");
  const std::string choice = env ? env : "auto";
  if (choice == "scalar") return &scalar_table();
  if (choice == "avx2") {
    if (const KernelTable* t = avx2_table()) return t;
    return &scalar_table();  // requested backend unavailable; fall back
  }
  if (choice != "auto")
    throw DataError("KIDS_KERNEL must be scalar, avx2, or auto; got \"" +
                    choice + "\"");
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

}  // namespace

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    t = resolve_from_env();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

void set_backend(Backend b) {
  const KernelTable* t = &scalar_table();
  if (b == Backend::kAvx2) {
    if (const KernelTable* avx = avx2_table()) t = avx;
  }
  g_active.store(t, std::memory_order_release);
}

std::string active_name() { return active().name; }

}  // namespace kids::kern
