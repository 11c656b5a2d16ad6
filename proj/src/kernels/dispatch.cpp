#include <atomic>
#include <cstdlib>
#include <string>

#include "specshape/error.hpp"
#include "specshape/kernels.hpp"

namespace specshape::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(SPECSHAPE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* select_initial() {
  const char* forced = std::getenv("SPECSHAPE_KERNELS");
  if (forced != nullptr) {
    const std::string name(forced);
    if (name == "scalar") return &detail::scalar_table();
    if (name == "avx2" && backend_available(Backend::Avx2)) return &table(Backend::Avx2);
    if (name == "neon" && backend_available(Backend::Neon)) return &table(Backend::Neon);
  }
  if (backend_available(Backend::Avx2)) return &table(Backend::Avx2);
  if (backend_available(Backend::Neon)) return &table(Backend::Neon);
  return &detail::scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> ptr{select_initial()};
  return ptr;
}

}  // namespace

std::string_view to_string(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

bool backend_available(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar: return true;
    case Backend::Avx2: return cpu_has_avx2();
    case Backend::Neon:
#if defined(SPECSHAPE_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon}) {
    if (backend_available(b)) out.push_back(b);
  }
  return out;
}

const KernelTable& table(Backend b) {
  if (!backend_available(b)) {
    throw Error(ErrorKind::InvalidConfig, "kernel backend not available: " + std::string(to_string(b)));
  }
  switch (b) {
#if defined(SPECSHAPE_HAVE_AVX2)
    case Backend::Avx2: return detail::avx2_table();
#endif
#if defined(SPECSHAPE_HAVE_NEON)
    case Backend::Neon: return detail::neon_table();
#endif
    default: return detail::scalar_table();
  }
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

Backend active_backend() noexcept { return current().load(std::memory_order_acquire)->backend; }

void set_backend(Backend b) { current().store(&table(b), std::memory_order_release); }

ScopedBackend::ScopedBackend(Backend b) : previous_(active_backend()) { set_backend(b); }
ScopedBackend::~ScopedBackend() { set_backend(previous_); }

}  // namespace specshape::kernels
