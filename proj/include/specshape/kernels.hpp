#pragma once

// Inner-loop kernels over contiguous double arrays.
//
// Every kernel has a scalar reference implementation; SIMD variants (AVX2 on
// x86-64, NEON on aarch64) are compiled when the toolchain supports them and
// picked at runtime from the CPU feature bits. Element-wise kernels (axpy,
// scale, rotate, axpby) are bit-identical across backends because the SIMD
// paths use the same unfused multiply/add sequence. Reductions (dot,
// sum_squares) accumulate in several lanes and agree with the scalar path to
// a few ulps of the summed magnitudes.
//
// The backend can be forced with SPECSHAPE_KERNELS=scalar|avx2|neon.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace specshape::kernels {

enum class Backend { Scalar, Avx2, Neon };

struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_squares)(const double* a, std::size_t n);
  // y <- y + alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y <- alpha * x + beta * y
  void (*axpby)(double alpha, const double* x, double beta, double* y, std::size_t n);
  void (*scale)(double alpha, double* x, std::size_t n);
  // (x, y) <- (c*x - s*y, s*x + c*y)
  void (*rotate)(double* x, double* y, double c, double s, std::size_t n);
};

std::string_view to_string(Backend b) noexcept;

bool backend_available(Backend b) noexcept;
std::vector<Backend> available_backends();

const KernelTable& table(Backend b);
const KernelTable& active();
Backend active_backend() noexcept;

/// Switches the process-wide backend. Intended for tests and benchmarks; the
/// switch is atomic but callers running concurrently may see either table.
void set_backend(Backend b);

/// RAII backend override for a scope.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b);
  ~ScopedBackend();
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double sum_squares(std::span<const double> a) {
  return active().sum_squares(a.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), y.size());
}
inline void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y) {
  active().axpby(alpha, x.data(), beta, y.data(), y.size());
}
inline void scale(double alpha, std::span<double> x) {
  active().scale(alpha, x.data(), x.size());
}
inline void rotate(std::span<double> x, std::span<double> y, double c, double s) {
  active().rotate(x.data(), y.data(), c, s, x.size());
}

namespace detail {
const KernelTable& scalar_table() noexcept;
#if defined(SPECSHAPE_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif
#if defined(SPECSHAPE_HAVE_NEON)
const KernelTable& neon_table() noexcept;
#endif
}  // namespace detail

}  // namespace specshape::kernels
