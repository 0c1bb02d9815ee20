#pragma once

// Flat reduction kernels used by pi-norms and KKT residual checks.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active backend is chosen once at first use from CPU
// capabilities and can be forced with SPC_LAB_KERNELS=scalar|avx2. Results of
// the two backends agree to rounding; each backend alone is deterministic.

#include <cstddef>
#include <span>
#include <string_view>

namespace spc::kernels {

enum class Backend { kScalar, kAvx2 };

[[nodiscard]] bool avx2_supported();
[[nodiscard]] Backend active_backend();
/// Forces a backend. Requesting AVX2 on a CPU without it throws.
void set_backend(Backend backend);
[[nodiscard]] std::string_view backend_name(Backend backend);

[[nodiscard]] double dot(std::span<const double> a, std::span<const double> b);
[[nodiscard]] double sum_squares(std::span<const double> a);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
/// sum_i weights[i] * ||values[i*block : (i+1)*block]||^2
[[nodiscard]] double weighted_sum_squares(std::span<const double> values,
                                          std::span<const double> weights,
                                          std::size_t block);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double sum_squares(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double weighted_sum_squares(const double* v, const double* w, std::size_t blocks,
                            std::size_t block);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define SPC_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double sum_squares(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double weighted_sum_squares(const double* v, const double* w, std::size_t blocks,
                            std::size_t block);
}  // namespace avx2
#endif

}  // namespace spc::kernels
