#include "spc/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace spc::kernels {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_squares(const double* a, std::size_t n) { return dot(a, a, n); }

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double weighted_sum_squares(const double* v, const double* w, std::size_t blocks,
                            std::size_t block) {
    double s = 0.0;
    for (std::size_t i = 0; i < blocks; ++i) s += w[i] * sum_squares(v + i * block, block);
    return s;
}

}  // namespace scalar

namespace {

std::atomic<int> g_backend{-1};

Backend detect() {
    if (const char* env = std::getenv("SPC_LAB_KERNELS")) {
        const std::string want(env);
        if (want == "scalar") return Backend::kScalar;
        if (want == "avx2" && avx2_supported()) return Backend::kAvx2;
    }
    return avx2_supported() ? Backend::kAvx2 : Backend::kScalar;
}

}  // namespace

bool avx2_supported() {
#ifdef SPC_HAVE_AVX2_KERNELS
    static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok;
#else
    return false;
#endif
}

Backend active_backend() {
    int b = g_backend.load(std::memory_order_relaxed);
    if (b < 0) {
        b = static_cast<int>(detect());
        g_backend.store(b, std::memory_order_relaxed);
    }
    return static_cast<Backend>(b);
}

void set_backend(Backend backend) {
    if (backend == Backend::kAvx2 && !avx2_supported())
        throw std::runtime_error("AVX2 kernels requested but not supported by this CPU");
    g_backend.store(static_cast<int>(backend), std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) {
    return backend == Backend::kAvx2 ? "avx2" : "scalar";
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
#ifdef SPC_HAVE_AVX2_KERNELS
    if (active_backend() == Backend::kAvx2) return avx2::dot(a.data(), b.data(), a.size());
#endif
    return scalar::dot(a.data(), b.data(), a.size());
}

double sum_squares(std::span<const double> a) {
#ifdef SPC_HAVE_AVX2_KERNELS
    if (active_backend() == Backend::kAvx2) return avx2::sum_squares(a.data(), a.size());
#endif
    return scalar::sum_squares(a.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
#ifdef SPC_HAVE_AVX2_KERNELS
    if (active_backend() == Backend::kAvx2) return avx2::axpy(alpha, x.data(), y.data(), x.size());
#endif
    scalar::axpy(alpha, x.data(), y.data(), x.size());
}

double weighted_sum_squares(std::span<const double> values, std::span<const double> weights,
                            std::size_t block) {
    if (values.size() != weights.size() * block)
        throw std::invalid_argument("weighted_sum_squares: size mismatch");
#ifdef SPC_HAVE_AVX2_KERNELS
    if (active_backend() == Backend::kAvx2)
        return avx2::weighted_sum_squares(values.data(), weights.data(), weights.size(), block);
#endif
    return scalar::weighted_sum_squares(values.data(), weights.data(), weights.size(), block);
}

}  // namespace spc::kernels
