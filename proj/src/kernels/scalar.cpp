#include "drig/kernels.hpp"

namespace drig::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

void add_scalar(double* a, std::size_t n, double value) {
    for (std::size_t i = 0; i < n; ++i) a[i] += value;
}

}  // namespace drig::kernels::scalar
