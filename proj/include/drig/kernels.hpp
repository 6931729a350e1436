#pragma once

// Data-parallel inner loops behind moment estimation. Each kernel has a scalar
// reference implementation and, on x86-64, an AVX2/FMA variant; the variant is
// chosen once at runtime from the CPU feature bits and can be pinned with the
// DRIG_KERNELS environment variable ("scalar" or "avx2").

#include <cstddef>
#include <span>
#include <string_view>

#include "drig/linalg.hpp"

namespace drig::kernels {

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa);

bool supported(Isa isa);

/// Best supported ISA, unless DRIG_KERNELS overrides it.
Isa active_isa();

/// Pins the dispatch target; throws InvalidInput for an unsupported ISA.
void set_active_isa(Isa isa);

double dot(std::span<const double> a, std::span<const double> b);
double sum(std::span<const double> a);
void add_scalar(std::span<double> a, double value);

/// x^T x for column-major data (n rows, d columns), built from column dot products.
Matrix cross_product(const Matrix& x);

/// Column sums of column-major data.
Vector column_sums(const Matrix& x);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
void add_scalar(double* a, std::size_t n, double value);
}  // namespace scalar

#if defined(DRIG_HAVE_AVX2_KERNELS)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
void add_scalar(double* a, std::size_t n, double value);
}  // namespace avx2
#endif

}  // namespace drig::kernels
