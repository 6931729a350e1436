#include <atomic>
#include <cstdlib>
#include <string>

#include "drig/kernels.hpp"

namespace drig::kernels {

namespace {

struct Table {
    double (*dot)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    void (*add_scalar)(double*, std::size_t, double);
};

constexpr Table scalar_table{&scalar::dot, &scalar::sum, &scalar::add_scalar};
#if defined(DRIG_HAVE_AVX2_KERNELS)
constexpr Table avx2_table{&avx2::dot, &avx2::sum, &avx2::add_scalar};
#endif

const Table& table_for(Isa isa) {
#if defined(DRIG_HAVE_AVX2_KERNELS)
    if (isa == Isa::avx2) return avx2_table;
#endif
    (void)isa;
    return scalar_table;
}

Isa initial_isa() {
    Isa best = supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
    if (const char* forced = std::getenv("DRIG_KERNELS")) {
        const std::string name(forced);
        if (name == "scalar") return Isa::scalar;
        if (name == "avx2" && supported(Isa::avx2)) return Isa::avx2;
    }
    return best;
}

std::atomic<Isa>& active() {
    static std::atomic<Isa> isa{initial_isa()};
    return isa;
}

const Table& current() { return table_for(active().load(std::memory_order_relaxed)); }

void check_sizes(std::size_t a, std::size_t b) {
    if (a != b) throw Error(ErrorKind::InvalidInput, "kernel operands differ in length");
}

}  // namespace

std::string_view to_string(Isa isa) {
    return isa == Isa::avx2 ? "avx2" : "scalar";
}

bool supported(Isa isa) {
    if (isa == Isa::scalar) return true;
#if defined(DRIG_HAVE_AVX2_KERNELS)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
    if (!supported(isa)) {
        throw Error(ErrorKind::InvalidInput, std::string("kernel ISA not supported: ") +
                                                 std::string(to_string(isa)));
    }
    active().store(isa, std::memory_order_relaxed);
}

double dot(std::span<const double> a, std::span<const double> b) {
    check_sizes(a.size(), b.size());
    return current().dot(a.data(), b.data(), a.size());
}

double sum(std::span<const double> a) { return current().sum(a.data(), a.size()); }

void add_scalar(std::span<double> a, double value) {
    current().add_scalar(a.data(), a.size(), value);
}

Matrix cross_product(const Matrix& x) {
    const auto n = static_cast<std::size_t>(x.rows());
    const Eigen::Index d = x.cols();
    const Table& t = current();
    Matrix out(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i; j < d; ++j) {
            const double v = t.dot(x.col(i).data(), x.col(j).data(), n);
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

Vector column_sums(const Matrix& x) {
    const auto n = static_cast<std::size_t>(x.rows());
    const Table& t = current();
    Vector out(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) out(j) = t.sum(x.col(j).data(), n);
    return out;
}

}  // namespace drig::kernels
