#include <atomic>
#include <cstdlib>
#include <string>

#include "nncert/error.hpp"
#include "nncert/kernels.hpp"

namespace nncert::kernels {

#if defined(NNCERT_HAVE_AVX2)
const Table* avx2_table_impl() noexcept;
#endif

const Table* avx2_table() noexcept {
#if defined(NNCERT_HAVE_AVX2)
  return avx2_table_impl();
#else
  return nullptr;
#endif
}

std::string_view name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

bool supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(NNCERT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

namespace {

Isa initial_isa() noexcept {
  if (const char* env = std::getenv("NNCERT_ISA"); env && std::string(env) == "scalar")
    return Isa::Scalar;
  return supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& current() noexcept {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

const Table& table() noexcept {
  return current().load(std::memory_order_relaxed) == Isa::Avx2 ? *avx2_table() : scalar_table();
}

void check_size(bool ok) {
  if (!ok) throw Error(ErrorKind::DimensionMismatch, "kernel operand sizes differ");
}

}  // namespace

Isa active() noexcept { return current().load(std::memory_order_relaxed); }

void select(Isa isa) {
  if (!supported(isa))
    throw Error(ErrorKind::InvalidArg, std::string("ISA not available: ") + std::string(name(isa)));
  current().store(isa, std::memory_order_relaxed);
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_size(a.size() == b.size());
  return table().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_size(x.size() == y.size());
  table().axpy(alpha, x.data(), y.data(), x.size());
}

void scale(double alpha, std::span<double> x) { table().scale(alpha, x.data(), x.size()); }

void relu(std::span<double> x) { table().relu(x.data(), x.size()); }

void affine(const Matrix& a, std::span<const double> x, std::span<const double> c,
            std::span<double> out) {
  check_size(a.cols() == x.size() && a.rows() == c.size() && a.rows() == out.size());
  table().affine(a.data(), a.rows(), a.cols(), x.data(), c.data(), out.data());
}

void interval_affine(const Matrix& a, std::span<const double> lo, std::span<const double> hi,
                     std::span<const double> c, std::span<double> out_lo,
                     std::span<double> out_hi) {
  check_size(a.cols() == lo.size() && a.cols() == hi.size() && a.rows() == c.size() &&
             a.rows() == out_lo.size() && a.rows() == out_hi.size());
  table().interval_affine(a.data(), a.rows(), a.cols(), lo.data(), hi.data(), c.data(),
                          out_lo.data(), out_hi.data());
}

}  // namespace nncert::kernels
