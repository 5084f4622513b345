#pragma once

// Data-parallel inner loops shared by the forward pass, interval
// propagation, the simplex tableau update and training. Each kernel has a
// scalar reference implementation and, on x86-64, an AVX2 variant. The
// variant is chosen once at startup from CPUID; NNCERT_ISA=scalar in the
// environment (or select()) forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

#include "nncert/linalg.hpp"

namespace nncert::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view name(Isa isa) noexcept;
bool supported(Isa isa) noexcept;
Isa active() noexcept;
/// Throws Error(InvalidArg) when the CPU or the build lacks the ISA.
void select(Isa isa);

double dot(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> x);
void relu(std::span<double> x);
/// out = A x + c
void affine(const Matrix& a, std::span<const double> x, std::span<const double> c,
            std::span<double> out);
/// Interval image of the box [lo, hi] under x -> A x + c.
void interval_affine(const Matrix& a, std::span<const double> lo, std::span<const double> hi,
                     std::span<const double> c, std::span<double> out_lo,
                     std::span<double> out_hi);

// Raw entry points for each ISA; used by the dispatcher and by the
// equivalence tests.
struct Table {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*scale)(double alpha, double* x, std::size_t n);
  void (*relu)(double* x, std::size_t n);
  void (*affine)(const double* a, std::size_t rows, std::size_t cols, const double* x,
                 const double* c, double* out);
  void (*interval_affine)(const double* a, std::size_t rows, std::size_t cols, const double* lo,
                          const double* hi, const double* c, double* out_lo, double* out_hi);
};

const Table& scalar_table() noexcept;
/// Null when the build has no AVX2 variant.
const Table* avx2_table() noexcept;

}  // namespace nncert::kernels
