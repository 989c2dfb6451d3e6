#pragma once

#include <cstddef>

// Dense inner loops of the network. Each kernel exists twice: a plain serial
// reference under kernels::serial and an OpenMP version under
// kernels::parallel. Every output element is produced by exactly one thread
// with the same summation order as the reference, so the two variants are
// bitwise identical for any thread count. ssfl_bench compares their speed.
namespace ssfl::kernels {

namespace serial {

// y[B x Out] = x[B x In] * w[In x Out] + b[Out]
void linear_forward(const double* x, const double* w, const double* b, double* y,
                    std::size_t rows, std::size_t in, std::size_t out);

// dw[In x Out] = x^T[In x B] * dy[B x Out]
void grad_weights(const double* x, const double* dy, double* dw,
                  std::size_t rows, std::size_t in, std::size_t out);

// db[Out] = column sums of dy[B x Out]
void grad_bias(const double* dy, double* db, std::size_t rows, std::size_t out);

// dx[B x In] = dy[B x Out] * w^T[Out x In]
void grad_input(const double* dy, const double* w, double* dx,
                std::size_t rows, std::size_t in, std::size_t out);

}  // namespace serial

namespace parallel {

void linear_forward(const double* x, const double* w, const double* b, double* y,
                    std::size_t rows, std::size_t in, std::size_t out);
void grad_weights(const double* x, const double* dy, double* dw,
                  std::size_t rows, std::size_t in, std::size_t out);
void grad_bias(const double* dy, double* db, std::size_t rows, std::size_t out);
void grad_input(const double* dy, const double* w, double* dx,
                std::size_t rows, std::size_t in, std::size_t out);

}  // namespace parallel

using parallel::grad_bias;
using parallel::grad_input;
using parallel::grad_weights;
using parallel::linear_forward;

}  // namespace ssfl::kernels
