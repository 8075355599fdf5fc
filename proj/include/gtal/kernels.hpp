#pragma once

#include <cstddef>
#include <exception>
#include <span>
#include <type_traits>
#include <vector>

#include "gtal/common.hpp"

namespace gtal {

struct ModelParams;

namespace kernels {

// Kernel-3 zero-padded temporal convolution. `w` is [tap][d][h] with taps
// (n-1, n, n+1). OpenMP over snippets / weight rows; each output element is
// summed in the same order as the reference, so results are bit-identical.
void temporal_conv_forward(const Matrix& x, std::span<const double> w, std::span<const double> b, Matrix& pre);
void temporal_conv_backward(const Matrix& x, const Matrix& d_pre, std::span<double> dw, std::span<double> db);

// out = in * W + b, W stored [in][out].
void dense_forward(const Matrix& in, std::span<const double> w, std::span<const double> b, Matrix& out);
// dW += in^T * d_out, db += colsum(d_out), d_in = d_out * W^T.
void dense_backward(const Matrix& in, std::span<const double> w, const Matrix& d_out, std::span<double> dw,
                    std::span<double> db, Matrix* d_in);

namespace reference {

void temporal_conv_forward(const Matrix& x, std::span<const double> w, std::span<const double> b, Matrix& pre);
void temporal_conv_backward(const Matrix& x, const Matrix& d_pre, std::span<double> dw, std::span<double> db);

}  // namespace reference

}  // namespace kernels

enum class Execution { serial, parallel };

/// Evaluates fn(i) for i in [0, n) and returns the results in index order.
/// With Execution::parallel the calls are spread over OpenMP threads.
template <class Fn>
auto map_indexed(std::size_t n, Execution ex, Fn&& fn) -> std::vector<std::invoke_result_t<Fn&, std::size_t>> {
  using R = std::invoke_result_t<Fn&, std::size_t>;
  std::vector<R> out(n);
  if (ex == Execution::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::exception_ptr failure;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(gtal_map_indexed)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

/// into += scale * g, tensor by tensor.
void accumulate(ModelParams& into, const ModelParams& g, double scale);

}  // namespace gtal
