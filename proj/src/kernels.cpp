#include "gtal/kernels.hpp"

#include <cassert>

#include "gtal/model.hpp"

namespace gtal {
namespace kernels {

void temporal_conv_forward(const Matrix& x, std::span<const double> w, std::span<const double> b, Matrix& pre) {
  const long long N = static_cast<long long>(x.rows());
  const std::size_t D = x.cols();
  const std::size_t H = b.size();
  assert(w.size() == 3 * D * H);
  pre = Matrix(x.rows(), H);
#pragma omp parallel for schedule(static)
  for (long long n = 0; n < N; ++n) {
    auto out = pre.row(static_cast<std::size_t>(n));
    for (std::size_t h = 0; h < H; ++h) out[h] = b[h];
    for (int tap = 0; tap < 3; ++tap) {
      const long long src = n + tap - 1;
      if (src < 0 || src >= N) continue;
      const auto in = x.row(static_cast<std::size_t>(src));
      const double* wt = w.data() + static_cast<std::size_t>(tap) * D * H;
      for (std::size_t d = 0; d < D; ++d) {
        const double xv = in[d];
        const double* wr = wt + d * H;
        for (std::size_t h = 0; h < H; ++h) out[h] += xv * wr[h];
      }
    }
  }
}

void temporal_conv_backward(const Matrix& x, const Matrix& d_pre, std::span<double> dw, std::span<double> db) {
  const long long N = static_cast<long long>(x.rows());
  const std::size_t D = x.cols();
  const std::size_t H = d_pre.cols();
  const long long rows = 3 * static_cast<long long>(D);
#pragma omp parallel for schedule(static)
  for (long long r = 0; r < rows; ++r) {
    const int tap = static_cast<int>(r / static_cast<long long>(D));
    const std::size_t d = static_cast<std::size_t>(r % static_cast<long long>(D));
    double* wr = dw.data() + static_cast<std::size_t>(r) * H;
    for (long long n = 0; n < N; ++n) {
      const long long src = n + tap - 1;
      if (src < 0 || src >= N) continue;
      const double xv = x(static_cast<std::size_t>(src), d);
      const auto g = d_pre.row(static_cast<std::size_t>(n));
      for (std::size_t h = 0; h < H; ++h) wr[h] += xv * g[h];
    }
  }
  for (long long n = 0; n < N; ++n) {
    const auto g = d_pre.row(static_cast<std::size_t>(n));
    for (std::size_t h = 0; h < H; ++h) db[h] += g[h];
  }
}

void dense_forward(const Matrix& in, std::span<const double> w, std::span<const double> b, Matrix& out) {
  const std::size_t N = in.rows(), I = in.cols(), O = b.size();
  out = Matrix(N, O);
  for (std::size_t n = 0; n < N; ++n) {
    auto o = out.row(n);
    for (std::size_t j = 0; j < O; ++j) o[j] = b[j];
    const auto x = in.row(n);
    for (std::size_t i = 0; i < I; ++i) {
      const double xv = x[i];
      const double* wr = w.data() + i * O;
      for (std::size_t j = 0; j < O; ++j) o[j] += xv * wr[j];
    }
  }
}

void dense_backward(const Matrix& in, std::span<const double> w, const Matrix& d_out, std::span<double> dw,
                    std::span<double> db, Matrix* d_in) {
  const std::size_t N = in.rows(), I = in.cols(), O = d_out.cols();
  if (d_in) *d_in = Matrix(N, I);
  for (std::size_t n = 0; n < N; ++n) {
    const auto g = d_out.row(n);
    const auto x = in.row(n);
    for (std::size_t j = 0; j < O; ++j) db[j] += g[j];
    for (std::size_t i = 0; i < I; ++i) {
      double* wr = dw.data() + i * O;
      const double* wv = w.data() + i * O;
      double acc = 0.0;
      for (std::size_t j = 0; j < O; ++j) {
        wr[j] += x[i] * g[j];
        acc += g[j] * wv[j];
      }
      if (d_in) (*d_in)(n, i) = acc;
    }
  }
}

namespace reference {

void temporal_conv_forward(const Matrix& x, std::span<const double> w, std::span<const double> b, Matrix& pre) {
  const std::size_t N = x.rows(), D = x.cols(), H = b.size();
  pre = Matrix(N, H);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t h = 0; h < H; ++h) pre(n, h) = b[h];
    for (int tap = 0; tap < 3; ++tap) {
      if ((tap == 0 && n == 0) || (tap == 2 && n + 1 == N)) continue;
      const std::size_t src = n + static_cast<std::size_t>(tap) - 1;
      for (std::size_t d = 0; d < D; ++d)
        for (std::size_t h = 0; h < H; ++h) pre(n, h) += x(src, d) * w[(static_cast<std::size_t>(tap) * D + d) * H + h];
    }
  }
}

void temporal_conv_backward(const Matrix& x, const Matrix& d_pre, std::span<double> dw, std::span<double> db) {
  const std::size_t N = x.rows(), D = x.cols(), H = d_pre.cols();
  for (int tap = 0; tap < 3; ++tap)
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t n = 0; n < N; ++n) {
        if ((tap == 0 && n == 0) || (tap == 2 && n + 1 == N)) continue;
        const std::size_t src = n + static_cast<std::size_t>(tap) - 1;
        for (std::size_t h = 0; h < H; ++h) dw[(static_cast<std::size_t>(tap) * D + d) * H + h] += x(src, d) * d_pre(n, h);
      }
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t h = 0; h < H; ++h) db[h] += d_pre(n, h);
}

}  // namespace reference
}  // namespace kernels

void accumulate(ModelParams& into, const ModelParams& g, double scale) {
  for (std::size_t t = 0; t < ModelParams::kNumTensors; ++t) {
    auto dst = into.tensor(t);
    const auto src = g.tensor(t);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  }
}

}  // namespace gtal
