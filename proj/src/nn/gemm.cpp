#include "gemm.hpp"

#include <algorithm>
#include <cstring>

namespace depl::nn::detail {

namespace {

// GCC/Clang vector extensions; lowered to whatever SIMD width the target has.
using v8d = double __attribute__((vector_size(64)));
using v4d = double __attribute__((vector_size(32)));

template <typename V>
inline V load(const double* p) {
  V v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename V>
inline void add_store(double* p, V v) {
  V o;
  std::memcpy(&o, p, sizeof o);
  o += v;
  std::memcpy(p, &o, sizeof o);
}

// A element (r, p) lives at a[r * rs + p * cs], so one kernel serves both
// A and A^T operands.
struct AView {
  const double* a;
  std::size_t rs;
  std::size_t cs;

  double operator()(std::size_t r, std::size_t p) const { return a[r * rs + p * cs]; }
};

// C[4 x 16] += A[4 x k] * B[k x 16], accumulated in registers.
inline void kernel_4x16(std::size_t k, AView a, const double* b, std::size_t ldb, double* c,
                        std::size_t ldc) {
  v8d c00{}, c01{}, c10{}, c11{}, c20{}, c21{}, c30{}, c31{};
  for (std::size_t p = 0; p < k; ++p) {
    const v8d b0 = load<v8d>(b + p * ldb);
    const v8d b1 = load<v8d>(b + p * ldb + 8);
    const double a0 = a(0, p), a1 = a(1, p), a2 = a(2, p), a3 = a(3, p);
    c00 += a0 * b0;
    c01 += a0 * b1;
    c10 += a1 * b0;
    c11 += a1 * b1;
    c20 += a2 * b0;
    c21 += a2 * b1;
    c30 += a3 * b0;
    c31 += a3 * b1;
  }
  add_store(c, c00);
  add_store(c + 8, c01);
  add_store(c + ldc, c10);
  add_store(c + ldc + 8, c11);
  add_store(c + 2 * ldc, c20);
  add_store(c + 2 * ldc + 8, c21);
  add_store(c + 3 * ldc, c30);
  add_store(c + 3 * ldc + 8, c31);
}

inline void kernel_4x4(std::size_t k, AView a, const double* b, std::size_t ldb, double* c,
                       std::size_t ldc) {
  v4d c0{}, c1{}, c2{}, c3{};
  for (std::size_t p = 0; p < k; ++p) {
    const v4d bv = load<v4d>(b + p * ldb);
    c0 += a(0, p) * bv;
    c1 += a(1, p) * bv;
    c2 += a(2, p) * bv;
    c3 += a(3, p) * bv;
  }
  add_store(c, c0);
  add_store(c + ldc, c1);
  add_store(c + 2 * ldc, c2);
  add_store(c + 3 * ldc, c3);
}

// Any block shape, scalar. Used for remainders only.
void kernel_generic(std::size_t rows, std::size_t cols, std::size_t k, AView a,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(r, p);
      for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += av * b[p * ldb + j];
    }
  }
}

void gemm_view(std::size_t m, std::size_t n, std::size_t k, AView a, const double* b,
               double* c) {
  constexpr std::size_t kDepth = 256;  // slice of B kept in cache
  const std::size_t n16 = n - n % 16;
  const std::size_t n4 = n - n % 4;
  for (std::size_t k0 = 0; k0 < k; k0 += kDepth) {
    const std::size_t kk = std::min(kDepth, k - k0);
    const double* bk = b + k0 * n;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      const AView ai{a.a + i * a.rs + k0 * a.cs, a.rs, a.cs};
      double* ci = c + i * n;
      std::size_t j = 0;
      for (; j < n16; j += 16) kernel_4x16(kk, ai, bk + j, n, ci + j, n);
      for (; j < n4; j += 4) kernel_4x4(kk, ai, bk + j, n, ci + j, n);
      if (j < n) kernel_generic(4, n - j, kk, ai, bk + j, n, ci + j, n);
    }
    if (i < m) {
      const AView ai{a.a + i * a.rs + k0 * a.cs, a.rs, a.cs};
      kernel_generic(m - i, n, kk, ai, bk, n, c + i * n, n);
    }
  }
}

}  // namespace

void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
              double* c) {
  gemm_view(m, n, k, AView{a, k, 1}, b, c);
}

void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  gemm_view(m, n, k, AView{a, 1, m}, b, c);
}

void transpose(std::size_t rows, std::size_t cols, const double* in, double* out) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t r1 = std::min(rows, r0 + kTile);
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
      }
    }
  }
}

}  // namespace depl::nn::detail
