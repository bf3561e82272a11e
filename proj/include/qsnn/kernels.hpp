#pragma once

#include "qsnn/tensor.hpp"

namespace qsnn::kernels {

// Row-major C[m,n] = alpha * op(A) * op(B) + beta * C.
void sgemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha,
           const float* a, int64_t lda, const float* b, int64_t ldb, float beta, float* c,
           int64_t ldc);

struct Conv2dDims {
  int64_t batch, in_c, in_h, in_w;
  int64_t out_c, kernel, stride, pad;
  int64_t out_h, out_w, fan_in;
};

Conv2dDims conv2d_dims(const Shape& x, const Shape& w, int stride, int pad);

// x [B,C,H,W], w [OC,C,K,K] -> [B,OC,OH,OW]
Tensor conv2d_forward(const Tensor& x, const Tensor& w, int stride, int pad);
// Accumulates into dx and/or dw (either may be null).
void conv2d_backward(const Tensor& x, const Tensor& w, int stride, int pad, const Tensor& dout,
                     Tensor* dx, Tensor* dw);

// a [m,k] (or transposed), b [k,n] (or transposed) -> [m,n]
Tensor matmul_forward(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b);

// x [B,In], w [Out,In] -> [B,Out]
Tensor linear_forward(const Tensor& x, const Tensor& w);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dout, Tensor* dx, Tensor* dw);

// Non-overlapping k x k mean pooling, floor semantics on odd extents.
Tensor avgpool2d_forward(const Tensor& x, int k);
void avgpool2d_backward(const Tensor& dout, const Shape& x_shape, int k, Tensor& dx);

}  // namespace qsnn::kernels
