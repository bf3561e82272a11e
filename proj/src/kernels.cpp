#include "qsnn/kernels.hpp"

#include <cblas.h>

#include <stdexcept>
#include <vector>

namespace qsnn::kernels {

void sgemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha,
           const float* a, int64_t lda, const float* b, int64_t ldb, float beta, float* c,
           int64_t ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb), beta,
              c, static_cast<int>(ldc));
}

Conv2dDims conv2d_dims(const Shape& x, const Shape& w, int stride, int pad) {
  if (x.size() != 4 || w.size() != 4)
    throw std::invalid_argument("conv2d: expected 4-d input and kernel, got " + shape_str(x) +
                                " and " + shape_str(w));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
  if (w[2] != w[3]) throw std::invalid_argument("conv2d: only square kernels supported");
  if (x[1] != w[1])
    throw std::invalid_argument("conv2d: channel mismatch " + shape_str(x) + " vs " + shape_str(w));
  Conv2dDims d;
  d.batch = x[0];
  d.in_c = x[1];
  d.in_h = x[2];
  d.in_w = x[3];
  d.out_c = w[0];
  d.kernel = w[2];
  d.stride = stride;
  d.pad = pad;
  d.out_h = (d.in_h + 2 * pad - d.kernel) / stride + 1;
  d.out_w = (d.in_w + 2 * pad - d.kernel) / stride + 1;
  d.fan_in = d.in_c * d.kernel * d.kernel;
  if (d.out_h < 1 || d.out_w < 1)
    throw std::invalid_argument("conv2d: kernel larger than padded input, input " + shape_str(x) +
                                " kernel " + shape_str(w));
  return d;
}

namespace {

// col is [B*OH*OW, fan_in]; patch row index = (b*OH + oy)*OW + ox,
// column index = (c*K + ky)*K + kx.
void im2col(const Tensor& x, const Conv2dDims& d, std::vector<float>& col) {
  col.assign(static_cast<size_t>(d.batch * d.out_h * d.out_w * d.fan_in), 0.f);
  const float* src = x.data.data();
  for (int64_t b = 0; b < d.batch; ++b) {
    for (int64_t oy = 0; oy < d.out_h; ++oy) {
      for (int64_t ox = 0; ox < d.out_w; ++ox) {
        float* dst = col.data() + ((b * d.out_h + oy) * d.out_w + ox) * d.fan_in;
        for (int64_t c = 0; c < d.in_c; ++c) {
          for (int64_t ky = 0; ky < d.kernel; ++ky) {
            int64_t iy = oy * d.stride - d.pad + ky;
            if (iy < 0 || iy >= d.in_h) continue;
            const float* row = src + ((b * d.in_c + c) * d.in_h + iy) * d.in_w;
            float* drow = dst + (c * d.kernel + ky) * d.kernel;
            for (int64_t kx = 0; kx < d.kernel; ++kx) {
              int64_t ix = ox * d.stride - d.pad + kx;
              if (ix < 0 || ix >= d.in_w) continue;
              drow[kx] = row[ix];
            }
          }
        }
      }
    }
  }
}

void col2im_add(const std::vector<float>& col, const Conv2dDims& d, Tensor& dx) {
  float* dst = dx.data.data();
  for (int64_t b = 0; b < d.batch; ++b) {
    for (int64_t oy = 0; oy < d.out_h; ++oy) {
      for (int64_t ox = 0; ox < d.out_w; ++ox) {
        const float* src = col.data() + ((b * d.out_h + oy) * d.out_w + ox) * d.fan_in;
        for (int64_t c = 0; c < d.in_c; ++c) {
          for (int64_t ky = 0; ky < d.kernel; ++ky) {
            int64_t iy = oy * d.stride - d.pad + ky;
            if (iy < 0 || iy >= d.in_h) continue;
            float* row = dst + ((b * d.in_c + c) * d.in_h + iy) * d.in_w;
            const float* srow = src + (c * d.kernel + ky) * d.kernel;
            for (int64_t kx = 0; kx < d.kernel; ++kx) {
              int64_t ix = ox * d.stride - d.pad + kx;
              if (ix < 0 || ix >= d.in_w) continue;
              row[ix] += srow[kx];
            }
          }
        }
      }
    }
  }
}

// [B*OH*OW, OC] <-> [B, OC, OH, OW]
void rows_to_nchw(const std::vector<float>& rows, const Conv2dDims& d, Tensor& out) {
  for (int64_t b = 0; b < d.batch; ++b)
    for (int64_t oy = 0; oy < d.out_h; ++oy)
      for (int64_t ox = 0; ox < d.out_w; ++ox) {
        const float* src = rows.data() + ((b * d.out_h + oy) * d.out_w + ox) * d.out_c;
        for (int64_t oc = 0; oc < d.out_c; ++oc)
          out[((b * d.out_c + oc) * d.out_h + oy) * d.out_w + ox] = src[oc];
      }
}

void nchw_to_rows(const Tensor& t, const Conv2dDims& d, std::vector<float>& rows) {
  rows.resize(static_cast<size_t>(d.batch * d.out_h * d.out_w * d.out_c));
  for (int64_t b = 0; b < d.batch; ++b)
    for (int64_t oy = 0; oy < d.out_h; ++oy)
      for (int64_t ox = 0; ox < d.out_w; ++ox) {
        float* dst = rows.data() + ((b * d.out_h + oy) * d.out_w + ox) * d.out_c;
        for (int64_t oc = 0; oc < d.out_c; ++oc)
          dst[oc] = t[((b * d.out_c + oc) * d.out_h + oy) * d.out_w + ox];
      }
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, int stride, int pad) {
  Conv2dDims d = conv2d_dims(x.shape, w.shape, stride, pad);
  std::vector<float> col;
  im2col(x, d, col);
  int64_t rows = d.batch * d.out_h * d.out_w;
  std::vector<float> out_rows(static_cast<size_t>(rows * d.out_c), 0.f);
  // out_rows = col * W^T
  sgemm(false, true, rows, d.out_c, d.fan_in, 1.f, col.data(), d.fan_in, w.data.data(), d.fan_in,
        0.f, out_rows.data(), d.out_c);
  Tensor out(Shape{d.batch, d.out_c, d.out_h, d.out_w});
  rows_to_nchw(out_rows, d, out);
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, int stride, int pad, const Tensor& dout,
                     Tensor* dx, Tensor* dw) {
  Conv2dDims d = conv2d_dims(x.shape, w.shape, stride, pad);
  int64_t rows = d.batch * d.out_h * d.out_w;
  std::vector<float> dout_rows;
  nchw_to_rows(dout, d, dout_rows);
  std::vector<float> col;
  im2col(x, d, col);
  if (dw) {
    // dW += dout_rows^T * col, [OC, fan_in]
    sgemm(true, false, d.out_c, d.fan_in, rows, 1.f, dout_rows.data(), d.out_c, col.data(),
          d.fan_in, 1.f, dw->data.data(), d.fan_in);
  }
  if (dx) {
    std::vector<float> dcol(static_cast<size_t>(rows * d.fan_in), 0.f);
    sgemm(false, false, rows, d.fan_in, d.out_c, 1.f, dout_rows.data(), d.out_c, w.data.data(),
          d.fan_in, 0.f, dcol.data(), d.fan_in);
    col2im_add(dcol, d, *dx);
  }
}

Tensor matmul_forward(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw std::invalid_argument("matmul: expected 2-d operands, got " + shape_str(a.shape) +
                                " and " + shape_str(b.shape));
  int64_t m = trans_a ? a.shape[1] : a.shape[0];
  int64_t ka = trans_a ? a.shape[0] : a.shape[1];
  int64_t kb = trans_b ? b.shape[1] : b.shape[0];
  int64_t n = trans_b ? b.shape[0] : b.shape[1];
  if (ka != kb)
    throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
  Tensor out(Shape{m, n});
  sgemm(trans_a, trans_b, m, n, ka, 1.f, a.data.data(), a.shape[1], b.data.data(), b.shape[1], 0.f,
        out.data.data(), n);
  return out;
}

Tensor linear_forward(const Tensor& x, const Tensor& w) {
  return matmul_forward(x, w, false, true);
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dout, Tensor* dx, Tensor* dw) {
  int64_t batch = x.shape[0], in = x.shape[1], out = w.shape[0];
  if (dx) {
    // dX += dout * W
    sgemm(false, false, batch, in, out, 1.f, dout.data.data(), out, w.data.data(), in, 1.f,
          dx->data.data(), in);
  }
  if (dw) {
    // dW += dout^T * X
    sgemm(true, false, out, in, batch, 1.f, dout.data.data(), out, x.data.data(), in, 1.f,
          dw->data.data(), in);
  }
}

Tensor avgpool2d_forward(const Tensor& x, int k) {
  if (x.ndim() != 4) throw std::invalid_argument("avgpool2d: expected 4-d input, got " + shape_str(x.shape));
  if (k < 1) throw std::invalid_argument("avgpool2d: kernel must be >= 1");
  int64_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  int64_t oh = h / k, ow = w / k;
  if (oh < 1 || ow < 1) throw std::invalid_argument("avgpool2d: window larger than input");
  Tensor out(Shape{b, c, oh, ow});
  float inv = 1.f / static_cast<float>(k * k);
  for (int64_t i = 0; i < b * c; ++i) {
    const float* src = x.data.data() + i * h * w;
    float* dst = out.data.data() + i * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        float acc = 0.f;
        for (int64_t ky = 0; ky < k; ++ky)
          for (int64_t kx = 0; kx < k; ++kx) acc += src[(oy * k + ky) * w + (ox * k + kx)];
        dst[oy * ow + ox] = acc * inv;
      }
  }
  return out;
}

void avgpool2d_backward(const Tensor& dout, const Shape& x_shape, int k, Tensor& dx) {
  int64_t b = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3];
  int64_t oh = h / k, ow = w / k;
  float inv = 1.f / static_cast<float>(k * k);
  for (int64_t i = 0; i < b * c; ++i) {
    const float* src = dout.data.data() + i * oh * ow;
    float* dst = dx.data.data() + i * h * w;
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        float g = src[oy * ow + ox] * inv;
        for (int64_t ky = 0; ky < k; ++ky)
          for (int64_t kx = 0; kx < k; ++kx) dst[(oy * k + ky) * w + (ox * k + kx)] += g;
      }
  }
}

}  // namespace qsnn::kernels
