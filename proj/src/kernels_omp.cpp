#include <Eigen/Core>
#include <vector>

#include "lipemo/kernels.hpp"

namespace lipemo::kernels {
namespace {

using RowMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// col [in_ch*k*k, batch*P], P = out_h*out_w.
void im2col(const ConvGeometry& g, const real* x, real* col) {
  const int k = g.kernel, oh = g.out_h(), ow = g.out_w();
  const long P = static_cast<long>(oh) * ow;
  const long cols = P * g.batch;
  const int rows = g.in_ch * k * k;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int c = r / (k * k), ki = (r / k) % k, kj = r % k;
    real* out = col + r * cols;
    for (int n = 0; n < g.batch; ++n) {
      const real* plane = x + (static_cast<long>(n) * g.in_ch + c) * g.in_h * g.in_w;
      real* o = out + n * P;
      for (int oy = 0; oy < oh; ++oy) {
        const int iy = oy * g.stride - g.pad + ki;
        if (iy < 0 || iy >= g.in_h) {
          for (int ox = 0; ox < ow; ++ox) o[oy * ow + ox] = 0;
          continue;
        }
        const real* row = plane + iy * g.in_w;
        for (int ox = 0; ox < ow; ++ox) {
          const int ix = ox * g.stride - g.pad + kj;
          o[oy * ow + ox] = (ix >= 0 && ix < g.in_w) ? row[ix] : real(0);
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const real* col, real* dx) {
  const int k = g.kernel, oh = g.out_h(), ow = g.out_w();
  const long P = static_cast<long>(oh) * ow;
  const long cols = P * g.batch;
#pragma omp parallel for schedule(static)
  for (int n = 0; n < g.batch; ++n) {
    for (int c = 0; c < g.in_ch; ++c) {
      real* plane = dx + (static_cast<long>(n) * g.in_ch + c) * g.in_h * g.in_w;
      for (int ki = 0; ki < k; ++ki) {
        for (int kj = 0; kj < k; ++kj) {
          const real* src = col + ((c * k + ki) * k + kj) * cols + n * P;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * g.stride - g.pad + ki;
            if (iy < 0 || iy >= g.in_h) continue;
            real* row = plane + iy * g.in_w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * g.stride - g.pad + kj;
              if (ix >= 0 && ix < g.in_w) row[ix] += src[oy * ow + ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const real* x, const real* w, const real* b, real* y) {
  const long P = static_cast<long>(g.out_h()) * g.out_w();
  const long cols = P * g.batch;
  const int K = g.in_ch * g.kernel * g.kernel;
  std::vector<real> col(static_cast<std::size_t>(K) * cols);
  im2col(g, x, col.data());
  RowMat out = CMapMat(w, g.out_ch, K) * CMapMat(col.data(), K, cols);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < g.batch; ++n) {
    for (int co = 0; co < g.out_ch; ++co) {
      const real bias = b ? b[co] : real(0);
      const real* src = out.data() + co * cols + n * P;
      real* dst = y + (static_cast<long>(n) * g.out_ch + co) * P;
      for (long p = 0; p < P; ++p) dst[p] = src[p] + bias;
    }
  }
}

void conv2d_backward(const ConvGeometry& g, const real* x, const real* w, const real* dy,
                     real* dx, real* dw, real* db) {
  const long P = static_cast<long>(g.out_h()) * g.out_w();
  const long cols = P * g.batch;
  const int K = g.in_ch * g.kernel * g.kernel;

  RowMat dym(g.out_ch, cols);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < g.out_ch; ++co)
    for (int n = 0; n < g.batch; ++n) {
      const real* src = dy + (static_cast<long>(n) * g.out_ch + co) * P;
      real* dst = dym.data() + co * cols + n * P;
      for (long p = 0; p < P; ++p) dst[p] = src[p];
    }

  if (db) {
    for (int co = 0; co < g.out_ch; ++co) db[co] += dym.row(co).sum();
  }
  if (dw) {
    std::vector<real> col(static_cast<std::size_t>(K) * cols);
    im2col(g, x, col.data());
    MapMat(dw, g.out_ch, K).noalias() += dym * CMapMat(col.data(), K, cols).transpose();
  }
  if (dx) {
    RowMat dcol = CMapMat(w, g.out_ch, K).transpose() * dym;
    col2im_add(g, dcol.data(), dx);
  }
}

void linear_forward(int n, int k, int m, const real* x, const real* w, const real* b, real* y) {
  MapMat out(y, n, m);
  out.noalias() = CMapMat(x, n, k) * CMapMat(w, m, k).transpose();
  if (b) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) out(i, j) += b[j];
  }
}

void linear_backward(int n, int k, int m, const real* x, const real* w, const real* dy,
                     real* dx, real* dw, real* db) {
  CMapMat dym(dy, n, m);
  if (dx) MapMat(dx, n, k).noalias() += dym * CMapMat(w, m, k);
  if (dw) MapMat(dw, m, k).noalias() += dym.transpose() * CMapMat(x, n, k);
  if (db) {
    for (int j = 0; j < m; ++j) db[j] += dym.col(j).sum();
  }
}

}  // namespace lipemo::kernels
