#include "lipemo/kernels.hpp"

namespace lipemo::kernels::reference {

void conv2d_forward(const ConvGeometry& g, const real* x, const real* w, const real* b, real* y) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_ch; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b ? b[co] : 0.0;
          for (int ci = 0; ci < g.in_ch; ++ci)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int iy = oy * g.stride - g.pad + ki;
                const int ix = ox * g.stride - g.pad + kj;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += static_cast<double>(
                           x[((n * g.in_ch + ci) * g.in_h + iy) * g.in_w + ix]) *
                       w[((co * g.in_ch + ci) * k + ki) * k + kj];
              }
          y[((n * g.out_ch + co) * oh + oy) * ow + ox] = static_cast<real>(acc);
        }
}

void conv2d_backward(const ConvGeometry& g, const real* x, const real* w, const real* dy,
                     real* dx, real* dw, real* db) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_ch; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const real d = dy[((n * g.out_ch + co) * oh + oy) * ow + ox];
          if (db) db[co] += d;
          for (int ci = 0; ci < g.in_ch; ++ci)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int iy = oy * g.stride - g.pad + ki;
                const int ix = ox * g.stride - g.pad + kj;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                const int xi = ((n * g.in_ch + ci) * g.in_h + iy) * g.in_w + ix;
                const int wi = ((co * g.in_ch + ci) * k + ki) * k + kj;
                if (dw) dw[wi] += d * x[xi];
                if (dx) dx[xi] += d * w[wi];
              }
        }
}

void linear_forward(int n, int k, int m, const real* x, const real* w, const real* b, real* y) {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double acc = b ? b[j] : 0.0;
      for (int t = 0; t < k; ++t) acc += static_cast<double>(x[i * k + t]) * w[j * k + t];
      y[i * m + j] = static_cast<real>(acc);
    }
}

void linear_backward(int n, int k, int m, const real* x, const real* w, const real* dy,
                     real* dx, real* dw, real* db) {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      const real d = dy[i * m + j];
      if (db) db[j] += d;
      for (int t = 0; t < k; ++t) {
        if (dx) dx[i * k + t] += d * w[j * k + t];
        if (dw) dw[j * k + t] += d * x[i * k + t];
      }
    }
}

}  // namespace lipemo::kernels::reference
