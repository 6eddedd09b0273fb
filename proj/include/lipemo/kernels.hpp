#pragma once

#include "lipemo/tensor.hpp"

// Dense compute kernels behind the conv/linear ops. The top-level functions are
// the production path (im2col + GEMM, OpenMP over independent rows/images, no
// cross-thread reductions so results do not depend on the thread count). The
// `reference` namespace holds direct-loop serial versions kept as test oracles
// and benchmark baselines.
namespace lipemo::kernels {

struct ConvGeometry {
  int batch = 1;
  int in_ch = 1;
  int in_h = 1;
  int in_w = 1;
  int out_ch = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

// x [batch, in_ch, in_h, in_w], w [out_ch, in_ch, k, k], b [out_ch] or null,
// y [batch, out_ch, out_h, out_w] (overwritten).
void conv2d_forward(const ConvGeometry& g, const real* x, const real* w, const real* b, real* y);
// Accumulates (+=) into whichever of dx, dw, db is non-null.
void conv2d_backward(const ConvGeometry& g, const real* x, const real* w, const real* dy,
                     real* dx, real* dw, real* db);

// x [n, k], w [m, k], b [m] or null -> y [n, m].
void linear_forward(int n, int k, int m, const real* x, const real* w, const real* b, real* y);
void linear_backward(int n, int k, int m, const real* x, const real* w, const real* dy,
                     real* dx, real* dw, real* db);

namespace reference {
void conv2d_forward(const ConvGeometry& g, const real* x, const real* w, const real* b, real* y);
void conv2d_backward(const ConvGeometry& g, const real* x, const real* w, const real* dy,
                     real* dx, real* dw, real* db);
void linear_forward(int n, int k, int m, const real* x, const real* w, const real* b, real* y);
void linear_backward(int n, int k, int m, const real* x, const real* w, const real* dy,
                     real* dx, real* dw, real* db);
}  // namespace reference

}  // namespace lipemo::kernels
