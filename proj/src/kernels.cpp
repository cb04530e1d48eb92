#include "bss/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bss/common.hpp"

namespace bss::kernels {

namespace {

struct ConvDims {
  index_t ci, d, h, w;        // input
  index_t co, kd, kh, kw;     // weight
  index_t od, oh, ow;         // output spatial
  index_t pd, ph, pw;         // zero padding per axis
  index_t stride;
};

index_t out_dim(index_t in, index_t k, index_t pad, index_t stride) {
  return (in + 2 * pad - k) / stride + 1;
}

ConvDims conv_dims(const Shape& in, const Shape& w, index_t stride) {
  if (in.rank() != 4) throw ConfigError("conv3d: input must be (C,D,H,W), got " + in.str());
  if (w.rank() != 5) throw ConfigError("conv3d: weight must be (Co,Ci,kd,kh,kw), got " + w.str());
  if (stride != 1 && stride != 2) throw ConfigError("conv3d: stride must be 1 or 2");
  if (w[1] != in[0]) {
    throw ConfigError("conv3d: weight input-channel axis " + std::to_string(w[1]) +
                      " does not match input channel axis " + std::to_string(in[0]));
  }
  ConvDims d{};
  d.ci = in[0];
  d.d = in[1];
  d.h = in[2];
  d.w = in[3];
  d.co = w[0];
  d.kd = w[2];
  d.kh = w[3];
  d.kw = w[4];
  d.pd = d.kd / 2;
  d.ph = d.kh / 2;
  d.pw = d.kw / 2;
  d.stride = stride;
  d.od = out_dim(d.d, d.kd, d.pd, stride);
  d.oh = out_dim(d.h, d.kh, d.ph, stride);
  d.ow = out_dim(d.w, d.kw, d.pw, stride);
  if (d.od < 1 || d.oh < 1 || d.ow < 1) {
    throw ConfigError("conv3d: kernel " + w.str() + " too large for input " + in.str());
  }
  return d;
}

}  // namespace

Shape conv3d_output_shape(const Shape& input, const Shape& weight, index_t stride) {
  const ConvDims d = conv_dims(input, weight, stride);
  return Shape{d.co, d.od, d.oh, d.ow};
}

// ---------------------------------------------------------------------------
// conv3d forward

void conv3d_forward(Tensor& out, const Tensor& in, const Tensor& w, const Tensor& b,
                    index_t stride) {
  const ConvDims cd = conv_dims(in.shape(), w.shape(), stride);
  if (b.shape() != Shape{cd.co}) {
    throw ConfigError("conv3d: bias must be (Co)=" + std::to_string(cd.co) + ", got " +
                      b.shape().str());
  }
  out = Tensor(Shape{cd.co, cd.od, cd.oh, cd.ow});
  const double* __restrict ip = in.data();
  const double* __restrict wp = w.data();
  const double* __restrict bp = b.data();
  double* __restrict op = out.data();
  const index_t in_hw = cd.h * cd.w, in_dhw = cd.d * in_hw;
  const index_t out_hw = cd.oh * cd.ow, out_dhw = cd.od * out_hw;
  const index_t w_k = cd.kd * cd.kh * cd.kw, w_ck = cd.ci * w_k;

#pragma omp parallel for collapse(2) schedule(static)
  for (index_t co = 0; co < cd.co; ++co) {
    for (index_t oz = 0; oz < cd.od; ++oz) {
      for (index_t oy = 0; oy < cd.oh; ++oy) {
        double* __restrict orow = op + co * out_dhw + oz * out_hw + oy * cd.ow;
        for (index_t ox = 0; ox < cd.ow; ++ox) orow[ox] = bp[co];
        for (index_t ci = 0; ci < cd.ci; ++ci) {
          for (index_t kz = 0; kz < cd.kd; ++kz) {
            const index_t iz = oz * cd.stride - cd.pd + kz;
            if (iz < 0 || iz >= cd.d) continue;
            for (index_t ky = 0; ky < cd.kh; ++ky) {
              const index_t iy = oy * cd.stride - cd.ph + ky;
              if (iy < 0 || iy >= cd.h) continue;
              const double* __restrict irow = ip + ci * in_dhw + iz * in_hw + iy * cd.w;
              const double* __restrict wrow =
                  wp + co * w_ck + ci * w_k + kz * cd.kh * cd.kw + ky * cd.kw;
              for (index_t kx = 0; kx < cd.kw; ++kx) {
                const double wv = wrow[kx];
                const index_t shift = kx - cd.pw;
                // valid ox: 0 <= ox*stride + shift < W
                if (cd.stride == 1) {
                  const index_t ox_lo = std::max<index_t>(0, -shift);
                  const index_t ox_hi = std::min<index_t>(cd.ow - 1, cd.w - 1 - shift);
                  const double* __restrict src = irow + shift;
                  for (index_t ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * src[ox];
                } else {
                  const index_t ox_lo =
                      shift < 0 ? (-shift + cd.stride - 1) / cd.stride : 0;
                  const index_t ox_hi =
                      std::min<index_t>(cd.ow - 1, (cd.w - 1 - shift) / cd.stride);
                  for (index_t ox = ox_lo; ox <= ox_hi; ++ox) {
                    orow[ox] += wv * irow[ox * cd.stride + shift];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

void serial::conv3d_forward(Tensor& out, const Tensor& in, const Tensor& w, const Tensor& b,
                            index_t stride) {
  const ConvDims cd = conv_dims(in.shape(), w.shape(), stride);
  if (b.shape() != Shape{cd.co}) {
    throw ConfigError("conv3d: bias must be (Co)=" + std::to_string(cd.co) + ", got " +
                      b.shape().str());
  }
  out = Tensor(Shape{cd.co, cd.od, cd.oh, cd.ow});
  auto in_at = [&](index_t c, index_t z, index_t y, index_t x) {
    return in[((c * cd.d + z) * cd.h + y) * cd.w + x];
  };
  auto w_at = [&](index_t co, index_t ci, index_t kz, index_t ky, index_t kx) {
    return w[(((co * cd.ci + ci) * cd.kd + kz) * cd.kh + ky) * cd.kw + kx];
  };
  index_t o = 0;
  for (index_t co = 0; co < cd.co; ++co) {
    for (index_t oz = 0; oz < cd.od; ++oz) {
      for (index_t oy = 0; oy < cd.oh; ++oy) {
        for (index_t ox = 0; ox < cd.ow; ++ox, ++o) {
          double acc = b[co];
          for (index_t ci = 0; ci < cd.ci; ++ci) {
            for (index_t kz = 0; kz < cd.kd; ++kz) {
              const index_t iz = oz * cd.stride - cd.pd + kz;
              if (iz < 0 || iz >= cd.d) continue;
              for (index_t ky = 0; ky < cd.kh; ++ky) {
                const index_t iy = oy * cd.stride - cd.ph + ky;
                if (iy < 0 || iy >= cd.h) continue;
                for (index_t kx = 0; kx < cd.kw; ++kx) {
                  const index_t ix = ox * cd.stride - cd.pw + kx;
                  if (ix < 0 || ix >= cd.w) continue;
                  acc += w_at(co, ci, kz, ky, kx) * in_at(ci, iz, iy, ix);
                }
              }
            }
          }
          out[o] = acc;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// conv3d backward: gradient w.r.t. input (gather form)

namespace {

template <bool Parallel>
void conv3d_backward_input_impl(Tensor& gin, const Tensor& gout, const Tensor& w,
                                const ConvDims& cd) {
  gin = Tensor(Shape{cd.ci, cd.d, cd.h, cd.w});
  const double* __restrict gp = gout.data();
  const double* __restrict wp = w.data();
  double* __restrict dp = gin.data();
  const index_t in_hw = cd.h * cd.w, in_dhw = cd.d * in_hw;
  const index_t out_hw = cd.oh * cd.ow, out_dhw = cd.od * out_hw;
  const index_t w_k = cd.kd * cd.kh * cd.kw, w_ck = cd.ci * w_k;

#pragma omp parallel for collapse(2) schedule(static) if (Parallel)
  for (index_t ci = 0; ci < cd.ci; ++ci) {
    for (index_t z = 0; z < cd.d; ++z) {
      for (index_t y = 0; y < cd.h; ++y) {
        double* __restrict drow = dp + ci * in_dhw + z * in_hw + y * cd.w;
        for (index_t co = 0; co < cd.co; ++co) {
          for (index_t kz = 0; kz < cd.kd; ++kz) {
            const index_t num_z = z + cd.pd - kz;
            if (num_z % cd.stride != 0) continue;
            const index_t oz = num_z / cd.stride;
            if (oz < 0 || oz >= cd.od) continue;
            for (index_t ky = 0; ky < cd.kh; ++ky) {
              const index_t num_y = y + cd.ph - ky;
              if (num_y % cd.stride != 0) continue;
              const index_t oy = num_y / cd.stride;
              if (oy < 0 || oy >= cd.oh) continue;
              const double* __restrict grow = gp + co * out_dhw + oz * out_hw + oy * cd.ow;
              const double* __restrict wrow =
                  wp + co * w_ck + ci * w_k + kz * cd.kh * cd.kw + ky * cd.kw;
              for (index_t kx = 0; kx < cd.kw; ++kx) {
                const double wv = wrow[kx];
                if (cd.stride == 1) {
                  // ox = x + pw - kx
                  const index_t shift = cd.pw - kx;
                  const index_t x_lo = std::max<index_t>(0, -shift);
                  const index_t x_hi = std::min<index_t>(cd.w - 1, cd.ow - 1 - shift);
                  const double* __restrict src = grow + shift;
                  for (index_t x = x_lo; x <= x_hi; ++x) drow[x] += wv * src[x];
                } else {
                  // x = ox*stride + kx - pw walks a stride lattice; iterate
                  // ox directly instead of testing every x
                  const index_t off = kx - cd.pw;
                  index_t ox_lo = off < 0 ? (-off + cd.stride - 1) / cd.stride : 0;
                  index_t ox_hi = (cd.w - 1 - off) / cd.stride;
                  ox_hi = std::min(ox_hi, cd.ow - 1);
                  for (index_t ox = ox_lo; ox <= ox_hi; ++ox) {
                    drow[ox * cd.stride + off] += wv * grow[ox];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

// All taps of one (co, ci) pair accumulate in a single sweep over the output
// grid, so gout/input rows are streamed once instead of once per tap. Each
// tap sums row subtotals in (oz, oy) order; serial and parallel variants
// share this loop nest and stay bit-identical for any thread count.
template <bool Parallel>
void conv3d_backward_weight_impl(Tensor& gw, const Tensor& gout, const Tensor& in,
                                 const ConvDims& cd) {
  gw = Tensor(Shape{cd.co, cd.ci, cd.kd, cd.kh, cd.kw});
  const double* __restrict gp = gout.data();
  const double* __restrict ip = in.data();
  double* __restrict wp = gw.data();
  const index_t in_hw = cd.h * cd.w, in_dhw = cd.d * in_hw;
  const index_t out_hw = cd.oh * cd.ow, out_dhw = cd.od * out_hw;
  const index_t w_k = cd.kd * cd.kh * cd.kw;
  const index_t n_pairs = cd.co * cd.ci;

#pragma omp parallel for schedule(static) if (Parallel)
  for (index_t pair = 0; pair < n_pairs; ++pair) {
    const index_t co = pair / cd.ci;
    const index_t ci = pair % cd.ci;
    std::vector<double> acc(static_cast<std::size_t>(w_k), 0.0);
    const double* __restrict gplane0 = gp + co * out_dhw;
    const double* __restrict iplane0 = ip + ci * in_dhw;
    for (index_t oz = 0; oz < cd.od; ++oz) {
      for (index_t kz = 0; kz < cd.kd; ++kz) {
        const index_t iz = oz * cd.stride - cd.pd + kz;
        if (iz < 0 || iz >= cd.d) continue;
        for (index_t oy = 0; oy < cd.oh; ++oy) {
          const double* __restrict grow = gplane0 + oz * out_hw + oy * cd.ow;
          for (index_t ky = 0; ky < cd.kh; ++ky) {
            const index_t iy = oy * cd.stride - cd.ph + ky;
            if (iy < 0 || iy >= cd.h) continue;
            const double* __restrict irow = iplane0 + iz * in_hw + iy * cd.w;
            double* __restrict arow = acc.data() + (kz * cd.kh + ky) * cd.kw;
            for (index_t kx = 0; kx < cd.kw; ++kx) {
              const index_t off = kx - cd.pw;
              // row dot in four fixed lanes to break the add-latency chain
              double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
              if (cd.stride == 1) {
                const index_t ox_lo = std::max<index_t>(0, -off);
                const index_t ox_hi = std::min<index_t>(cd.ow - 1, cd.w - 1 - off);
                const double* __restrict src = irow + off;
                index_t ox = ox_lo;
                for (; ox + 3 <= ox_hi; ox += 4) {
                  s0 += grow[ox] * src[ox];
                  s1 += grow[ox + 1] * src[ox + 1];
                  s2 += grow[ox + 2] * src[ox + 2];
                  s3 += grow[ox + 3] * src[ox + 3];
                }
                for (; ox <= ox_hi; ++ox) s0 += grow[ox] * src[ox];
              } else {
                const index_t ox_lo = off < 0 ? (-off + cd.stride - 1) / cd.stride : 0;
                index_t ox_hi = (cd.w - 1 - off) / cd.stride;
                ox_hi = std::min(ox_hi, cd.ow - 1);
                index_t ox = ox_lo;
                for (; ox + 3 <= ox_hi; ox += 4) {
                  s0 += grow[ox] * irow[ox * cd.stride + off];
                  s1 += grow[ox + 1] * irow[(ox + 1) * cd.stride + off];
                  s2 += grow[ox + 2] * irow[(ox + 2) * cd.stride + off];
                  s3 += grow[ox + 3] * irow[(ox + 3) * cd.stride + off];
                }
                for (; ox <= ox_hi; ++ox) s0 += grow[ox] * irow[ox * cd.stride + off];
              }
              arow[kx] += (s0 + s1) + (s2 + s3);
            }
          }
        }
      }
    }
    std::copy(acc.begin(), acc.end(), wp + pair * w_k);
  }
}

}  // namespace

void conv3d_backward_input(Tensor& gin, const Tensor& gout, const Tensor& w, index_t stride) {
  const Shape in_shape = gin.shape();
  const ConvDims cd = conv_dims(in_shape, w.shape(), stride);
  if (gout.shape() != Shape{cd.co, cd.od, cd.oh, cd.ow}) {
    throw ConfigError("conv3d_backward_input: gout shape " + gout.shape().str() +
                      " inconsistent with input " + in_shape.str());
  }
  conv3d_backward_input_impl<true>(gin, gout, w, cd);
}

void serial::conv3d_backward_input(Tensor& gin, const Tensor& gout, const Tensor& w,
                                   index_t stride) {
  const Shape in_shape = gin.shape();
  const ConvDims cd = conv_dims(in_shape, w.shape(), stride);
  if (gout.shape() != Shape{cd.co, cd.od, cd.oh, cd.ow}) {
    throw ConfigError("conv3d_backward_input: gout shape " + gout.shape().str() +
                      " inconsistent with input " + in_shape.str());
  }
  conv3d_backward_input_impl<false>(gin, gout, w, cd);
}

void conv3d_backward_weight(Tensor& gw, const Tensor& gout, const Tensor& in, index_t stride) {
  Shape w_shape = gw.shape();
  const ConvDims cd = conv_dims(in.shape(), w_shape, stride);
  conv3d_backward_weight_impl<true>(gw, gout, in, cd);
}

void serial::conv3d_backward_weight(Tensor& gw, const Tensor& gout, const Tensor& in,
                                    index_t stride) {
  Shape w_shape = gw.shape();
  const ConvDims cd = conv_dims(in.shape(), w_shape, stride);
  conv3d_backward_weight_impl<false>(gw, gout, in, cd);
}

void conv3d_backward_bias(Tensor& gb, const Tensor& gout) {
  const Shape& s = gout.shape();
  const index_t co = s[0], spatial = s.numel() / s[0];
  gb = Tensor(Shape{co});
#pragma omp parallel for schedule(static)
  for (index_t c = 0; c < co; ++c) {
    double acc = 0.0;
    const double* g = gout.data() + c * spatial;
    for (index_t i = 0; i < spatial; ++i) acc += g[i];
    gb[c] = acc;
  }
}

void serial::conv3d_backward_bias(Tensor& gb, const Tensor& gout) {
  const Shape& s = gout.shape();
  const index_t co = s[0], spatial = s.numel() / s[0];
  gb = Tensor(Shape{co});
  for (index_t c = 0; c < co; ++c) {
    double acc = 0.0;
    const double* g = gout.data() + c * spatial;
    for (index_t i = 0; i < spatial; ++i) acc += g[i];
    gb[c] = acc;
  }
}

// ---------------------------------------------------------------------------
// nearest x2 upsampling

namespace {
template <bool Parallel>
void upsample2_forward_impl(Tensor& out, const Tensor& in) {
  const Shape& s = in.shape();
  if (s.rank() != 4) throw ConfigError("upsample2: input must be (C,D,H,W), got " + s.str());
  const index_t c = s[0], d = s[1], h = s[2], w = s[3];
  out = Tensor(Shape{c, 2 * d, 2 * h, 2 * w});
  const double* __restrict ip = in.data();
  double* __restrict op = out.data();
  const index_t oplane_sz = 4 * h * w, od = 2 * d;
#pragma omp parallel for collapse(2) schedule(static) if (Parallel)
  for (index_t ci = 0; ci < c; ++ci) {
    for (index_t z = 0; z < od; ++z) {
      const double* iplane = ip + (ci * d + z / 2) * h * w;
      double* oplane = op + (ci * od + z) * oplane_sz;
      for (index_t y = 0; y < 2 * h; ++y) {
        const double* irow = iplane + (y / 2) * w;
        double* orow = oplane + y * 2 * w;
        for (index_t x = 0; x < 2 * w; ++x) orow[x] = irow[x / 2];
      }
    }
  }
}

template <bool Parallel>
void upsample2_backward_impl(Tensor& gin, const Tensor& gout, const Shape& in_shape) {
  const index_t c = in_shape[0], d = in_shape[1], h = in_shape[2], w = in_shape[3];
  if (gout.shape() != Shape{c, 2 * d, 2 * h, 2 * w}) {
    throw ConfigError("upsample2_backward: gout shape " + gout.shape().str() +
                      " inconsistent with input " + in_shape.str());
  }
  gin = Tensor(in_shape);
  const double* __restrict gp = gout.data();
  double* __restrict dp = gin.data();
#pragma omp parallel for collapse(2) schedule(static) if (Parallel)
  for (index_t ci = 0; ci < c; ++ci) {
    for (index_t z = 0; z < d; ++z) {
      for (index_t y = 0; y < h; ++y) {
        for (index_t x = 0; x < w; ++x) {
          double acc = 0.0;
          for (index_t dz = 0; dz < 2; ++dz) {
            for (index_t dy = 0; dy < 2; ++dy) {
              for (index_t dx = 0; dx < 2; ++dx) {
                acc += gp[((ci * 2 * d + 2 * z + dz) * 2 * h + 2 * y + dy) * 2 * w + 2 * x + dx];
              }
            }
          }
          dp[((ci * d + z) * h + y) * w + x] = acc;
        }
      }
    }
  }
}
}  // namespace

void upsample2_forward(Tensor& out, const Tensor& in) { upsample2_forward_impl<true>(out, in); }
void serial::upsample2_forward(Tensor& out, const Tensor& in) {
  upsample2_forward_impl<false>(out, in);
}
void upsample2_backward(Tensor& gin, const Tensor& gout) {
  upsample2_backward_impl<true>(gin, gout, gin.shape());
}
void serial::upsample2_backward(Tensor& gin, const Tensor& gout) {
  upsample2_backward_impl<false>(gin, gout, gin.shape());
}

// ---------------------------------------------------------------------------
// channel softmax

namespace {
template <bool Parallel>
void channel_softmax_forward_impl(Tensor& out, const Tensor& in) {
  const Shape& s = in.shape();
  const index_t c = s[0], spatial = s.numel() / c;
  out = Tensor(s);
  const double* __restrict ip = in.data();
  double* __restrict op = out.data();
#pragma omp parallel for schedule(static) if (Parallel)
  for (index_t v = 0; v < spatial; ++v) {
    double mx = ip[v];
    for (index_t ch = 1; ch < c; ++ch) mx = std::max(mx, ip[ch * spatial + v]);
    double sum = 0.0;
    for (index_t ch = 0; ch < c; ++ch) {
      const double e = std::exp(ip[ch * spatial + v] - mx);
      op[ch * spatial + v] = e;
      sum += e;
    }
    for (index_t ch = 0; ch < c; ++ch) op[ch * spatial + v] /= sum;
  }
}

template <bool Parallel>
void channel_softmax_backward_impl(Tensor& gin, const Tensor& gout, const Tensor& sm) {
  const Shape& s = sm.shape();
  const index_t c = s[0], spatial = s.numel() / c;
  gin = Tensor(s);
  const double* __restrict gp = gout.data();
  const double* __restrict sp = sm.data();
  double* __restrict dp = gin.data();
#pragma omp parallel for schedule(static) if (Parallel)
  for (index_t v = 0; v < spatial; ++v) {
    double dot = 0.0;
    for (index_t ch = 0; ch < c; ++ch) dot += gp[ch * spatial + v] * sp[ch * spatial + v];
    for (index_t ch = 0; ch < c; ++ch) {
      dp[ch * spatial + v] = sp[ch * spatial + v] * (gp[ch * spatial + v] - dot);
    }
  }
}
}  // namespace

void channel_softmax_forward(Tensor& out, const Tensor& in) {
  channel_softmax_forward_impl<true>(out, in);
}
void serial::channel_softmax_forward(Tensor& out, const Tensor& in) {
  channel_softmax_forward_impl<false>(out, in);
}
void channel_softmax_backward(Tensor& gin, const Tensor& gout, const Tensor& softmax_out) {
  channel_softmax_backward_impl<true>(gin, gout, softmax_out);
}
void serial::channel_softmax_backward(Tensor& gin, const Tensor& gout, const Tensor& softmax_out) {
  channel_softmax_backward_impl<false>(gin, gout, softmax_out);
}

// ---------------------------------------------------------------------------
// elementwise

void relu_forward(Tensor& out, const Tensor& in) {
  out = Tensor(in.shape());
  const index_t n = in.numel();
  const double* __restrict ip = in.data();
  double* __restrict op = out.data();
#pragma omp parallel for schedule(static)
  for (index_t i = 0; i < n; ++i) op[i] = ip[i] > 0.0 ? ip[i] : 0.0;
}

void relu_backward(Tensor& gin, const Tensor& gout, const Tensor& in) {
  gin = Tensor(in.shape());
  const index_t n = in.numel();
  const double* __restrict gp = gout.data();
  const double* __restrict ip = in.data();
  double* __restrict dp = gin.data();
#pragma omp parallel for schedule(static)
  for (index_t i = 0; i < n; ++i) dp[i] = ip[i] > 0.0 ? gp[i] : 0.0;
}

void sigmoid_forward(Tensor& out, const Tensor& in) {
  out = Tensor(in.shape());
  const index_t n = in.numel();
  const double* __restrict ip = in.data();
  double* __restrict op = out.data();
#pragma omp parallel for schedule(static)
  for (index_t i = 0; i < n; ++i) op[i] = 1.0 / (1.0 + std::exp(-ip[i]));
}

void sigmoid_backward(Tensor& gin, const Tensor& gout, const Tensor& out) {
  gin = Tensor(out.shape());
  const index_t n = out.numel();
  const double* __restrict gp = gout.data();
  const double* __restrict sp = out.data();
  double* __restrict dp = gin.data();
#pragma omp parallel for schedule(static)
  for (index_t i = 0; i < n; ++i) dp[i] = gp[i] * sp[i] * (1.0 - sp[i]);
}

// ---------------------------------------------------------------------------
// 2D resize, corner-aligned sampling

namespace {
// src coordinate of output index t: t*(S-1)/(T-1); single-pixel target maps
// to source origin. Exact identity when T == S.
double src_coord(index_t t, index_t t_size, index_t s_size) {
  if (t_size == 1) return 0.0;
  return static_cast<double>(t) * static_cast<double>(s_size - 1) /
         static_cast<double>(t_size - 1);
}

template <bool Parallel>
void resize_bilinear_2d_impl(std::vector<double>& out, index_t oh, index_t ow,
                             const std::vector<double>& in, index_t ih, index_t iw) {
  out.assign(static_cast<std::size_t>(oh * ow), 0.0);
#pragma omp parallel for schedule(static) if (Parallel)
  for (index_t y = 0; y < oh; ++y) {
    const double sy = src_coord(y, oh, ih);
    const index_t y0 = static_cast<index_t>(sy);
    const index_t y1 = std::min(y0 + 1, ih - 1);
    const double fy = sy - static_cast<double>(y0);
    for (index_t x = 0; x < ow; ++x) {
      const double sx = src_coord(x, ow, iw);
      const index_t x0 = static_cast<index_t>(sx);
      const index_t x1 = std::min(x0 + 1, iw - 1);
      const double fx = sx - static_cast<double>(x0);
      const double a = in[static_cast<std::size_t>(y0 * iw + x0)];
      const double b = in[static_cast<std::size_t>(y0 * iw + x1)];
      const double c = in[static_cast<std::size_t>(y1 * iw + x0)];
      const double d = in[static_cast<std::size_t>(y1 * iw + x1)];
      out[static_cast<std::size_t>(y * ow + x)] =
          (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d);
    }
  }
}
}  // namespace

void resize_bilinear_2d(std::vector<double>& out, index_t oh, index_t ow,
                        const std::vector<double>& in, index_t ih, index_t iw) {
  resize_bilinear_2d_impl<true>(out, oh, ow, in, ih, iw);
}
void serial::resize_bilinear_2d(std::vector<double>& out, index_t oh, index_t ow,
                                const std::vector<double>& in, index_t ih, index_t iw) {
  resize_bilinear_2d_impl<false>(out, oh, ow, in, ih, iw);
}

void resize_nearest_2d_int(std::vector<std::int32_t>& out, index_t oh, index_t ow,
                           const std::vector<std::int32_t>& in, index_t ih, index_t iw) {
  out.assign(static_cast<std::size_t>(oh * ow), 0);
#pragma omp parallel for schedule(static)
  for (index_t y = 0; y < oh; ++y) {
    const index_t sy = std::min<index_t>(
        ih - 1, static_cast<index_t>(std::floor(src_coord(y, oh, ih) + 0.5)));
    for (index_t x = 0; x < ow; ++x) {
      const index_t sx = std::min<index_t>(
          iw - 1, static_cast<index_t>(std::floor(src_coord(x, ow, iw) + 0.5)));
      out[static_cast<std::size_t>(y * ow + x)] = in[static_cast<std::size_t>(sy * iw + sx)];
    }
  }
}

// ---------------------------------------------------------------------------
// nearest surface distances (brute force)

namespace {
template <bool Parallel>
std::vector<double> nearest_surface_distances_impl(const std::vector<Point3>& from,
                                                   const std::vector<Point3>& to) {
  std::vector<double> dist(from.size(), 0.0);
  const index_t n = static_cast<index_t>(from.size());
#pragma omp parallel for schedule(static) if (Parallel)
  for (index_t i = 0; i < n; ++i) {
    const auto& p = from[static_cast<std::size_t>(i)];
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) {
      const double dz = static_cast<double>(p[0] - q[0]);
      const double dy = static_cast<double>(p[1] - q[1]);
      const double dx = static_cast<double>(p[2] - q[2]);
      best = std::min(best, dz * dz + dy * dy + dx * dx);
    }
    dist[static_cast<std::size_t>(i)] = std::sqrt(best);
  }
  return dist;
}
}  // namespace

std::vector<double> nearest_surface_distances(const std::vector<Point3>& from,
                                              const std::vector<Point3>& to) {
  return nearest_surface_distances_impl<true>(from, to);
}
std::vector<double> serial::nearest_surface_distances(const std::vector<Point3>& from,
                                                      const std::vector<Point3>& to) {
  return nearest_surface_distances_impl<false>(from, to);
}

}  // namespace bss::kernels
