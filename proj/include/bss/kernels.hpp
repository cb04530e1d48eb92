#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bss/tensor.hpp"

namespace bss::kernels {

// Dense volumetric kernels. The functions in this namespace are the
// production implementations: OpenMP-parallel over output elements, each
// output owning one serial accumulation loop, so results are bit-identical
// to the naive reference in kernels::serial for any thread count.
//
// Convolution convention: input (Ci, D, H, W), weight (Co, Ci, kd, kh, kw),
// bias (Co), zero padding pad = kernel/2 per axis, output spatial dim
// floor((in + 2*pad - kernel) / stride) + 1.

Shape conv3d_output_shape(const Shape& input, const Shape& weight, index_t stride);

void conv3d_forward(Tensor& out, const Tensor& in, const Tensor& w, const Tensor& b,
                    index_t stride);
// gin / gw must hold the input / weight shape on entry (strided output dims
// alone do not determine them); contents are overwritten.
void conv3d_backward_input(Tensor& gin, const Tensor& gout, const Tensor& w, index_t stride);
void conv3d_backward_weight(Tensor& gw, const Tensor& gout, const Tensor& in, index_t stride);
void conv3d_backward_bias(Tensor& gb, const Tensor& gout);

// Nearest-neighbor x2 upsampling over (C, D, H, W).
void upsample2_forward(Tensor& out, const Tensor& in);
void upsample2_backward(Tensor& gin, const Tensor& gout);

// Softmax over the channel axis of (C, spatial...).
void channel_softmax_forward(Tensor& out, const Tensor& in);
void channel_softmax_backward(Tensor& gin, const Tensor& gout, const Tensor& softmax_out);

void relu_forward(Tensor& out, const Tensor& in);
void relu_backward(Tensor& gin, const Tensor& gout, const Tensor& in);
void sigmoid_forward(Tensor& out, const Tensor& in);
void sigmoid_backward(Tensor& gin, const Tensor& gout, const Tensor& out);

// Corner-aligned 2D resize of a single plane, row-major (H, W).
void resize_bilinear_2d(std::vector<double>& out, index_t oh, index_t ow,
                        const std::vector<double>& in, index_t ih, index_t iw);
void resize_nearest_2d_int(std::vector<std::int32_t>& out, index_t oh, index_t ow,
                           const std::vector<std::int32_t>& in, index_t ih, index_t iw);

// For each point of `from`, Euclidean distance to the nearest point of `to`.
using Point3 = std::array<index_t, 3>;
std::vector<double> nearest_surface_distances(const std::vector<Point3>& from,
                                              const std::vector<Point3>& to);

namespace serial {
// Naive reference implementations, kept for bit-exactness tests and the
// kernel benchmark. Same accumulation order per output element as above.
void conv3d_forward(Tensor& out, const Tensor& in, const Tensor& w, const Tensor& b,
                    index_t stride);
void conv3d_backward_input(Tensor& gin, const Tensor& gout, const Tensor& w, index_t stride);
void conv3d_backward_weight(Tensor& gw, const Tensor& gout, const Tensor& in, index_t stride);
void conv3d_backward_bias(Tensor& gb, const Tensor& gout);
void upsample2_forward(Tensor& out, const Tensor& in);
void upsample2_backward(Tensor& gin, const Tensor& gout);
void channel_softmax_forward(Tensor& out, const Tensor& in);
void channel_softmax_backward(Tensor& gin, const Tensor& gout, const Tensor& softmax_out);
void resize_bilinear_2d(std::vector<double>& out, index_t oh, index_t ow,
                        const std::vector<double>& in, index_t ih, index_t iw);
std::vector<double> nearest_surface_distances(const std::vector<Point3>& from,
                                              const std::vector<Point3>& to);
}  // namespace serial

}  // namespace bss::kernels
