#pragma once

#include <array>
#include <vector>

#include "soulstyle/tensor.hpp"

// Dense numeric kernels backing the network and the losses. Every parallel
// kernel has a serial twin with the identical accumulation order, so the
// two produce bit-identical results; the dispatching entry points pick the
// variant from the process-wide toggle. All backward kernels are written in
// gather form (each output element sums its own contributions), which keeps
// the parallel versions race-free and deterministic.
namespace soulstyle::kernels {

void set_parallel(bool enabled);
bool parallel_enabled();

struct Conv2dSpec {
  int out_channels = 0;
  int in_channels = 0;
  int stride = 1;  // 1 or 2; kernel is always 3x3, zero padding 1
};

// weights layout: [out][in][ky][kx], bias: [out]
Image conv2d_forward(const Image& input, const std::vector<double>& weights,
                     const std::vector<double>& bias, const Conv2dSpec& spec);
Image conv2d_forward_serial(const Image& input, const std::vector<double>& weights,
                            const std::vector<double>& bias, const Conv2dSpec& spec);
Image conv2d_forward_omp(const Image& input, const std::vector<double>& weights,
                         const std::vector<double>& bias, const Conv2dSpec& spec);

Image conv2d_backward_input(const Image& input, const std::vector<double>& weights,
                            const Image& d_out, const Conv2dSpec& spec);
Image conv2d_backward_input_serial(const Image& input, const std::vector<double>& weights,
                                   const Image& d_out, const Conv2dSpec& spec);
Image conv2d_backward_input_omp(const Image& input, const std::vector<double>& weights,
                                const Image& d_out, const Conv2dSpec& spec);

void conv2d_backward_params(const Image& input, const Image& d_out, const Conv2dSpec& spec,
                            std::vector<double>& d_weights, std::vector<double>& d_bias);

Image relu_forward(const Image& input);
Image relu_backward(const Image& input, const Image& d_out);

Image upsample_nearest2x_forward(const Image& input);
Image upsample_nearest2x_backward(const Image& input, const Image& d_out);

// Half-pixel-center bilinear resize; linear in the input values.
Image bilinear_resize(const Image& input, int out_h, int out_w);
Image bilinear_resize_serial(const Image& input, int out_h, int out_w);
Image bilinear_resize_omp(const Image& input, int out_h, int out_w);
// Adjoint of the resize: scatters d_out back onto the input grid.
Image bilinear_resize_backward(int in_h, int in_w, int channels, const Image& d_out);

// Box-mean downsample by an integer factor; trailing partial blocks average
// over the pixels actually present.
Image box_downsample(const Image& input, int factor);
Image box_downsample_backward(const Image& input, int factor, const Image& d_out);

// Perspective warp: `coeffs` is the row-major 3x3 homography mapping output
// pixel coordinates (x, y, 1) to input coordinates; samples bilinearly with
// edge clamping.
Image perspective_warp(const Image& input, const std::array<double, 9>& coeffs,
                       int out_h, int out_w);
Image perspective_warp_backward(const Image& input, const std::array<double, 9>& coeffs,
                                const Image& d_out);

// Homography sending (x_i, y_i) -> (u_i, v_i) for four point pairs.
std::array<double, 9> solve_homography(const std::array<double, 8>& src_xy,
                                       const std::array<double, 8>& dst_xy);

Image reflect_pad(const Image& input, int pad_bottom, int pad_right);

}  // namespace soulstyle::kernels
