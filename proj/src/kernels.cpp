#include "soulstyle/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace soulstyle::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline int conv_out_dim(int in, int stride) { return (in + 2 - 3) / stride + 1; }
}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

// ---------------------------------------------------------------------------
// conv2d, 3x3, zero padding 1
// ---------------------------------------------------------------------------

#define SOULSTYLE_CONV_FWD_BODY                                                   \
  const int oh = conv_out_dim(input.height, spec.stride);                         \
  const int ow = conv_out_dim(input.width, spec.stride);                          \
  Image out(spec.out_channels, oh, ow);                                           \
  SOULSTYLE_PRAGMA                                                                \
  for (int o = 0; o < spec.out_channels; ++o) {                                   \
    for (int y = 0; y < oh; ++y) {                                                \
      for (int x = 0; x < ow; ++x) {                                              \
        double acc = bias[o];                                                     \
        for (int c = 0; c < spec.in_channels; ++c) {                              \
          for (int ky = 0; ky < 3; ++ky) {                                        \
            const int iy = y * spec.stride + ky - 1;                              \
            if (iy < 0 || iy >= input.height) continue;                           \
            for (int kx = 0; kx < 3; ++kx) {                                      \
              const int ix = x * spec.stride + kx - 1;                            \
              if (ix < 0 || ix >= input.width) continue;                          \
              acc += weights[((static_cast<size_t>(o) * spec.in_channels + c) * 3 \
                              + ky) * 3 + kx] *                                   \
                     input.at(c, iy, ix);                                         \
            }                                                                     \
          }                                                                       \
        }                                                                         \
        out.at(o, y, x) = acc;                                                    \
      }                                                                           \
    }                                                                             \
  }                                                                               \
  return out;

Image conv2d_forward_serial(const Image& input, const std::vector<double>& weights,
                            const std::vector<double>& bias, const Conv2dSpec& spec) {
#define SOULSTYLE_PRAGMA
  SOULSTYLE_CONV_FWD_BODY
#undef SOULSTYLE_PRAGMA
}

Image conv2d_forward_omp(const Image& input, const std::vector<double>& weights,
                         const std::vector<double>& bias, const Conv2dSpec& spec) {
#define SOULSTYLE_PRAGMA _Pragma("omp parallel for collapse(2) schedule(static)")
  SOULSTYLE_CONV_FWD_BODY
#undef SOULSTYLE_PRAGMA
}

Image conv2d_forward(const Image& input, const std::vector<double>& weights,
                     const std::vector<double>& bias, const Conv2dSpec& spec) {
  return parallel_enabled() ? conv2d_forward_omp(input, weights, bias, spec)
                            : conv2d_forward_serial(input, weights, bias, spec);
}

// Gather form: d_in[c, iy, ix] sums over every (o, ky, kx, output position)
// that read this input element.
#define SOULSTYLE_CONV_BWD_IN_BODY                                                \
  const int oh = conv_out_dim(input.height, spec.stride);                         \
  const int ow = conv_out_dim(input.width, spec.stride);                          \
  Image d_in(input.channels, input.height, input.width);                          \
  SOULSTYLE_PRAGMA                                                                \
  for (int c = 0; c < spec.in_channels; ++c) {                                    \
    for (int iy = 0; iy < input.height; ++iy) {                                   \
      for (int ix = 0; ix < input.width; ++ix) {                                  \
        double acc = 0.0;                                                         \
        for (int o = 0; o < spec.out_channels; ++o) {                             \
          for (int ky = 0; ky < 3; ++ky) {                                        \
            const int ny = iy + 1 - ky;                                           \
            if (ny % spec.stride != 0) continue;                                  \
            const int y = ny / spec.stride;                                       \
            if (y < 0 || y >= oh || ny < 0) continue;                             \
            for (int kx = 0; kx < 3; ++kx) {                                      \
              const int nx = ix + 1 - kx;                                         \
              if (nx % spec.stride != 0 || nx < 0) continue;                      \
              const int x = nx / spec.stride;                                     \
              if (x < 0 || x >= ow) continue;                                     \
              acc += weights[((static_cast<size_t>(o) * spec.in_channels + c) * 3 \
                              + ky) * 3 + kx] *                                   \
                     d_out.at(o, y, x);                                           \
            }                                                                     \
          }                                                                       \
        }                                                                         \
        d_in.at(c, iy, ix) = acc;                                                 \
      }                                                                           \
    }                                                                             \
  }                                                                               \
  return d_in;

Image conv2d_backward_input_serial(const Image& input, const std::vector<double>& weights,
                                   const Image& d_out, const Conv2dSpec& spec) {
#define SOULSTYLE_PRAGMA
  SOULSTYLE_CONV_BWD_IN_BODY
#undef SOULSTYLE_PRAGMA
}

Image conv2d_backward_input_omp(const Image& input, const std::vector<double>& weights,
                                const Image& d_out, const Conv2dSpec& spec) {
#define SOULSTYLE_PRAGMA _Pragma("omp parallel for collapse(2) schedule(static)")
  SOULSTYLE_CONV_BWD_IN_BODY
#undef SOULSTYLE_PRAGMA
}

Image conv2d_backward_input(const Image& input, const std::vector<double>& weights,
                            const Image& d_out, const Conv2dSpec& spec) {
  return parallel_enabled() ? conv2d_backward_input_omp(input, weights, d_out, spec)
                            : conv2d_backward_input_serial(input, weights, d_out, spec);
}

void conv2d_backward_params(const Image& input, const Image& d_out, const Conv2dSpec& spec,
                            std::vector<double>& d_weights, std::vector<double>& d_bias) {
  d_weights.assign(static_cast<size_t>(spec.out_channels) * spec.in_channels * 9, 0.0);
  d_bias.assign(spec.out_channels, 0.0);
  const int oh = d_out.height, ow = d_out.width;
  const bool par = parallel_enabled();
#pragma omp parallel for collapse(2) schedule(static) if (par)
  for (int o = 0; o < spec.out_channels; ++o) {
    for (int c = 0; c < spec.in_channels; ++c) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          double acc = 0.0;
          for (int y = 0; y < oh; ++y) {
            const int iy = y * spec.stride + ky - 1;
            if (iy < 0 || iy >= input.height) continue;
            for (int x = 0; x < ow; ++x) {
              const int ix = x * spec.stride + kx - 1;
              if (ix < 0 || ix >= input.width) continue;
              acc += input.at(c, iy, ix) * d_out.at(o, y, x);
            }
          }
          d_weights[((static_cast<size_t>(o) * spec.in_channels + c) * 3 + ky) * 3 + kx] = acc;
        }
      }
      if (c == 0) {
        double acc = 0.0;
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x) acc += d_out.at(o, y, x);
        d_bias[o] = acc;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// pointwise / resampling
// ---------------------------------------------------------------------------

Image relu_forward(const Image& input) {
  Image out = input;
  for (double& v : out.data) v = std::max(v, 0.0);
  return out;
}

Image relu_backward(const Image& input, const Image& d_out) {
  Image d_in = d_out;
  for (size_t i = 0; i < input.data.size(); ++i)
    if (input.data[i] <= 0.0) d_in.data[i] = 0.0;
  return d_in;
}

Image upsample_nearest2x_forward(const Image& input) {
  Image out(input.channels, input.height * 2, input.width * 2);
  for (int c = 0; c < input.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        out.at(c, y, x) = input.at(c, y / 2, x / 2);
  return out;
}

Image upsample_nearest2x_backward(const Image& input, const Image& d_out) {
  Image d_in(input.channels, input.height, input.width);
  for (int c = 0; c < input.channels; ++c)
    for (int y = 0; y < d_out.height; ++y)
      for (int x = 0; x < d_out.width; ++x)
        d_in.at(c, y / 2, x / 2) += d_out.at(c, y, x);
  return d_in;
}

namespace {
struct Tap {
  int lo;
  double w_hi;  // weight of lo+1; lo gets (1 - w_hi)
};

inline Tap resize_tap(int dst, int dst_dim, int src_dim) {
  const double scale = static_cast<double>(src_dim) / dst_dim;
  double s = (dst + 0.5) * scale - 0.5;
  s = std::clamp(s, 0.0, static_cast<double>(src_dim - 1));
  int lo = std::min(static_cast<int>(s), src_dim - 2 >= 0 ? src_dim - 2 : 0);
  return {lo, s - lo};
}
}  // namespace

#define SOULSTYLE_RESIZE_BODY                                              \
  Image out(input.channels, out_h, out_w);                                 \
  SOULSTYLE_PRAGMA                                                         \
  for (int c = 0; c < input.channels; ++c) {                               \
    for (int y = 0; y < out_h; ++y) {                                      \
      const Tap ty = resize_tap(y, out_h, input.height);                   \
      for (int x = 0; x < out_w; ++x) {                                    \
        const Tap tx = resize_tap(x, out_w, input.width);                  \
        const int y1 = std::min(ty.lo + 1, input.height - 1);              \
        const int x1 = std::min(tx.lo + 1, input.width - 1);               \
        out.at(c, y, x) =                                                  \
            (1 - ty.w_hi) * ((1 - tx.w_hi) * input.at(c, ty.lo, tx.lo)     \
                             + tx.w_hi * input.at(c, ty.lo, x1)) +         \
            ty.w_hi * ((1 - tx.w_hi) * input.at(c, y1, tx.lo)              \
                       + tx.w_hi * input.at(c, y1, x1));                   \
      }                                                                    \
    }                                                                      \
  }                                                                        \
  return out;

Image bilinear_resize_serial(const Image& input, int out_h, int out_w) {
#define SOULSTYLE_PRAGMA
  SOULSTYLE_RESIZE_BODY
#undef SOULSTYLE_PRAGMA
}

Image bilinear_resize_omp(const Image& input, int out_h, int out_w) {
#define SOULSTYLE_PRAGMA _Pragma("omp parallel for collapse(2) schedule(static)")
  SOULSTYLE_RESIZE_BODY
#undef SOULSTYLE_PRAGMA
}

Image bilinear_resize(const Image& input, int out_h, int out_w) {
  return parallel_enabled() ? bilinear_resize_omp(input, out_h, out_w)
                            : bilinear_resize_serial(input, out_h, out_w);
}

Image bilinear_resize_backward(int in_h, int in_w, int channels, const Image& d_out) {
  Image d_in(channels, in_h, in_w);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < d_out.height; ++y) {
      const Tap ty = resize_tap(y, d_out.height, in_h);
      const int y1 = std::min(ty.lo + 1, in_h - 1);
      for (int x = 0; x < d_out.width; ++x) {
        const Tap tx = resize_tap(x, d_out.width, in_w);
        const int x1 = std::min(tx.lo + 1, in_w - 1);
        const double g = d_out.at(c, y, x);
        d_in.at(c, ty.lo, tx.lo) += (1 - ty.w_hi) * (1 - tx.w_hi) * g;
        d_in.at(c, ty.lo, x1) += (1 - ty.w_hi) * tx.w_hi * g;
        d_in.at(c, y1, tx.lo) += ty.w_hi * (1 - tx.w_hi) * g;
        d_in.at(c, y1, x1) += ty.w_hi * tx.w_hi * g;
      }
    }
  }
  return d_in;
}

Image box_downsample(const Image& input, int factor) {
  const int oh = (input.height + factor - 1) / factor;
  const int ow = (input.width + factor - 1) / factor;
  Image out(input.channels, oh, ow);
  for (int c = 0; c < input.channels; ++c)
    for (int by = 0; by < oh; ++by)
      for (int bx = 0; bx < ow; ++bx) {
        const int y0 = by * factor, x0 = bx * factor;
        const int y1 = std::min(y0 + factor, input.height);
        const int x1 = std::min(x0 + factor, input.width);
        double acc = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) acc += input.at(c, y, x);
        out.at(c, by, bx) = acc / ((y1 - y0) * (x1 - x0));
      }
  return out;
}

Image box_downsample_backward(const Image& input, int factor, const Image& d_out) {
  Image d_in(input.channels, input.height, input.width);
  for (int c = 0; c < input.channels; ++c)
    for (int by = 0; by < d_out.height; ++by)
      for (int bx = 0; bx < d_out.width; ++bx) {
        const int y0 = by * factor, x0 = bx * factor;
        const int y1 = std::min(y0 + factor, input.height);
        const int x1 = std::min(x0 + factor, input.width);
        const double g = d_out.at(c, by, bx) / ((y1 - y0) * (x1 - x0));
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) d_in.at(c, y, x) += g;
      }
  return d_in;
}

namespace {
struct WarpTap {
  int x0, y0, x1, y1;
  double fx, fy;
};

inline WarpTap warp_tap(const std::array<double, 9>& h, int x, int y, int in_h, int in_w) {
  const double denom = h[6] * x + h[7] * y + h[8];
  double sx = (h[0] * x + h[1] * y + h[2]) / denom;
  double sy = (h[3] * x + h[4] * y + h[5]) / denom;
  sx = std::clamp(sx, 0.0, static_cast<double>(in_w - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(in_h - 1));
  WarpTap t;
  t.x0 = std::min(static_cast<int>(sx), in_w - 2 >= 0 ? in_w - 2 : 0);
  t.y0 = std::min(static_cast<int>(sy), in_h - 2 >= 0 ? in_h - 2 : 0);
  t.x1 = std::min(t.x0 + 1, in_w - 1);
  t.y1 = std::min(t.y0 + 1, in_h - 1);
  t.fx = sx - t.x0;
  t.fy = sy - t.y0;
  return t;
}
}  // namespace

Image perspective_warp(const Image& input, const std::array<double, 9>& coeffs,
                       int out_h, int out_w) {
  Image out(input.channels, out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const WarpTap t = warp_tap(coeffs, x, y, input.height, input.width);
      for (int c = 0; c < input.channels; ++c)
        out.at(c, y, x) = (1 - t.fy) * ((1 - t.fx) * input.at(c, t.y0, t.x0)
                                        + t.fx * input.at(c, t.y0, t.x1)) +
                          t.fy * ((1 - t.fx) * input.at(c, t.y1, t.x0)
                                  + t.fx * input.at(c, t.y1, t.x1));
    }
  return out;
}

Image perspective_warp_backward(const Image& input, const std::array<double, 9>& coeffs,
                                const Image& d_out) {
  Image d_in(input.channels, input.height, input.width);
  for (int y = 0; y < d_out.height; ++y)
    for (int x = 0; x < d_out.width; ++x) {
      const WarpTap t = warp_tap(coeffs, x, y, input.height, input.width);
      for (int c = 0; c < input.channels; ++c) {
        const double g = d_out.at(c, y, x);
        d_in.at(c, t.y0, t.x0) += (1 - t.fy) * (1 - t.fx) * g;
        d_in.at(c, t.y0, t.x1) += (1 - t.fy) * t.fx * g;
        d_in.at(c, t.y1, t.x0) += t.fy * (1 - t.fx) * g;
        d_in.at(c, t.y1, t.x1) += t.fy * t.fx * g;
      }
    }
  return d_in;
}

// Direct 8x8 Gaussian elimination with partial pivoting.
std::array<double, 9> solve_homography(const std::array<double, 8>& src_xy,
                                       const std::array<double, 8>& dst_xy) {
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    const double x = src_xy[2 * i], y = src_xy[2 * i + 1];
    const double u = dst_xy[2 * i], v = dst_xy[2 * i + 1];
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -u * x; r0[7] = -u * y; r0[8] = u;
    r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -v * x; r1[7] = -v * y; r1[8] = v;
  }
  for (int col = 0; col < 8; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap_ranges(a[col], a[col] + 9, a[pivot]);
    if (std::abs(a[col][col]) < 1e-12)
      throw NumericError("degenerate homography point configuration");
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int k = col; k < 9; ++k) a[r][k] -= f * a[col][k];
    }
  }
  std::array<double, 9> h;
  for (int i = 0; i < 8; ++i) h[i] = a[i][8] / a[i][i];
  h[8] = 1.0;
  return h;
}

Image reflect_pad(const Image& input, int pad_bottom, int pad_right) {
  Image out(input.channels, input.height + pad_bottom, input.width + pad_right);
  for (int c = 0; c < input.channels; ++c)
    for (int y = 0; y < out.height; ++y) {
      int sy = y < input.height ? y : 2 * input.height - 2 - y;
      sy = std::clamp(sy, 0, input.height - 1);
      for (int x = 0; x < out.width; ++x) {
        int sx = x < input.width ? x : 2 * input.width - 2 - x;
        sx = std::clamp(sx, 0, input.width - 1);
        out.at(c, y, x) = input.at(c, sy, sx);
      }
    }
  return out;
}

}  // namespace soulstyle::kernels
