// Times the serial reference kernels against the OpenMP variants on
// StyleNet-shaped workloads and reports the speedup.
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "soulstyle/kernels.hpp"
#include "soulstyle/rng.hpp"

using namespace soulstyle;

namespace {

Image random_image(int c, int h, int w, uint64_t seed) {
  Image img(c, h, w);
  for (size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = rng::uniform01(rng::mix(seed, i));
  return img;
}

std::vector<double> random_vec(size_t n, uint64_t seed) {
  std::vector<double> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = rng::normal(rng::mix(seed, i)) * 0.05;
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warmup
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
             .count() /
         reps;
}

void bench_conv(int in_c, int out_c, int h, int w, int stride, int reps) {
  const Image input = random_image(in_c, h, w, 1);
  const auto weights = random_vec(static_cast<size_t>(out_c) * in_c * 9, 2);
  const auto bias = random_vec(out_c, 3);
  const kernels::Conv2dSpec spec{out_c, in_c, stride};

  const double serial = time_ms(
      [&] { kernels::conv2d_forward_serial(input, weights, bias, spec); }, reps);
  const double omp =
      time_ms([&] { kernels::conv2d_forward_omp(input, weights, bias, spec); }, reps);

  const Image d_out = kernels::conv2d_forward_serial(input, weights, bias, spec);
  const double bwd_serial = time_ms(
      [&] { kernels::conv2d_backward_input_serial(input, weights, d_out, spec); }, reps);
  const double bwd_omp = time_ms(
      [&] { kernels::conv2d_backward_input_omp(input, weights, d_out, spec); }, reps);

  std::printf("conv %3dx%-3d %4dx%-4d s%d  fwd %8.2f ms -> %8.2f ms (%.2fx)   bwd %8.2f ms -> %8.2f ms (%.2fx)\n",
              in_c, out_c, h, w, stride, serial, omp, serial / omp, bwd_serial, bwd_omp,
              bwd_serial / bwd_omp);
}

void bench_resize(int h, int w, int out, int reps) {
  const Image input = random_image(3, h, w, 4);
  const double serial =
      time_ms([&] { kernels::bilinear_resize_serial(input, out, out); }, reps);
  const double omp = time_ms([&] { kernels::bilinear_resize_omp(input, out, out); }, reps);
  std::printf("resize 3x%dx%d -> %dx%d       %8.2f ms -> %8.2f ms (%.2fx)\n", h, w, out, out,
              serial, omp, serial / omp);
}

}  // namespace

int main() {
  std::printf("serial reference vs OpenMP kernels\n\n");
  bench_conv(3, 16, 512, 512, 2, 5);
  bench_conv(16, 32, 256, 256, 2, 5);
  bench_conv(32, 64, 128, 128, 2, 5);
  bench_conv(64, 64, 64, 64, 1, 5);
  bench_conv(16, 3, 512, 512, 1, 3);
  bench_resize(512, 512, 16, 20);
  bench_resize(128, 128, 32, 50);
  return 0;
}
