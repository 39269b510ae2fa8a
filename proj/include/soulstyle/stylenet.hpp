#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "soulstyle/losses.hpp"
#include "soulstyle/tensor.hpp"

namespace soulstyle::stylenet {

struct ConvParams {
  int out_channels = 0;
  int in_channels = 0;
  int stride = 1;
  std::vector<double> weights;  // [out][in][3][3]
  std::vector<double> bias;     // [out]
};

// Lightweight encoder-decoder: three stride-2 downsampling conv blocks
// (3->16->32->64), three residual blocks at width 64, three nearest-up
// blocks mirroring the encoder, a zero-initialized 3-channel head, and a
// global residual connection followed by a clamp to [0,1]. The zero head
// makes the network start as (almost) the identity.
struct StyleNetParams {
  ConvParams down1, down2, down3;
  ConvParams res_a[3], res_b[3];
  ConvParams up1, up2, up3;
  ConvParams head;

  std::vector<ConvParams*> layers();
  std::vector<const ConvParams*> layers() const;
};

struct OptimState {
  int step = 0;
  double lr = 0.0;
  std::vector<losses::LossBreakdown> loss_history;
};

// Seeded fan-in-scaled normal weights; the head stays zero so forward is
// the identity (up to the clamp) at step 0.
StyleNetParams init_params(uint64_t seed);

// Full forward pass. H and W must be divisible by 8; callers with other
// sizes reflect-pad first (optimize does this).
Image forward(const StyleNetParams& params, const Image& image);

// Gradients of a scalar loss w.r.t. every parameter, given the loss
// gradient w.r.t. the output pixels. Same tape as forward.
StyleNetParams backward(const StyleNetParams& params, const Image& image,
                        const Image& d_output);

using ProgressFn = std::function<void(int step, const losses::LossBreakdown&)>;

// Per-image optimization of the total loss with Adam. Text and source
// image embeddings are computed once up front. Deterministic per
// (seed, backend, cfg). Throws NumericError naming the offending term and
// step if the loss goes non-finite.
std::pair<Image, OptimState> optimize(const Image& content,
                                      const instruction::ParsedInstruction& parsed,
                                      const Mask& mask, const losses::StyleConfig& cfg,
                                      const perception::Backend& backend,
                                      const losses::PerceptualExtractor* extractor = nullptr,
                                      const ProgressFn& progress = nullptr);

// M*stylized + (1-M)*content; hard mode binarizes the mask at 0.5 first.
Image composite(const Image& stylized, const Image& content, const Mask& mask, bool hard);

}  // namespace soulstyle::stylenet
