#include "soulstyle/stylenet.hpp"

#include <algorithm>
#include <cmath>

#include "soulstyle/kernels.hpp"
#include "soulstyle/rng.hpp"

namespace soulstyle::stylenet {

namespace {

constexpr uint64_t kNetTag = 0x4E4554;

using kernels::Conv2dSpec;

Conv2dSpec spec_of(const ConvParams& p) {
  return {p.out_channels, p.in_channels, p.stride};
}

ConvParams make_conv(int out_c, int in_c, int stride, uint64_t seed, int layer_index,
                     bool zero_init) {
  ConvParams p;
  p.out_channels = out_c;
  p.in_channels = in_c;
  p.stride = stride;
  p.weights.assign(static_cast<size_t>(out_c) * in_c * 9, 0.0);
  p.bias.assign(out_c, 0.0);
  if (!zero_init) {
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(in_c) * 9);
    const uint64_t base = rng::mix(rng::mix(seed, kNetTag), static_cast<uint64_t>(layer_index));
    for (size_t i = 0; i < p.weights.size(); ++i)
      p.weights[i] = rng::normal(rng::mix(base, i)) * std_dev;
  }
  return p;
}

// Activations recorded by forward and replayed by backward.
struct Tape {
  Image input;
  Image d1_pre, d2_pre, d3_pre;          // conv outputs before relu
  Image res_in[3], res_mid_pre[3];       // residual block inputs and first-conv outputs
  Image res_out;
  Image up1_in, up1_pre, up2_in, up2_pre, up3_in, up3_pre;
  Image pre_clamp;
};

Image run_forward(const StyleNetParams& params, const Image& image, Tape* tape) {
  if (image.height % 8 != 0 || image.width % 8 != 0)
    throw InvalidInput("stylenet forward: H and W must be divisible by 8");
  require_valid_pixels(image, "stylenet forward");

  auto block = [&](const ConvParams& p, const Image& in, Image* pre_store) {
    Image pre = kernels::conv2d_forward(in, p.weights, p.bias, spec_of(p));
    if (pre_store) *pre_store = pre;
    return kernels::relu_forward(pre);
  };

  if (tape) tape->input = image;
  Image d1 = block(params.down1, image, tape ? &tape->d1_pre : nullptr);
  Image d2 = block(params.down2, d1, tape ? &tape->d2_pre : nullptr);
  Image x = block(params.down3, d2, tape ? &tape->d3_pre : nullptr);

  for (int i = 0; i < 3; ++i) {
    if (tape) tape->res_in[i] = x;
    Image mid = block(params.res_a[i], x, tape ? &tape->res_mid_pre[i] : nullptr);
    Image delta = kernels::conv2d_forward(mid, params.res_b[i].weights, params.res_b[i].bias,
                                          spec_of(params.res_b[i]));
    for (size_t k = 0; k < x.data.size(); ++k) x.data[k] += delta.data[k];
  }
  if (tape) tape->res_out = x;

  Image u = kernels::upsample_nearest2x_forward(x);
  if (tape) tape->up1_in = u;
  u = block(params.up1, u, tape ? &tape->up1_pre : nullptr);
  u = kernels::upsample_nearest2x_forward(u);
  if (tape) tape->up2_in = u;
  u = block(params.up2, u, tape ? &tape->up2_pre : nullptr);
  u = kernels::upsample_nearest2x_forward(u);
  if (tape) tape->up3_in = u;
  u = block(params.up3, u, tape ? &tape->up3_pre : nullptr);

  Image head = kernels::conv2d_forward(u, params.head.weights, params.head.bias,
                                       spec_of(params.head));
  Image pre(3, image.height, image.width);
  for (size_t k = 0; k < pre.data.size(); ++k) pre.data[k] = image.data[k] + head.data[k];
  if (tape) tape->pre_clamp = pre;

  Image out = pre;
  for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace

std::vector<ConvParams*> StyleNetParams::layers() {
  return {&down1, &down2, &down3, &res_a[0], &res_b[0], &res_a[1], &res_b[1],
          &res_a[2], &res_b[2], &up1, &up2, &up3, &head};
}

std::vector<const ConvParams*> StyleNetParams::layers() const {
  return {&down1, &down2, &down3, &res_a[0], &res_b[0], &res_a[1], &res_b[1],
          &res_a[2], &res_b[2], &up1, &up2, &up3, &head};
}

StyleNetParams init_params(uint64_t seed) {
  StyleNetParams p;
  int li = 0;
  p.down1 = make_conv(16, 3, 2, seed, li++, false);
  p.down2 = make_conv(32, 16, 2, seed, li++, false);
  p.down3 = make_conv(64, 32, 2, seed, li++, false);
  for (int i = 0; i < 3; ++i) {
    p.res_a[i] = make_conv(64, 64, 1, seed, li++, false);
    p.res_b[i] = make_conv(64, 64, 1, seed, li++, false);
  }
  p.up1 = make_conv(32, 64, 1, seed, li++, false);
  p.up2 = make_conv(16, 32, 1, seed, li++, false);
  p.up3 = make_conv(16, 16, 1, seed, li++, false);
  p.head = make_conv(3, 16, 1, seed, li++, true);
  return p;
}

Image forward(const StyleNetParams& params, const Image& image) {
  return run_forward(params, image, nullptr);
}

StyleNetParams backward(const StyleNetParams& params, const Image& image,
                        const Image& d_output) {
  Tape tape;
  run_forward(params, image, &tape);

  StyleNetParams grads;
  auto zero_like = [](const ConvParams& p) {
    ConvParams g;
    g.out_channels = p.out_channels;
    g.in_channels = p.in_channels;
    g.stride = p.stride;
    g.weights.assign(p.weights.size(), 0.0);
    g.bias.assign(p.bias.size(), 0.0);
    return g;
  };
  {
    auto src = params.layers();
    auto dst = grads.layers();
    for (size_t i = 0; i < src.size(); ++i) *dst[i] = zero_like(*src[i]);
  }

  // clamp: zero gradient where the output saturated
  Image d_pre = d_output;
  for (size_t k = 0; k < d_pre.data.size(); ++k) {
    const double v = tape.pre_clamp.data[k];
    if (v <= 0.0 || v >= 1.0) d_pre.data[k] = 0.0;
  }

  auto conv_bwd = [&](const ConvParams& p, ConvParams& g, const Image& in,
                      const Image& d_out) {
    kernels::conv2d_backward_params(in, d_out, spec_of(p), g.weights, g.bias);
    return kernels::conv2d_backward_input(in, p.weights, d_out, spec_of(p));
  };
  auto block_bwd = [&](const ConvParams& p, ConvParams& g, const Image& in,
                       const Image& pre, const Image& d_out) {
    return conv_bwd(p, g, in, kernels::relu_backward(pre, d_out));
  };

  // head (its input is up3's activation)
  const Image up3_act = kernels::relu_forward(tape.up3_pre);
  Image d = conv_bwd(params.head, grads.head, up3_act, d_pre);

  d = block_bwd(params.up3, grads.up3, tape.up3_in, tape.up3_pre, d);
  d = kernels::upsample_nearest2x_backward(
      Image(params.up2.out_channels, tape.up3_in.height / 2, tape.up3_in.width / 2), d);
  d = block_bwd(params.up2, grads.up2, tape.up2_in, tape.up2_pre, d);
  d = kernels::upsample_nearest2x_backward(
      Image(params.up1.out_channels, tape.up2_in.height / 2, tape.up2_in.width / 2), d);
  d = block_bwd(params.up1, grads.up1, tape.up1_in, tape.up1_pre, d);
  d = kernels::upsample_nearest2x_backward(
      Image(64, tape.up1_in.height / 2, tape.up1_in.width / 2), d);

  for (int i = 2; i >= 0; --i) {
    // x_{i+1} = x_i + conv_b(relu(conv_a(x_i)))
    const Image mid = kernels::relu_forward(tape.res_mid_pre[i]);
    Image d_mid = conv_bwd(params.res_b[i], grads.res_b[i], mid, d);
    Image d_in = block_bwd(params.res_a[i], grads.res_a[i], tape.res_in[i],
                           tape.res_mid_pre[i], d_mid);
    for (size_t k = 0; k < d.data.size(); ++k) d.data[k] += d_in.data[k];
  }

  const Image d2_act = kernels::relu_forward(tape.d2_pre);
  const Image d1_act = kernels::relu_forward(tape.d1_pre);
  d = block_bwd(params.down3, grads.down3, d2_act, tape.d3_pre, d);
  d = block_bwd(params.down2, grads.down2, d1_act, tape.d2_pre, d);
  block_bwd(params.down1, grads.down1, tape.input, tape.d1_pre, d);

  return grads;
}

namespace {

struct AdamState {
  std::vector<std::vector<double>> m, v;
};

void adam_step(StyleNetParams& params, const StyleNetParams& grads, AdamState& state,
               int t, double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  auto ps = params.layers();
  auto gs = grads.layers();
  if (state.m.empty()) {
    for (auto* p : ps) {
      state.m.push_back(std::vector<double>(p->weights.size() + p->bias.size(), 0.0));
      state.v.push_back(std::vector<double>(p->weights.size() + p->bias.size(), 0.0));
    }
  }
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (size_t li = 0; li < ps.size(); ++li) {
    auto update = [&](std::vector<double>& x, const std::vector<double>& g, size_t off) {
      for (size_t i = 0; i < x.size(); ++i) {
        double& m = state.m[li][off + i];
        double& v = state.v[li][off + i];
        m = beta1 * m + (1.0 - beta1) * g[i];
        v = beta2 * v + (1.0 - beta2) * g[i] * g[i];
        x[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
      }
    };
    update(ps[li]->weights, gs[li]->weights, 0);
    update(ps[li]->bias, gs[li]->bias, ps[li]->weights.size());
  }
}

Mask pad_mask(const Mask& mask, int pad_b, int pad_r) {
  Image m(1, mask.height, mask.width);
  m.data = mask.values;
  const Image padded = kernels::reflect_pad(m, pad_b, pad_r);
  Mask out(padded.height, padded.width);
  out.values = padded.data;
  return out;
}

const char* worst_term(const losses::LossBreakdown& b) {
  if (!std::isfinite(b.dir)) return "dir";
  if (!std::isfinite(b.patch)) return "patch";
  if (!std::isfinite(b.content)) return "content";
  if (!std::isfinite(b.tv)) return "tv";
  if (!std::isfinite(b.mask)) return "mask";
  return "total";
}

}  // namespace

std::pair<Image, OptimState> optimize(const Image& content,
                                      const instruction::ParsedInstruction& parsed,
                                      const Mask& mask, const losses::StyleConfig& cfg,
                                      const perception::Backend& backend,
                                      const losses::PerceptualExtractor* extractor,
                                      const ProgressFn& progress) {
  cfg.validate();
  require_valid_pixels(content, "optimize(content)");
  if (mask.height != content.height || mask.width != content.width)
    throw InvalidInput("optimize: mask/content dimensions differ");

  const int pad_b = (8 - content.height % 8) % 8;
  const int pad_r = (8 - content.width % 8) % 8;
  const Image padded = pad_b || pad_r ? kernels::reflect_pad(content, pad_b, pad_r) : content;
  Mask work_mask = pad_b || pad_r ? pad_mask(mask, pad_b, pad_r) : mask;
  if (cfg.mask_binarize) work_mask = segmentation::binarize(work_mask, 0.5);

  StyleNetParams params = init_params(cfg.seed);
  AdamState adam;
  OptimState state;

  const auto cached = losses::compute_cached_embeddings(padded, parsed, cfg, backend);
  const int decay_step = cfg.lr_decay_step.value_or(cfg.iterations / 2);

  for (int step = 0; step < cfg.iterations; ++step) {
    state.lr = step >= decay_step ? cfg.lr * cfg.lr_decay_factor : cfg.lr;
    const Image stylized = run_forward(params, padded, nullptr);
    Image d_stylized;
    const uint64_t step_seed = rng::mix(cfg.seed, rng::mix(rng::kStepTag, step));
    const auto breakdown = losses::total_loss(
        {stylized, padded, work_mask, parsed, cfg, backend, step_seed, extractor},
        cached, &d_stylized);
    if (!std::isfinite(breakdown.total))
      throw NumericError(std::string("optimize: non-finite loss term '") +
                         worst_term(breakdown) + "' at step " + std::to_string(step));
    const StyleNetParams grads = backward(params, padded, d_stylized);
    adam_step(params, grads, adam, step + 1, state.lr);
    state.loss_history.push_back(breakdown);
    state.step = step + 1;
    if (progress) progress(step, breakdown);
  }

  Image result = run_forward(params, padded, nullptr);
  if (pad_b || pad_r) {
    Image cropped(3, content.height, content.width);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < content.height; ++y)
        for (int x = 0; x < content.width; ++x) cropped.at(c, y, x) = result.at(c, y, x);
    result = cropped;
  }
  return {result, state};
}

Image composite(const Image& stylized, const Image& content, const Mask& mask, bool hard) {
  if (!stylized.same_shape(content) || mask.height != stylized.height ||
      mask.width != stylized.width)
    throw InvalidInput("composite: shape mismatch");
  const Mask m = hard ? segmentation::binarize(mask, 0.5) : mask;
  Image out = stylized;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        const double w = m.at(y, x);
        out.at(c, y, x) = w * stylized.at(c, y, x) + (1.0 - w) * content.at(c, y, x);
      }
  return out;
}

}  // namespace soulstyle::stylenet
