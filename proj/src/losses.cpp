#include "soulstyle/losses.hpp"

#include <algorithm>
#include <cmath>

#include "soulstyle/kernels.hpp"
#include "soulstyle/rng.hpp"

namespace soulstyle::losses {

namespace {

constexpr double kDegenerateNorm = 1e-6;

Image crop(const Image& image, int x, int y, int w, int h) {
  Image out(image.channels, h, w);
  for (int c = 0; c < image.channels; ++c)
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) out.at(c, yy, xx) = image.at(c, y + yy, x + xx);
  return out;
}

void accumulate_crop_grad(Image& d_image, const Image& d_patch, int x, int y) {
  for (int c = 0; c < d_patch.channels; ++c)
    for (int yy = 0; yy < d_patch.height; ++yy)
      for (int xx = 0; xx < d_patch.width; ++xx)
        d_image.at(c, y + yy, x + xx) += d_patch.at(c, yy, xx);
}

void require_finite_embeddings(std::initializer_list<const perception::Embedding*> embs) {
  for (const auto* e : embs)
    for (double v : e->values)
      if (!std::isfinite(v)) throw InvalidInput("directional_loss: non-finite embedding");
}

}  // namespace

void StyleConfig::validate() const {
  if (lambda_dir < 0 || lambda_patch < 0 || lambda_content < 0 || lambda_tv < 0 ||
      lambda_mask < 0)
    throw ConfigError("loss weights must be non-negative");
  if (threshold < 0.0 || threshold > 1.0)
    throw ConfigError("threshold t must lie in [0,1]");
  if (patch_size < 8) throw ConfigError("patch_size must be at least 8");
  if (n_patches < 1) throw ConfigError("n_patches must be at least 1");
  if (augment_strength < 0.0 || augment_strength > 1.0)
    throw ConfigError("augment_strength must lie in [0,1]");
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (lr_decay_factor <= 0.0) throw ConfigError("lr_decay_factor must be positive");
}

double directional_loss(const perception::Embedding& e_out,
                        const perception::Embedding& e_src_img,
                        const perception::Embedding& e_sty_txt,
                        const perception::Embedding& e_src_txt) {
  require_finite_embeddings({&e_out, &e_src_img, &e_sty_txt, &e_src_txt});
  const size_t n = e_out.values.size();
  double di_dt = 0.0, di_di = 0.0, dt_dt = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double di = e_out.values[i] - e_src_img.values[i];
    const double dt = e_sty_txt.values[i] - e_src_txt.values[i];
    di_dt += di * dt;
    di_di += di * di;
    dt_dt += dt * dt;
  }
  const double ni = std::sqrt(di_di), nt = std::sqrt(dt_dt);
  if (ni < kDegenerateNorm || nt < kDegenerateNorm) return 1.0;
  return 1.0 - di_dt / (ni * nt);
}

std::vector<double> directional_loss_grad(const perception::Embedding& e_out,
                                          const perception::Embedding& e_src_img,
                                          const perception::Embedding& e_sty_txt,
                                          const perception::Embedding& e_src_txt) {
  const size_t n = e_out.values.size();
  std::vector<double> grad(n, 0.0);
  double di_dt = 0.0, di_di = 0.0, dt_dt = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double di = e_out.values[i] - e_src_img.values[i];
    const double dt = e_sty_txt.values[i] - e_src_txt.values[i];
    di_dt += di * dt;
    di_di += di * di;
    dt_dt += dt * dt;
  }
  const double ni = std::sqrt(di_di), nt = std::sqrt(dt_dt);
  if (ni < kDegenerateNorm || nt < kDegenerateNorm) return grad;  // flat at the plateau
  const double cos = di_dt / (ni * nt);
  for (size_t i = 0; i < n; ++i) {
    const double di = e_out.values[i] - e_src_img.values[i];
    const double dt = e_sty_txt.values[i] - e_src_txt.values[i];
    grad[i] = (cos * di / ni - dt / nt) / ni;
  }
  return grad;
}

std::vector<PatchBox> sample_patch_boxes(int n, int img_h, int img_w, int patch_size,
                                         uint64_t seed) {
  if (patch_size > std::min(img_h, img_w))
    throw InvalidInput("sample_patch_boxes: patch_size exceeds image size");
  const uint64_t s = rng::mix(seed, rng::kPatchTag);
  std::vector<PatchBox> boxes(n);
  for (int i = 0; i < n; ++i) {
    const double ux = rng::uniform01(rng::mix(s, 2 * static_cast<uint64_t>(i)));
    const double uy = rng::uniform01(rng::mix(s, 2 * static_cast<uint64_t>(i) + 1));
    boxes[i].x = std::min(static_cast<int>(ux * (img_w - patch_size + 1)), img_w - patch_size);
    boxes[i].y = std::min(static_cast<int>(uy * (img_h - patch_size + 1)), img_h - patch_size);
  }
  return boxes;
}

PatchLossResult patch_loss(const Image& stylized, const Image& content, const Mask& mask,
                           const perception::Embedding& e_sty_txt,
                           const perception::Embedding& e_src_txt,
                           const StyleConfig& cfg, const perception::Backend& backend,
                           uint64_t seed, Image* d_stylized) {
  if (!stylized.same_shape(content) || mask.height != stylized.height ||
      mask.width != stylized.width)
    throw InvalidInput("patch_loss: stylized/content/mask shapes differ");
  if (cfg.patch_size > std::min(stylized.height, stylized.width))
    throw InvalidInput("patch_loss: patch_size exceeds image size");

  const int ps = cfg.patch_size;
  const int res = backend.input_resolution();
  const double gate = cfg.use_t_gating ? cfg.threshold : 0.0;
  const auto boxes = sample_patch_boxes(cfg.n_patches, stylized.height, stylized.width,
                                        ps, seed);
  const uint64_t aug_base = rng::mix(seed, rng::kAugTag);

  double sum = 0.0;
  int kept = 0;
  struct Pending {
    int index;
    std::vector<double> d_emb;
  };
  std::vector<Pending> pending;

  for (int i = 0; i < cfg.n_patches; ++i) {
    if (segmentation::patch_mask_mean(mask, boxes[i].x, boxes[i].y, ps, ps) < gate)
      continue;
    ++kept;
    const uint64_t aug_seed = rng::mix(aug_base, static_cast<uint64_t>(i));
    const Image patch = crop(stylized, boxes[i].x, boxes[i].y, ps, ps);
    const Image aug = perception::augment_patch(patch, cfg.augment_strength, aug_seed, res);
    const auto e_patch = backend.encode_image(aug);
    // source side: resize-only embedding of the same-location content patch
    const Image content_patch = crop(content, boxes[i].x, boxes[i].y, ps, ps);
    const auto e_content =
        backend.encode_image(kernels::bilinear_resize(content_patch, res, res));
    const double l = directional_loss(e_patch, e_content, e_sty_txt, e_src_txt);
    const bool rejected = cfg.reject_tau && l < *cfg.reject_tau;
    if (!rejected) {
      sum += l;
      if (d_stylized)
        pending.push_back({i, directional_loss_grad(e_patch, e_content, e_sty_txt, e_src_txt)});
    }
  }

  if (kept == 0) return {0.0, 0};

  if (d_stylized) {
    const double scale = 1.0 / kept;
    for (const auto& p : pending) {
      const uint64_t aug_seed = rng::mix(aug_base, static_cast<uint64_t>(p.index));
      const Image patch = crop(stylized, boxes[p.index].x, boxes[p.index].y, ps, ps);
      std::vector<double> d_emb = p.d_emb;
      for (double& g : d_emb) g *= scale;
      Image d_patch;
      if (cfg.augment_strength == 0.0) {
        const Image aug = kernels::bilinear_resize(patch, res, res);
        const Image d_aug = backend.encode_image_backward(aug, d_emb);
        d_patch = kernels::bilinear_resize_backward(ps, ps, 3, d_aug);
      } else {
        const auto h = perception::augment_homography(ps, ps, cfg.augment_strength, aug_seed);
        const Image warped = kernels::perspective_warp(patch, h, ps, ps);
        const Image aug = kernels::bilinear_resize(warped, res, res);
        const Image d_aug = backend.encode_image_backward(aug, d_emb);
        const Image d_warped = kernels::bilinear_resize_backward(ps, ps, 3, d_aug);
        d_patch = kernels::perspective_warp_backward(patch, h, d_warped);
      }
      accumulate_crop_grad(*d_stylized, d_patch, boxes[p.index].x, boxes[p.index].y);
    }
  }
  return {sum / kept, kept};
}

double content_loss(const Image& stylized, const Image& content,
                    const PerceptualExtractor* extractor, Image* d_stylized) {
  if (!stylized.same_shape(content))
    throw InvalidInput("content_loss: dimension mismatch");
  if (extractor) return extractor->loss_and_grad(stylized, content, d_stylized);

  const Image ds = kernels::box_downsample(stylized, 4);
  const Image dc = kernels::box_downsample(content, 4);
  const double n = static_cast<double>(ds.data.size());
  double acc = 0.0;
  for (size_t i = 0; i < ds.data.size(); ++i) {
    const double d = ds.data[i] - dc.data[i];
    acc += d * d;
  }
  if (d_stylized) {
    Image d_small = ds;
    for (size_t i = 0; i < ds.data.size(); ++i)
      d_small.data[i] = 2.0 * (ds.data[i] - dc.data[i]) / n;
    *d_stylized = kernels::box_downsample_backward(stylized, 4, d_small);
  }
  return acc / n;
}

double tv_loss(const Image& image, Image* d_image) {
  if (image.height < 2 && image.width < 2)
    throw InvalidInput("tv_loss: image has no neighboring pixels");
  if (d_image) *d_image = Image(image.channels, image.height, image.width);

  const double n_h = static_cast<double>(image.height) * (image.width - 1);
  const double n_v = static_cast<double>(image.height - 1) * image.width;
  double total = 0.0;
  for (int c = 0; c < image.channels; ++c) {
    double h_acc = 0.0, v_acc = 0.0;
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x + 1 < image.width; ++x) {
        const double d = image.at(c, y, x + 1) - image.at(c, y, x);
        h_acc += d * d;
        if (d_image) {
          const double g = 2.0 * d / (n_h * image.channels);
          d_image->at(c, y, x + 1) += g;
          d_image->at(c, y, x) -= g;
        }
      }
    for (int y = 0; y + 1 < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        const double d = image.at(c, y + 1, x) - image.at(c, y, x);
        v_acc += d * d;
        if (d_image) {
          const double g = 2.0 * d / (n_v * image.channels);
          d_image->at(c, y + 1, x) += g;
          d_image->at(c, y, x) -= g;
        }
      }
    total += (n_h > 0 ? h_acc / n_h : 0.0) + (n_v > 0 ? v_acc / n_v : 0.0);
  }
  return total / image.channels;
}

double mask_loss(const Image& stylized, const Image& content, const Mask& mask,
                 Image* d_stylized) {
  if (!stylized.same_shape(content) || mask.height != stylized.height ||
      mask.width != stylized.width)
    throw InvalidInput("mask_loss: dimension mismatch");
  const double n = static_cast<double>(stylized.data.size());
  if (d_stylized) *d_stylized = Image(stylized.channels, stylized.height, stylized.width);
  double acc = 0.0;
  for (int c = 0; c < stylized.channels; ++c)
    for (int y = 0; y < stylized.height; ++y)
      for (int x = 0; x < stylized.width; ++x) {
        const double w = 1.0 - mask.at(y, x);
        const double d = stylized.at(c, y, x) - content.at(c, y, x);
        acc += w * d * d;
        if (d_stylized) d_stylized->at(c, y, x) = 2.0 * w * d / n;
      }
  return acc / n;
}

CachedEmbeddings compute_cached_embeddings(const Image& content,
                                           const instruction::ParsedInstruction& parsed,
                                           const StyleConfig& cfg,
                                           const perception::Backend& backend) {
  return {backend.encode_text(parsed.stylized_content), backend.encode_text(cfg.source_text),
          backend.encode_image(content)};
}

LossBreakdown total_loss(const TotalLossInputs& in, const CachedEmbeddings& cached,
                         Image* d_stylized) {
  in.cfg.validate();
  require_valid_pixels(in.stylized, "total_loss(stylized)");
  require_valid_pixels(in.content, "total_loss(content)");
  require_valid_mask(in.mask, "total_loss(mask)");
  if (!in.stylized.same_shape(in.content))
    throw InvalidInput("total_loss: stylized/content shapes differ");

  LossBreakdown out;
  if (d_stylized) *d_stylized = Image(in.stylized.channels, in.stylized.height, in.stylized.width);

  auto add_grad = [&](const Image& g, double weight) {
    if (!d_stylized || weight == 0.0) return;
    for (size_t i = 0; i < d_stylized->data.size(); ++i)
      d_stylized->data[i] += weight * g.data[i];
  };

  // global directional term
  {
    Image composite_image;
    const Image* dir_input = &in.stylized;
    if (in.cfg.dir_on_composite) {
      composite_image = in.stylized;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < in.stylized.height; ++y)
          for (int x = 0; x < in.stylized.width; ++x) {
            const double m = in.mask.at(y, x);
            composite_image.at(c, y, x) =
                m * in.stylized.at(c, y, x) + (1.0 - m) * in.content.at(c, y, x);
          }
      dir_input = &composite_image;
    }
    const auto e_out = in.backend.encode_image(*dir_input);
    out.dir = directional_loss(e_out, cached.e_src_img, cached.e_sty_txt, cached.e_src_txt);
    if (d_stylized && in.cfg.lambda_dir != 0.0) {
      auto d_emb = directional_loss_grad(e_out, cached.e_src_img, cached.e_sty_txt,
                                         cached.e_src_txt);
      Image g = in.backend.encode_image_backward(*dir_input, d_emb);
      if (in.cfg.dir_on_composite)
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x) g.at(c, y, x) *= in.mask.at(y, x);
      add_grad(g, in.cfg.lambda_dir);
    }
  }

  // patchwise term
  {
    Image g;
    Image* gp = nullptr;
    if (d_stylized && in.cfg.lambda_patch != 0.0) {
      g = Image(in.stylized.channels, in.stylized.height, in.stylized.width);
      gp = &g;
    }
    const auto res = patch_loss(in.stylized, in.content, in.mask, cached.e_sty_txt,
                                cached.e_src_txt, in.cfg, in.backend, in.seed, gp);
    out.patch = res.value;
    out.patches_used = res.patches_used;
    if (gp) add_grad(g, in.cfg.lambda_patch);
  }

  {
    Image g;
    out.content = content_loss(in.stylized, in.content, in.extractor,
                               d_stylized && in.cfg.lambda_content != 0.0 ? &g : nullptr);
    if (d_stylized && in.cfg.lambda_content != 0.0) add_grad(g, in.cfg.lambda_content);
  }
  {
    Image g;
    out.tv = tv_loss(in.stylized, d_stylized && in.cfg.lambda_tv != 0.0 ? &g : nullptr);
    if (d_stylized && in.cfg.lambda_tv != 0.0) add_grad(g, in.cfg.lambda_tv);
  }
  const double mask_weight =
      in.cfg.use_t_mask_weight ? in.cfg.threshold * in.cfg.lambda_mask : in.cfg.lambda_mask;
  {
    Image g;
    out.mask = mask_loss(in.stylized, in.content, in.mask,
                         d_stylized && mask_weight != 0.0 ? &g : nullptr);
    if (d_stylized && mask_weight != 0.0) add_grad(g, mask_weight);
  }

  out.total = in.cfg.lambda_dir * out.dir + in.cfg.lambda_patch * out.patch +
              in.cfg.lambda_content * out.content + in.cfg.lambda_tv * out.tv +
              mask_weight * out.mask;
  return out;
}

}  // namespace soulstyle::losses
