#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "soulstyle/instruction.hpp"
#include "soulstyle/perception.hpp"
#include "soulstyle/segmentation.hpp"
#include "soulstyle/tensor.hpp"

namespace soulstyle::losses {

// Per-term values plus the weighted total for one optimization step.
struct LossBreakdown {
  double dir = 0.0;
  double patch = 0.0;
  double content = 0.0;
  double tv = 0.0;
  double mask = 0.0;
  double total = 0.0;
  int patches_used = 0;
};

// Every knob of the objective and the optimization schedule.
struct StyleConfig {
  double lambda_dir = 500.0;
  double lambda_patch = 9000.0;
  double lambda_content = 150.0;
  double lambda_tv = 2e-3;
  double lambda_mask = 1000.0;
  double threshold = 0.7;           // t: weights the mask term and gates patches
  int patch_size = 128;
  int n_patches = 64;
  double augment_strength = 0.5;
  std::optional<double> reject_tau; // per-patch losses below this contribute 0
  std::string source_text = "a Photo";
  int iterations = 200;
  double lr = 5e-4;
  std::optional<int> lr_decay_step; // default: iterations / 2
  double lr_decay_factor = 0.5;
  uint64_t seed = 0;
  bool use_t_gating = true;         // t gates patch inclusion by mean mask
  bool use_t_mask_weight = true;    // t multiplies the mask term
  bool dir_on_composite = false;    // global directional loss on the mask composite
  bool mask_binarize = false;       // binarize the mask at 0.5 before optimizing

  void validate() const;
};

// Hook for a real perceptual (feature-space) content loss. When absent the
// content loss falls back to pixel MSE on a 4x downsampled pair.
class PerceptualExtractor {
 public:
  virtual ~PerceptualExtractor() = default;
  virtual double loss_and_grad(const Image& stylized, const Image& content,
                               Image* d_stylized) const = 0;
};

// 1 - cos(e_out - e_src_img, e_sty_txt - e_src_txt); 1 when either
// difference has near-zero norm.
double directional_loss(const perception::Embedding& e_out,
                        const perception::Embedding& e_src_img,
                        const perception::Embedding& e_sty_txt,
                        const perception::Embedding& e_src_txt);
// Gradient of directional_loss w.r.t. e_out (zero in the degenerate case).
std::vector<double> directional_loss_grad(const perception::Embedding& e_out,
                                          const perception::Embedding& e_src_img,
                                          const perception::Embedding& e_sty_txt,
                                          const perception::Embedding& e_src_txt);

struct PatchBox {
  int x = 0;
  int y = 0;
};

// The n random patch positions for one evaluation; a pure function of the
// seed, independent of the gating threshold.
std::vector<PatchBox> sample_patch_boxes(int n, int img_h, int img_w, int patch_size,
                                         uint64_t seed);

struct PatchLossResult {
  double value = 0.0;
  int patches_used = 0;
};

// Mask-gated patchwise directional loss. Boxes whose mean mask value falls
// below the gate are dropped; kept patches are perspective-augmented and
// scored against the same-location content patch embedding (resize-only,
// so it can be precomputed per box). With reject_tau set, patches already
// below it contribute zero but stay in the denominator.
PatchLossResult patch_loss(const Image& stylized, const Image& content, const Mask& mask,
                           const perception::Embedding& e_sty_txt,
                           const perception::Embedding& e_src_txt,
                           const StyleConfig& cfg, const perception::Backend& backend,
                           uint64_t seed, Image* d_stylized = nullptr);

// Feature-space MSE via the extractor when given, else pixel MSE on a 4x
// box-downsampled pair.
double content_loss(const Image& stylized, const Image& content,
                    const PerceptualExtractor* extractor = nullptr,
                    Image* d_stylized = nullptr);

// Mean over channels of (mean squared horizontal + mean squared vertical
// forward differences).
double tv_loss(const Image& image, Image* d_image = nullptr);

// Mean over pixels and channels of (1 - M) * (stylized - content)^2.
double mask_loss(const Image& stylized, const Image& content, const Mask& mask,
                 Image* d_stylized = nullptr);

struct TotalLossInputs {
  const Image& stylized;
  const Image& content;
  const Mask& mask;
  const instruction::ParsedInstruction& parsed;
  const StyleConfig& cfg;
  const perception::Backend& backend;
  uint64_t seed = 0;  // per-step randomness for patch sampling
  const PerceptualExtractor* extractor = nullptr;
};

// All five terms of the objective and their weighted sum; when d_stylized
// is non-null, also the analytic gradient of the total w.r.t. the stylized
// pixels. Text and content-image embeddings may be passed in to avoid
// recomputation across steps.
struct CachedEmbeddings {
  perception::Embedding e_sty_txt;
  perception::Embedding e_src_txt;
  perception::Embedding e_src_img;
};

CachedEmbeddings compute_cached_embeddings(const Image& content,
                                           const instruction::ParsedInstruction& parsed,
                                           const StyleConfig& cfg,
                                           const perception::Backend& backend);

LossBreakdown total_loss(const TotalLossInputs& in, const CachedEmbeddings& cached,
                         Image* d_stylized = nullptr);

}  // namespace soulstyle::losses
