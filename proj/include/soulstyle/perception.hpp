#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "soulstyle/tensor.hpp"

namespace soulstyle::perception {

// Unit-norm semantic vector from a text or image encoder.
struct Embedding {
  std::vector<double> values;

  double dot(const Embedding& o) const;
  double norm() const;
};

enum class BackendKind { mock, real };

struct BackendDescriptor {
  BackendKind kind = BackendKind::mock;
  int dim = 512;
  std::optional<std::string> weights_path;  // required for kind == real
  uint64_t seed = 0;                        // mock only
};

// Text/image encoder pair with a shared embedding dimension. Immutable
// after construction; encode calls are safe from concurrent callers.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual int dim() const = 0;
  // Square side length patches are resized to before encoding.
  virtual int input_resolution() const = 0;
  virtual Embedding encode_text(const std::string& text) const = 0;
  virtual Embedding encode_image(const Image& image) const = 0;
  // Pulls a gradient w.r.t. the embedding back to a gradient w.r.t. the
  // input pixels. The encode map is smooth (linear projection + normalize),
  // so this is exact.
  virtual Image encode_image_backward(const Image& image,
                                      const std::vector<double>& d_embedding) const = 0;
};

// Deterministic stand-in for a CLIP-style encoder: texts hash to seeded
// pseudo-random unit vectors; images are bilinearly downsampled to 16x16,
// flattened channel-major and pushed through a fixed seeded normal matrix,
// then normalized. A zero pre-normalization vector maps to the first basis
// vector.
class MockBackend : public Backend {
 public:
  MockBackend(int dim, uint64_t seed);
  int dim() const override { return dim_; }
  int input_resolution() const override { return 32; }
  Embedding encode_text(const std::string& text) const override;
  Embedding encode_image(const Image& image) const override;
  Image encode_image_backward(const Image& image,
                              const std::vector<double>& d_embedding) const override;

  static constexpr int kDownsample = 16;

 private:
  int dim_;
  uint64_t seed_;
  std::vector<double> projection_;  // dim x (3*16*16), row-major
};

// File-backed encoder with the same structure as the mock: a stored image
// projection matrix plus a token-embedding vocabulary averaged per word.
// See save_checkpoint for the on-disk layout.
class CheckpointBackend : public Backend {
 public:
  explicit CheckpointBackend(const std::string& weights_path);
  int dim() const override { return dim_; }
  int input_resolution() const override { return input_resolution_; }
  Embedding encode_text(const std::string& text) const override;
  Embedding encode_image(const Image& image) const override;
  Image encode_image_backward(const Image& image,
                              const std::vector<double>& d_embedding) const override;

  struct Checkpoint {
    int dim = 512;
    int input_resolution = 32;
    std::vector<double> projection;  // dim x 768
    std::vector<std::pair<std::string, std::vector<double>>> vocab;
  };
  static void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

 private:
  int dim_;
  int input_resolution_;
  std::vector<double> projection_;
  std::vector<std::pair<std::string, std::vector<double>>> vocab_;
};

std::unique_ptr<Backend> make_backend(const BackendDescriptor& desc);

// Homography used by augment_patch for a given (patch size, strength,
// seed); maps output pixel coordinates to input coordinates. Exposed so
// loss gradients can run the warp adjoint.
std::array<double, 9> augment_homography(int height, int width, double strength,
                                         uint64_t seed);

// Random perspective warp (corner displacement bounded by strength *
// side/2) followed by a bilinear resize to `out_resolution`. Deterministic
// per seed; strength 0 is resize-only.
Image augment_patch(const Image& patch, double strength, uint64_t seed, int out_resolution);

}  // namespace soulstyle::perception
