#include "soulstyle/perception.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "soulstyle/kernels.hpp"
#include "soulstyle/rng.hpp"

namespace soulstyle::perception {

namespace {

constexpr int kFeatureLen = 3 * MockBackend::kDownsample * MockBackend::kDownsample;  // 768

void normalize_or_basis(std::vector<double>& v) {
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  const double norm = std::sqrt(norm2);
  if (norm < 1e-12) {
    std::fill(v.begin(), v.end(), 0.0);
    if (!v.empty()) v[0] = 1.0;
    return;
  }
  for (double& x : v) x /= norm;
}

// Shared by mock and checkpoint backends: 16x16 bilinear downsample,
// channel-major flatten, linear projection, normalize.
Embedding project_image(const Image& image, const std::vector<double>& projection, int dim) {
  require_valid_pixels(image, "encode_image");
  const Image small = kernels::bilinear_resize(image, MockBackend::kDownsample,
                                               MockBackend::kDownsample);
  Embedding e;
  e.values.assign(dim, 0.0);
  for (int d = 0; d < dim; ++d) {
    double acc = 0.0;
    const double* row = &projection[static_cast<size_t>(d) * kFeatureLen];
    for (int k = 0; k < kFeatureLen; ++k) acc += row[k] * small.data[k];
    e.values[d] = acc;
  }
  normalize_or_basis(e.values);
  return e;
}

Image project_image_backward(const Image& image, const std::vector<double>& projection,
                             int dim, const std::vector<double>& d_embedding) {
  const Image small = kernels::bilinear_resize(image, MockBackend::kDownsample,
                                               MockBackend::kDownsample);
  std::vector<double> y(dim, 0.0);
  for (int d = 0; d < dim; ++d) {
    const double* row = &projection[static_cast<size_t>(d) * kFeatureLen];
    for (int k = 0; k < kFeatureLen; ++k) y[d] += row[k] * small.data[k];
  }
  const double norm = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
  Image d_small(3, MockBackend::kDownsample, MockBackend::kDownsample);
  if (norm >= 1e-12) {
    // e = y/|y|; dL/dy = (g - e (e.g)) / |y|
    std::vector<double> e(dim);
    for (int d = 0; d < dim; ++d) e[d] = y[d] / norm;
    double eg = 0.0;
    for (int d = 0; d < dim; ++d) eg += e[d] * d_embedding[d];
    for (int d = 0; d < dim; ++d) {
      const double dy = (d_embedding[d] - e[d] * eg) / norm;
      const double* row = &projection[static_cast<size_t>(d) * kFeatureLen];
      for (int k = 0; k < kFeatureLen; ++k) d_small.data[k] += row[k] * dy;
    }
  }
  return kernels::bilinear_resize_backward(image.height, image.width, 3, d_small);
}

}  // namespace

double Embedding::dot(const Embedding& o) const {
  return std::inner_product(values.begin(), values.end(), o.values.begin(), 0.0);
}

double Embedding::norm() const { return std::sqrt(dot(*this)); }

MockBackend::MockBackend(int dim, uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim <= 0) throw InvalidInput("backend dim must be positive");
  projection_.resize(static_cast<size_t>(dim) * kFeatureLen);
  const uint64_t base = rng::mix(seed, rng::kImageTag);
  for (size_t i = 0; i < projection_.size(); ++i)
    projection_[i] = rng::normal(rng::mix(base, i));
}

Embedding MockBackend::encode_text(const std::string& text) const {
  if (text.empty()) throw InvalidInput("encode_text: empty text");
  const uint64_t base = rng::mix(rng::mix(seed_, rng::kTextTag), rng::fnv1a64(text));
  Embedding e;
  e.values.resize(dim_);
  for (int i = 0; i < dim_; ++i) e.values[i] = rng::normal(rng::mix(base, i));
  normalize_or_basis(e.values);
  return e;
}

Embedding MockBackend::encode_image(const Image& image) const {
  return project_image(image, projection_, dim_);
}

Image MockBackend::encode_image_backward(const Image& image,
                                         const std::vector<double>& d_embedding) const {
  return project_image_backward(image, projection_, dim_, d_embedding);
}

// ---------------------------------------------------------------------------
// checkpoint backend
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'S', 'S', 'B', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

std::vector<std::string> tokenize_lower(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}
}  // namespace

void CheckpointBackend::save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod<int32_t>(out, ckpt.dim);
  write_pod<int32_t>(out, ckpt.input_resolution);
  out.write(reinterpret_cast<const char*>(ckpt.projection.data()),
            static_cast<std::streamsize>(ckpt.projection.size() * sizeof(double)));
  write_pod<int32_t>(out, static_cast<int32_t>(ckpt.vocab.size()));
  for (const auto& [word, vec] : ckpt.vocab) {
    write_pod<int32_t>(out, static_cast<int32_t>(word.size()));
    out.write(word.data(), static_cast<std::streamsize>(word.size()));
    out.write(reinterpret_cast<const char*>(vec.data()),
              static_cast<std::streamsize>(vec.size() * sizeof(double)));
  }
}

CheckpointBackend::CheckpointBackend(const std::string& weights_path) {
  std::ifstream in(weights_path, std::ios::binary);
  if (!in) throw BackendError("checkpoint backend: cannot open weights at " + weights_path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw BackendError("checkpoint backend: bad magic in " + weights_path);
  dim_ = read_pod<int32_t>(in);
  input_resolution_ = read_pod<int32_t>(in);
  if (dim_ <= 0 || input_resolution_ < 8)
    throw BackendError("checkpoint backend: corrupt header in " + weights_path);
  projection_.resize(static_cast<size_t>(dim_) * kFeatureLen);
  in.read(reinterpret_cast<char*>(projection_.data()),
          static_cast<std::streamsize>(projection_.size() * sizeof(double)));
  const int32_t vocab_size = read_pod<int32_t>(in);
  for (int32_t i = 0; i < vocab_size; ++i) {
    const int32_t len = read_pod<int32_t>(in);
    std::string word(static_cast<size_t>(len), '\0');
    in.read(word.data(), len);
    std::vector<double> vec(dim_);
    in.read(reinterpret_cast<char*>(vec.data()),
            static_cast<std::streamsize>(vec.size() * sizeof(double)));
    vocab_.emplace_back(std::move(word), std::move(vec));
  }
  if (!in) throw BackendError("checkpoint backend: truncated file " + weights_path);
}

Embedding CheckpointBackend::encode_text(const std::string& text) const {
  if (text.empty()) throw InvalidInput("encode_text: empty text");
  Embedding e;
  e.values.assign(dim_, 0.0);
  for (const auto& token : tokenize_lower(text)) {
    const std::vector<double>* vec = nullptr;
    for (const auto& [word, v] : vocab_)
      if (word == token) {
        vec = &v;
        break;
      }
    if (vec) {
      for (int i = 0; i < dim_; ++i) e.values[i] += (*vec)[i];
    } else {
      // out-of-vocabulary word: deterministic hashed vector
      const uint64_t base = rng::mix(rng::kTextTag, rng::fnv1a64(token));
      for (int i = 0; i < dim_; ++i) e.values[i] += rng::normal(rng::mix(base, i));
    }
  }
  normalize_or_basis(e.values);
  return e;
}

Embedding CheckpointBackend::encode_image(const Image& image) const {
  return project_image(image, projection_, dim_);
}

Image CheckpointBackend::encode_image_backward(const Image& image,
                                               const std::vector<double>& d_embedding) const {
  return project_image_backward(image, projection_, dim_, d_embedding);
}

std::unique_ptr<Backend> make_backend(const BackendDescriptor& desc) {
  if (desc.dim <= 0) throw InvalidInput("backend dim must be positive");
  switch (desc.kind) {
    case BackendKind::mock:
      return std::make_unique<MockBackend>(desc.dim, desc.seed);
    case BackendKind::real:
      if (!desc.weights_path)
        throw BackendError("real backend requires a weights path");
      return std::make_unique<CheckpointBackend>(*desc.weights_path);
  }
  throw InvalidInput("unknown backend kind");
}

// ---------------------------------------------------------------------------
// patch augmentation
// ---------------------------------------------------------------------------

std::array<double, 9> augment_homography(int height, int width, double strength,
                                         uint64_t seed) {
  const double w1 = width - 1.0, h1 = height - 1.0;
  const std::array<double, 8> out_corners = {0, 0, w1, 0, w1, h1, 0, h1};
  std::array<double, 8> in_corners = out_corners;
  const double dx_max = strength * width / 2.0;
  const double dy_max = strength * height / 2.0;
  for (int j = 0; j < 4; ++j) {
    in_corners[2 * j] += (2.0 * rng::uniform01(rng::mix(seed, 2 * j)) - 1.0) * dx_max;
    in_corners[2 * j + 1] += (2.0 * rng::uniform01(rng::mix(seed, 2 * j + 1)) - 1.0) * dy_max;
  }
  return kernels::solve_homography(out_corners, in_corners);
}

Image augment_patch(const Image& patch, double strength, uint64_t seed, int out_resolution) {
  if (patch.height < 8 || patch.width < 8)
    throw InvalidInput("augment_patch: patch smaller than 8x8");
  if (strength < 0.0 || strength > 1.0)
    throw InvalidInput("augment_patch: strength outside [0,1]");
  if (strength == 0.0) return kernels::bilinear_resize(patch, out_resolution, out_resolution);
  const auto h = augment_homography(patch.height, patch.width, strength, seed);
  const Image warped = kernels::perspective_warp(patch, h, patch.height, patch.width);
  return kernels::bilinear_resize(warped, out_resolution, out_resolution);
}

}  // namespace soulstyle::perception
