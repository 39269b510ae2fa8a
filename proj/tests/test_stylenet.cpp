#include <doctest.h>

#include <cmath>

#include "soulstyle/perception.hpp"
#include "soulstyle/rng.hpp"
#include "soulstyle/stylenet.hpp"

using namespace soulstyle;
using namespace soulstyle::stylenet;

namespace {

Image random_image(int h, int w, uint64_t seed) {
  Image img(3, h, w);
  for (size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = rng::uniform01(rng::mix(seed, i));
  return img;
}

losses::StyleConfig tiny_config() {
  losses::StyleConfig cfg;
  cfg.patch_size = 16;
  cfg.n_patches = 4;
  cfg.iterations = 3;
  cfg.lr = 1e-3;
  return cfg;
}

}  // namespace

TEST_CASE("zero head makes the initial network the identity") {
  const StyleNetParams params = init_params(0);
  const Image img = random_image(32, 24, 1);
  const Image out = forward(params, img);
  REQUIRE(out.same_shape(img));
  for (size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(out.data[i] - img.data[i]) <= 1e-3);
}

TEST_CASE("init is deterministic per seed and differs across seeds") {
  const StyleNetParams a = init_params(7);
  const StyleNetParams b = init_params(7);
  const StyleNetParams c = init_params(8);
  CHECK(a.down1.weights == b.down1.weights);
  CHECK(a.res_b[2].weights == b.res_b[2].weights);
  CHECK(a.down1.weights != c.down1.weights);
  // head starts at zero for every seed
  for (double w : a.head.weights) CHECK(w == 0.0);
  for (double w : c.head.weights) CHECK(w == 0.0);
}

TEST_CASE("forward output is clamped to [0,1] and keeps the input shape") {
  StyleNetParams params = init_params(3);
  // inflate the head so the residual actually pushes values out of range
  for (size_t i = 0; i < params.head.weights.size(); ++i)
    params.head.weights[i] = rng::normal(rng::mix(4, i)) * 0.5;
  const Image img = random_image(16, 16, 2);
  const Image out = forward(params, img);
  CHECK(out.same_shape(img));
  for (double v : out.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("forward rejects sizes not divisible by 8") {
  const StyleNetParams params = init_params(0);
  CHECK_THROWS_AS(forward(params, random_image(30, 32, 1)), InvalidInput);
  CHECK_THROWS_AS(forward(params, random_image(32, 33, 1)), InvalidInput);
}

TEST_CASE("forward is deterministic") {
  const StyleNetParams params = init_params(11);
  const Image img = random_image(24, 24, 5);
  CHECK(forward(params, img).data == forward(params, img).data);
}

TEST_CASE("backward matches finite differences on sampled parameters") {
  StyleNetParams params = init_params(13);
  // give the head nonzero weights so its gradient path is exercised and the
  // output is not sitting exactly on the clamp boundary
  for (size_t i = 0; i < params.head.weights.size(); ++i)
    params.head.weights[i] = rng::normal(rng::mix(14, i)) * 0.05;
  Image img = random_image(16, 16, 6);
  for (double& v : img.data) v = 0.25 + v * 0.5;

  // scalar probe: L = sum_k w_k out_k
  std::vector<double> w(static_cast<size_t>(3) * 16 * 16);
  for (size_t i = 0; i < w.size(); ++i) w[i] = rng::normal(rng::mix(15, i));
  auto probe = [&](const StyleNetParams& p) {
    const Image out = forward(p, img);
    double acc = 0.0;
    for (size_t i = 0; i < out.data.size(); ++i) acc += w[i] * out.data[i];
    return acc;
  };
  Image d_out(3, 16, 16);
  d_out.data = w;
  const StyleNetParams grads = backward(params, img, d_out);

  const double eps = 1e-6;
  auto check_param = [&](double* param, double grad) {
    const double orig = *param;
    *param = orig + eps;
    const double hi = probe(params);
    *param = orig - eps;
    const double lo = probe(params);
    *param = orig;
    const double fd = (hi - lo) / (2 * eps);
    CHECK(grad == doctest::Approx(fd).epsilon(1e-3).scale(std::max(1.0, std::abs(fd))));
  };

  check_param(&params.down1.weights[0], grads.down1.weights[0]);
  check_param(&params.down1.bias[2], grads.down1.bias[2]);
  check_param(&params.down3.weights[100], grads.down3.weights[100]);
  check_param(&params.res_a[1].weights[500], grads.res_a[1].weights[500]);
  check_param(&params.res_b[2].bias[10], grads.res_b[2].bias[10]);
  check_param(&params.up2.weights[33], grads.up2.weights[33]);
  check_param(&params.head.weights[7], grads.head.weights[7]);
  check_param(&params.head.bias[1], grads.head.bias[1]);
}

TEST_CASE("composite blends by the mask") {
  const Image a(3, 2, 2, 1.0);
  const Image b(3, 2, 2, 0.0);
  Mask m(2, 2);
  m.at(0, 0) = 1.0;
  m.at(0, 1) = 0.25;
  const Image soft = composite(a, b, m, false);
  CHECK(soft.at(0, 0, 0) == 1.0);
  CHECK(soft.at(1, 0, 1) == doctest::Approx(0.25));
  CHECK(soft.at(2, 1, 1) == 0.0);

  // hard mode binarizes at 0.5 first
  const Image hard = composite(a, b, m, true);
  CHECK(hard.at(1, 0, 1) == 0.0);
  CHECK(hard.at(0, 0, 0) == 1.0);

  // full mask returns the stylized image unchanged; compositing twice is stable
  const Image full = composite(a, b, Mask(2, 2, 1.0), false);
  CHECK(full.data == a.data);
  const Image again = composite(soft, b, m, false);
  // blending the blend moves further toward the content except where m is 0 or 1
  CHECK(again.at(1, 0, 1) == doctest::Approx(0.25 * 0.25));
}

TEST_CASE("optimize with zero iterations returns the identity-initialized output") {
  perception::MockBackend backend(16, 1);
  const Image content = random_image(24, 24, 9);
  losses::StyleConfig cfg = tiny_config();
  cfg.iterations = 0;
  const auto [out, state] = optimize(content, {"mosaic", "the cup"}, Mask(24, 24, 1.0), cfg,
                                     backend);
  CHECK(state.step == 0);
  CHECK(state.loss_history.empty());
  REQUIRE(out.same_shape(content));
  for (size_t i = 0; i < out.data.size(); ++i)
    CHECK(std::abs(out.data[i] - content.data[i]) <= 1e-3);
}

TEST_CASE("optimize reduces the loss on a small problem") {
  perception::MockBackend backend(32, 2);
  const Image content = random_image(32, 32, 10);
  losses::StyleConfig cfg = tiny_config();
  cfg.iterations = 25;
  cfg.lr = 2e-3;
  const auto [out, state] = optimize(content, {"stained glass", "the window"},
                                     Mask(32, 32, 1.0), cfg, backend);
  REQUIRE(state.loss_history.size() == 25);
  const double first = state.loss_history.front().total;
  const double last = state.loss_history.back().total;
  CHECK(last < first);
  for (const auto& b : state.loss_history) CHECK(std::isfinite(b.total));
}

TEST_CASE("optimize is deterministic: identical pixels and loss histories") {
  perception::MockBackend backend(16, 3);
  const Image content = random_image(24, 24, 11);
  const Mask m(24, 24, 1.0);
  losses::StyleConfig cfg = tiny_config();
  cfg.iterations = 5;
  const auto [out1, s1] = optimize(content, {"charcoal", "the hat"}, m, cfg, backend);
  const auto [out2, s2] = optimize(content, {"charcoal", "the hat"}, m, cfg, backend);
  CHECK(out1.data == out2.data);
  REQUIRE(s1.loss_history.size() == s2.loss_history.size());
  for (size_t i = 0; i < s1.loss_history.size(); ++i) {
    CHECK(s1.loss_history[i].total == s2.loss_history[i].total);
    CHECK(s1.loss_history[i].patches_used == s2.loss_history[i].patches_used);
  }

  losses::StyleConfig other = cfg;
  other.seed = 99;
  const auto [out3, s3] = optimize(content, {"charcoal", "the hat"}, m, other, backend);
  CHECK(out3.data != out1.data);
}

TEST_CASE("optimize handles sizes that need padding and crops back") {
  perception::MockBackend backend(16, 4);
  const Image content = random_image(21, 27, 12);
  losses::StyleConfig cfg = tiny_config();
  cfg.patch_size = 12;
  cfg.iterations = 2;
  const auto [out, state] = optimize(content, {"pixel art", "the car"}, Mask(21, 27, 1.0),
                                     cfg, backend);
  CHECK(out.height == 21);
  CHECK(out.width == 27);
  for (double v : out.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("optimize applies the learning-rate decay schedule") {
  perception::MockBackend backend(16, 5);
  const Image content = random_image(16, 16, 13);
  losses::StyleConfig cfg = tiny_config();
  cfg.patch_size = 8;
  cfg.iterations = 4;
  cfg.lr_decay_step = 2;
  const auto [out, state] =
      optimize(content, {"ink wash", "the bird"}, Mask(16, 16, 1.0), cfg, backend);
  // the state carries the lr used on the last step: the decayed value
  CHECK(state.lr == doctest::Approx(cfg.lr * cfg.lr_decay_factor));
}

TEST_CASE("optimize validates its inputs") {
  perception::MockBackend backend(16, 6);
  const Image content = random_image(16, 16, 14);
  losses::StyleConfig cfg = tiny_config();
  CHECK_THROWS_AS(optimize(content, {"a", "b"}, Mask(8, 8, 1.0), cfg, backend),
                  InvalidInput);
  losses::StyleConfig bad = cfg;
  bad.threshold = -1.0;
  CHECK_THROWS_AS(optimize(content, {"a", "b"}, Mask(16, 16, 1.0), bad, backend),
                  ConfigError);
}
