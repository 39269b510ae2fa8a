#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "soulstyle/imageio.hpp"
#include "soulstyle/pipeline.hpp"
#include "soulstyle/rng.hpp"

using namespace soulstyle;
using namespace soulstyle::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("soulstyle_pipe_" + std::to_string(rng::splitmix64(
                                    std::chrono::steady_clock::now().time_since_epoch().count())));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Image random_image(int h, int w, uint64_t seed) {
  Image img(3, h, w);
  for (size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = rng::uniform01(rng::mix(seed, i));
  return img;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// small fast setup shared by the end-to-end cases
PipelineConfig fast_config() {
  PipelineConfig cfg;
  cfg.style.iterations = 2;
  cfg.style.patch_size = 8;
  cfg.style.n_patches = 4;
  cfg.backend.dim = 16;
  cfg.synthetic_mask = segmentation::ShapeSpec{segmentation::ShapeKind::rect, 0.25, 0.5,
                                               0.5, 1.0};
  return cfg;
}

}  // namespace

TEST_CASE("load_config defaults") {
  const auto cfg = load_config(std::nullopt, {});
  CHECK(cfg.style.threshold == 0.7);
  CHECK(cfg.style.lambda_dir == 500.0);
  CHECK(cfg.style.lambda_patch == 9000.0);
  CHECK(cfg.style.lambda_content == 150.0);
  CHECK(cfg.style.lambda_tv == 2e-3);
  CHECK(cfg.style.lambda_mask == 1000.0);
  CHECK(cfg.style.iterations == 200);
  CHECK(cfg.style.source_text == "a Photo");
  CHECK(cfg.backend.kind == perception::BackendKind::mock);
  CHECK(cfg.composite == CompositeMode::off);
  CHECK(cfg.jobs == 1);
}

TEST_CASE("config precedence: CLI beats file beats defaults") {
  TempDir dir;
  const auto path = dir.file("cfg.json");
  write_text(path, R"({"threshold": 0.4, "iterations": 50, "lambda_d": 123.0})");

  const auto file_only = load_config(path, {});
  CHECK(file_only.style.threshold == 0.4);
  CHECK(file_only.style.iterations == 50);
  CHECK(file_only.style.lambda_dir == 123.0);
  CHECK(file_only.style.lambda_patch == 9000.0);  // untouched default

  CliOverrides cli;
  cli.threshold = 0.9;
  const auto merged = load_config(path, cli);
  CHECK(merged.style.threshold == 0.9);    // CLI wins
  CHECK(merged.style.iterations == 50);    // file survives
  CHECK(merged.style.lambda_dir == 123.0);
}

TEST_CASE("unknown config keys are named in the error") {
  TempDir dir;
  const auto path = dir.file("bad.json");
  write_text(path, R"({"lamda_d": 1.0})");
  CHECK_THROWS_WITH_AS(load_config(path, {}), doctest::Contains("lamda_d"), ConfigError);

  write_text(path, R"({"backend": {"kindd": "mock"}})");
  CHECK_THROWS_WITH_AS(load_config(path, {}), doctest::Contains("backend.kindd"), ConfigError);
}

TEST_CASE("config rejects invalid values") {
  TempDir dir;
  const auto path = dir.file("bad.json");
  write_text(path, R"({"threshold": 2.0})");
  CHECK_THROWS_AS(load_config(path, {}), ConfigError);
  write_text(path, "not json at all");
  CHECK_THROWS_AS(load_config(path, {}), ConfigError);
  write_text(path, R"({"threshold": "high"})");
  CHECK_THROWS_WITH_AS(load_config(path, {}), doctest::Contains("threshold"), ConfigError);

  CliOverrides cli;
  cli.backend_kind = "gpu";
  CHECK_THROWS_AS(load_config(std::nullopt, cli), ConfigError);
  cli = {};
  cli.backend_kind = "real";  // real backend needs a weights path
  CHECK_THROWS_AS(load_config(std::nullopt, cli), ConfigError);
}

TEST_CASE("exit codes map one kind of failure each") {
  CHECK(static_cast<int>(ConfigError("x").code()) == 1);
  CHECK(static_cast<int>(InvalidInput("x").code()) == 1);
  CHECK(static_cast<int>(IoError("x").code()) == 2);
  CHECK(static_cast<int>(ParseError("x").code()) == 3);
  CHECK(static_cast<int>(BackendError("x").code()) == 4);
  CHECK(static_cast<int>(NumericError("x").code()) == 5);
}

TEST_CASE("run_stylize end to end with a synthetic mask") {
  TempDir dir;
  const auto img_path = dir.file("cat.png");
  imageio::save_image(img_path, random_image(24, 24, 1));

  RunManifest m;
  m.image_path = img_path;
  m.instruction_text = "turn the cat to a watercolor painting";
  m.output_path = dir.file("out.png");

  const auto report = run_stylize(m, fast_config());
  CHECK(report.parser_used == "fallback");
  CHECK(report.mask_provider_used == "synthetic");
  CHECK(report.parsed.stylized_content == "a watercolor painting");
  CHECK(report.parsed.stylized_objects == "the cat");
  CHECK(report.loss_history.size() == 2);
  CHECK(report.output_path == dir.file("out.png"));
  CHECK(fs::exists(dir.file("out.png")));

  const Image out = imageio::load_image(dir.file("out.png"));
  CHECK(out.height == 24);
  CHECK(out.width == 24);

  // the report lands next to the output and round-trips
  const auto rep_path = dir.file("out.png") + ".report.json";
  REQUIRE(fs::exists(rep_path));
  std::ifstream in(rep_path);
  const auto j = nlohmann::json::parse(in);
  const auto back = RunReport::from_json(j);
  CHECK(back.parsed == report.parsed);
  CHECK(back.final_loss.total == doctest::Approx(report.final_loss.total));
  CHECK(back.loss_history.size() == report.loss_history.size());
}

TEST_CASE("run_stylize default output path derives from the image name") {
  TempDir dir;
  const auto img_path = dir.file("scene.png");
  imageio::save_image(img_path, random_image(16, 16, 2));
  RunManifest m;
  m.image_path = img_path;
  m.instruction_text = "turn the tree to a mosaic";
  const auto report = run_stylize(m, fast_config());
  CHECK(report.output_path == dir.file("scene.stylized.png"));
  CHECK(fs::exists(report.output_path));
}

TEST_CASE("run_stylize prefers a file mask over the synthetic one") {
  TempDir dir;
  const auto img_path = dir.file("dog.png");
  imageio::save_image(img_path, random_image(16, 16, 3));
  const auto mask_path = dir.file("dog_mask.png");
  imageio::save_mask(mask_path, Mask(16, 16, 1.0));

  RunManifest m;
  m.image_path = img_path;
  m.instruction_text = "turn the dog to a sketch";
  m.mask_path = mask_path;
  m.output_path = dir.file("out.png");
  const auto report = run_stylize(m, fast_config());
  CHECK(report.mask_provider_used == "file");
}

TEST_CASE("run_stylize per-item overrides and failure modes") {
  TempDir dir;
  const auto img_path = dir.file("bird.png");
  imageio::save_image(img_path, random_image(16, 16, 4));

  RunManifest m;
  m.image_path = img_path;
  m.instruction_text = "turn the bird to an oil painting";
  m.output_path = dir.file("out.png");
  m.style_overrides = {{"iterations", 1}};
  const auto report = run_stylize(m, fast_config());
  CHECK(report.loss_history.size() == 1);

  m.style_overrides = {{"iterationz", 1}};
  CHECK_THROWS_WITH_AS(run_stylize(m, fast_config()), doctest::Contains("iterationz"),
                       ConfigError);
  m.style_overrides = nlohmann::json::object();

  m.image_path = dir.file("missing.png");
  CHECK_THROWS_AS(run_stylize(m, fast_config()), IoError);

  m.image_path = img_path;
  m.instruction_text = "do something nice";  // no pattern applies
  CHECK_THROWS_AS(run_stylize(m, fast_config()), ParseError);

  PipelineConfig no_mask = fast_config();
  no_mask.synthetic_mask.reset();
  m.instruction_text = "turn the bird to an oil painting";
  CHECK_THROWS_AS(run_stylize(m, no_mask), ConfigError);
}

TEST_CASE("manifest loading validates lines and keys") {
  TempDir dir;
  const auto path = dir.file("runs.jsonl");

  write_text(path, "");
  CHECK_THROWS_AS(load_manifests(path), ConfigError);

  write_text(path, R"({"image": "a.png", "instruction": "turn the cat to a sketch"})"
                   "\n\n"
                   R"({"image": "b.png", "instruction": "turn the dog to a mosaic", "out": "b_out.png"})"
                   "\n");
  const auto ms = load_manifests(path);
  REQUIRE(ms.size() == 2);
  CHECK(ms[0].image_path == "a.png");
  CHECK(!ms[0].output_path);
  CHECK(ms[1].output_path == "b_out.png");

  write_text(path, R"({"image": "a.png", "instruction": "x", "outt": "y"})");
  CHECK_THROWS_WITH_AS(load_manifests(path), doctest::Contains("outt"), ConfigError);

  write_text(path, R"({"instruction": "x"})");
  CHECK_THROWS_AS(load_manifests(path), ConfigError);

  CHECK_THROWS_AS(load_manifests(dir.file("nope.jsonl")), ConfigError);
}

TEST_CASE("batch runs isolate per-item failures") {
  TempDir dir;
  const auto good1 = dir.file("g1.png");
  const auto good2 = dir.file("g2.png");
  imageio::save_image(good1, random_image(16, 16, 5));
  imageio::save_image(good2, random_image(16, 16, 6));

  const auto manifest = dir.file("batch.jsonl");
  write_text(manifest,
             nlohmann::json{{"image", good1},
                            {"instruction", "turn the cup to a sketch"},
                            {"out", dir.file("o1.png")}}
                     .dump() +
                 "\n" +
                 nlohmann::json{{"image", dir.file("broken.png")},
                                {"instruction", "turn the cup to a sketch"},
                                {"out", dir.file("o2.png")}}
                     .dump() +
                 "\n" +
                 nlohmann::json{{"image", good2},
                                {"instruction", "turn the hat to a mosaic"},
                                {"out", dir.file("o3.png")}}
                     .dump() +
                 "\n");

  PipelineConfig cfg = fast_config();
  cfg.jobs = 2;
  const auto result = run_batch(manifest, cfg);
  CHECK(result.reports.size() == 2);
  REQUIRE(result.failures.size() == 1);
  CHECK(result.failures[0].line == 2);
  CHECK(result.failures[0].image_path == dir.file("broken.png"));
  CHECK(fs::exists(dir.file("o1.png")));
  CHECK(!fs::exists(dir.file("o2.png")));
  CHECK(fs::exists(dir.file("o3.png")));

  const auto agg_path = manifest + ".aggregate.json";
  REQUIRE(fs::exists(agg_path));
  std::ifstream in(agg_path);
  const auto agg = nlohmann::json::parse(in);
  CHECK(agg["total"] == 3);
  CHECK(agg["failed"] == 1);
  CHECK(agg["reports"].size() == 2);
}

TEST_CASE("batch output is deterministic regardless of job count") {
  TempDir dir;
  for (int i = 0; i < 3; ++i)
    imageio::save_image(dir.file("img" + std::to_string(i) + ".png"),
                        random_image(16, 16, 10 + i));

  auto make_manifest = [&](const std::string& tag) {
    const auto path = dir.file("batch_" + tag + ".jsonl");
    std::string body;
    for (int i = 0; i < 3; ++i)
      body += nlohmann::json{{"image", dir.file("img" + std::to_string(i) + ".png")},
                             {"instruction", "turn the boat to a sketch"},
                             {"out", dir.file(tag + "_" + std::to_string(i) + ".png")}}
                  .dump() +
              "\n";
    write_text(path, body);
    return path;
  };

  PipelineConfig serial = fast_config();
  serial.jobs = 1;
  PipelineConfig parallel = fast_config();
  parallel.jobs = 3;
  run_batch(make_manifest("a"), serial);
  run_batch(make_manifest("b"), parallel);
  for (int i = 0; i < 3; ++i) {
    const auto a = read_bytes(dir.file("a_" + std::to_string(i) + ".png"));
    const auto b = read_bytes(dir.file("b_" + std::to_string(i) + ".png"));
    CHECK(!a.empty());
    CHECK(a == b);
  }
}

TEST_CASE("composite modes blend the output with the content image") {
  TempDir dir;
  const auto img_path = dir.file("base.png");
  const Image content = random_image(16, 16, 20);
  imageio::save_image(img_path, content);

  auto run_mode = [&](CompositeMode mode, const std::string& name) {
    PipelineConfig cfg = fast_config();
    cfg.composite = mode;
    RunManifest m;
    m.image_path = img_path;
    m.instruction_text = "turn the lamp to a mosaic";
    m.output_path = dir.file(name);
    run_stylize(m, cfg);
    return imageio::load_image(dir.file(name));
  };

  const Image off = run_mode(CompositeMode::off, "off.png");
  const Image soft = run_mode(CompositeMode::soft, "soft.png");
  const Image reload = imageio::load_image(img_path);

  // with the left-half rect mask, composited output equals the content on the
  // right half and the raw stylization on the left
  for (int y = 0; y < 16; ++y)
    for (int x = 8; x < 16; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(soft.at(c, y, x) == doctest::Approx(reload.at(c, y, x)).epsilon(1e-9));
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(soft.at(c, y, x) == doctest::Approx(off.at(c, y, x)).epsilon(1e-9));
}
