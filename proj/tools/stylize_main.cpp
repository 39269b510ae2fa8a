#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "soulstyle/errors.hpp"
#include "soulstyle/pipeline.hpp"

namespace {

int run(int argc, char** argv) {
  CLI::App app{"Text-guided, object-localized image stylization"};

  std::string image_path, instruction_text, batch_path, eval_corpus_path;
  std::optional<std::string> mask_path, out_path, config_path;
  soulstyle::pipeline::CliOverrides overrides;

  app.add_option("--image", image_path, "Content image (PNG/JPEG)");
  app.add_option("--text", instruction_text, "Stylization instruction");
  app.add_option("--mask", mask_path, "Grayscale mask PNG (255 = target)");
  app.add_option("--out", out_path, "Output PNG path");
  app.add_option("--threshold", overrides.threshold, "Stylization threshold t");
  app.add_option("--iterations", overrides.iterations, "Optimization steps");
  app.add_option("--seed", overrides.seed, "Random seed");
  app.add_option("--backend", overrides.backend_kind, "Encoder backend: mock|real");
  app.add_option("--weights", overrides.weights_path, "Weights file for the real backend");
  app.add_option("--llm-endpoint", overrides.llm_endpoint, "Chat-completion base URL");
  app.add_option("--llm-model", overrides.llm_model, "Model id for the LLM endpoint");
  app.add_option("--composite", overrides.composite, "Mask composite: off|soft|hard");
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--jobs", overrides.jobs, "Batch parallelism");
  app.add_option("--batch", batch_path, "JSON-lines manifest; run every entry");
  app.add_option("--eval-corpus", eval_corpus_path,
                 "Evaluate the instruction parser on a JSON-lines gold corpus");

  CLI11_PARSE(app, argc, argv);

  using namespace soulstyle;
  const auto config = pipeline::load_config(config_path, overrides);

  if (!eval_corpus_path.empty()) {
    const auto corpus = instruction::load_corpus(eval_corpus_path);
    instruction::ParserFn parser;
    if (config.llm && !config.llm->base_url.empty()) {
      parser = [&](const instruction::RawInstruction& raw)
          -> std::optional<instruction::ParsedInstruction> {
        try {
          return instruction::parse_llm_response(
              llm::query_llm(*config.llm, instruction::build_prompt(raw)));
        } catch (const Error&) {
          return std::nullopt;
        }
      };
    } else {
      parser = [](const instruction::RawInstruction& raw)
          -> std::optional<instruction::ParsedInstruction> {
        try {
          return instruction::fallback_split(raw);
        } catch (const Error&) {
          return std::nullopt;
        }
      };
    }
    const auto report = instruction::evaluate_corpus(corpus, parser);
    for (const auto& item : report.per_item)
      std::printf("%s  %s\n", item.matched ? "match " : "MISS  ", item.instruction.c_str());
    std::printf("exact matches: %zu/%zu (accuracy %.3f)\n", report.exact_matches,
                report.total, report.accuracy);
    return 0;
  }

  if (!batch_path.empty()) {
    const auto result = pipeline::run_batch(batch_path, config);
    for (const auto& r : result.reports)
      std::printf("ok    %s (%.1fs, total loss %.4f)\n", r.output_path.c_str(),
                  r.wall_time_sec, r.final_loss.total);
    for (const auto& f : result.failures)
      std::printf("fail  line %zu %s: %s\n", f.line, f.image_path.c_str(), f.error.c_str());
    std::printf("%zu succeeded, %zu failed\n", result.reports.size(), result.failures.size());
    return 0;
  }

  if (image_path.empty() || instruction_text.empty())
    throw ConfigError("either --image and --text, or --batch, or --eval-corpus is required");

  pipeline::RunManifest manifest{image_path, instruction_text, mask_path, out_path,
                                 nlohmann::json::object()};
  const auto report = pipeline::run_stylize(manifest, config);
  std::printf("parsed (%s): content=\"%s\" objects=\"%s\"\n", report.parser_used.c_str(),
              report.parsed.stylized_content.c_str(), report.parsed.stylized_objects.c_str());
  std::printf("mask: %s\n", report.mask_provider_used.c_str());
  std::printf("wrote %s (%.1fs, final total loss %.4f)\n", report.output_path.c_str(),
              report.wall_time_sec, report.final_loss.total);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const soulstyle::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
