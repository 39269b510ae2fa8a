#include "soulstyle/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "soulstyle/imageio.hpp"
#include "soulstyle/kernels.hpp"
#include "soulstyle/stylenet.hpp"

namespace soulstyle::pipeline {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

CompositeMode composite_from_string(const std::string& s) {
  if (s == "off") return CompositeMode::off;
  if (s == "soft") return CompositeMode::soft;
  if (s == "hard") return CompositeMode::hard;
  throw ConfigError("composite mode must be off, soft or hard, got '" + s + "'");
}

// Applies one StyleConfig key; returns false if the key is not a style key.
bool apply_style_key(losses::StyleConfig& style, const std::string& key, const json& value) {
  try {
    if (key == "lambda_d") style.lambda_dir = value.get<double>();
    else if (key == "lambda_p") style.lambda_patch = value.get<double>();
    else if (key == "lambda_c") style.lambda_content = value.get<double>();
    else if (key == "lambda_tv") style.lambda_tv = value.get<double>();
    else if (key == "lambda_m") style.lambda_mask = value.get<double>();
    else if (key == "t" || key == "threshold") style.threshold = value.get<double>();
    else if (key == "patch_size") style.patch_size = value.get<int>();
    else if (key == "n_patches") style.n_patches = value.get<int>();
    else if (key == "augment_strength") style.augment_strength = value.get<double>();
    else if (key == "reject_tau")
      style.reject_tau = value.is_null() ? std::nullopt : std::optional(value.get<double>());
    else if (key == "source_text") style.source_text = value.get<std::string>();
    else if (key == "iterations") style.iterations = value.get<int>();
    else if (key == "lr") style.lr = value.get<double>();
    else if (key == "lr_decay_step")
      style.lr_decay_step = value.is_null() ? std::nullopt : std::optional(value.get<int>());
    else if (key == "lr_decay_factor") style.lr_decay_factor = value.get<double>();
    else if (key == "seed") style.seed = value.get<uint64_t>();
    else if (key == "use_t_gating") style.use_t_gating = value.get<bool>();
    else if (key == "use_t_mask_weight") style.use_t_mask_weight = value.get<bool>();
    else if (key == "dir_on_composite") style.dir_on_composite = value.get<bool>();
    else if (key == "mask_binarize") style.mask_binarize = value.get<bool>();
    else return false;
  } catch (const json::exception& e) {
    throw ConfigError("bad value for config key '" + key + "': " + e.what());
  }
  return true;
}

void apply_style_overrides(losses::StyleConfig& style, const json& overrides) {
  if (!overrides.is_object())
    throw ConfigError("style overrides must be a JSON object");
  for (const auto& [key, value] : overrides.items())
    if (!apply_style_key(style, key, value))
      throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_file(PipelineConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must contain a JSON object");

  for (const auto& [key, value] : j.items()) {
    if (apply_style_key(cfg.style, key, value)) continue;
    try {
      if (key == "backend") {
        for (const auto& [bk, bv] : value.items()) {
          if (bk == "kind") {
            const auto s = bv.get<std::string>();
            if (s == "mock") cfg.backend.kind = perception::BackendKind::mock;
            else if (s == "real") cfg.backend.kind = perception::BackendKind::real;
            else throw ConfigError("backend kind must be mock or real, got '" + s + "'");
          } else if (bk == "dim") cfg.backend.dim = bv.get<int>();
          else if (bk == "weights_path") cfg.backend.weights_path = bv.get<std::string>();
          else if (bk == "seed") cfg.backend.seed = bv.get<uint64_t>();
          else throw ConfigError("unknown config key 'backend." + bk + "'");
        }
      } else if (key == "llm") {
        llm::EndpointConfig ep;
        for (const auto& [lk, lv] : value.items()) {
          if (lk == "base_url") ep.base_url = lv.get<std::string>();
          else if (lk == "model") ep.model = lv.get<std::string>();
          else if (lk == "path") ep.path = lv.get<std::string>();
          else if (lk == "temperature") ep.temperature = lv.get<double>();
          else if (lk == "max_tokens") ep.max_tokens = lv.get<int>();
          else if (lk == "max_retries") ep.max_retries = lv.get<int>();
          else throw ConfigError("unknown config key 'llm." + lk + "'");
        }
        cfg.llm = ep;
      } else if (key == "mask") {
        segmentation::ShapeSpec spec;
        for (const auto& [mk, mv] : value.items()) {
          if (mk == "shape") {
            const auto s = mv.get<std::string>();
            if (s == "rect") spec.shape = segmentation::ShapeKind::rect;
            else if (s == "ellipse") spec.shape = segmentation::ShapeKind::ellipse;
            else throw ConfigError("mask shape must be rect or ellipse, got '" + s + "'");
          } else if (mk == "cx") spec.cx = mv.get<double>();
          else if (mk == "cy") spec.cy = mv.get<double>();
          else if (mk == "w") spec.w = mv.get<double>();
          else if (mk == "h") spec.h = mv.get<double>();
          else throw ConfigError("unknown config key 'mask." + mk + "'");
        }
        cfg.synthetic_mask = spec;
      } else if (key == "mask_endpoint") {
        cfg.mask_endpoint = value.get<std::string>();
      } else if (key == "composite") {
        cfg.composite = composite_from_string(value.get<std::string>());
      } else if (key == "jobs") {
        cfg.jobs = value.get<int>();
      } else if (key == "parallel_kernels") {
        cfg.parallel_kernels = value.get<bool>();
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("bad value for config key '" + key + "': " + e.what());
    }
  }
}

json breakdown_to_json(const losses::LossBreakdown& b) {
  return {{"dir", b.dir},     {"patch", b.patch}, {"content", b.content},
          {"tv", b.tv},       {"mask", b.mask},   {"total", b.total},
          {"patches_used", b.patches_used}};
}

losses::LossBreakdown breakdown_from_json(const json& j) {
  losses::LossBreakdown b;
  b.dir = j.at("dir").get<double>();
  b.patch = j.at("patch").get<double>();
  b.content = j.at("content").get<double>();
  b.tv = j.at("tv").get<double>();
  b.mask = j.at("mask").get<double>();
  b.total = j.at("total").get<double>();
  b.patches_used = j.at("patches_used").get<int>();
  return b;
}

std::string default_output_path(const std::string& image_path) {
  fs::path p(image_path);
  return (p.parent_path() / (p.stem().string() + ".stylized.png")).string();
}

}  // namespace

PipelineConfig load_config(const std::optional<std::string>& file_path,
                           const CliOverrides& overrides) {
  PipelineConfig cfg;
  if (file_path) apply_config_file(cfg, *file_path);

  if (overrides.threshold) cfg.style.threshold = *overrides.threshold;
  if (overrides.iterations) cfg.style.iterations = *overrides.iterations;
  if (overrides.seed) cfg.style.seed = *overrides.seed;
  if (overrides.backend_kind) {
    if (*overrides.backend_kind == "mock") cfg.backend.kind = perception::BackendKind::mock;
    else if (*overrides.backend_kind == "real") cfg.backend.kind = perception::BackendKind::real;
    else throw ConfigError("--backend must be mock or real");
  }
  if (overrides.weights_path) cfg.backend.weights_path = *overrides.weights_path;
  if (overrides.llm_endpoint) {
    if (!cfg.llm) cfg.llm = llm::EndpointConfig{};
    cfg.llm->base_url = *overrides.llm_endpoint;
  }
  if (overrides.llm_model) {
    if (!cfg.llm) cfg.llm = llm::EndpointConfig{};
    cfg.llm->model = *overrides.llm_model;
  }
  if (overrides.composite) cfg.composite = composite_from_string(*overrides.composite);
  if (overrides.jobs) cfg.jobs = *overrides.jobs;

  if (cfg.llm)
    if (const char* token = std::getenv("SOULSTYLE_LLM_TOKEN")) cfg.llm->auth_token = token;

  cfg.style.validate();
  if (cfg.jobs < 1) throw ConfigError("jobs must be at least 1");
  if (cfg.backend.kind == perception::BackendKind::real && !cfg.backend.weights_path)
    throw ConfigError("real backend requires --weights");
  return cfg;
}

json RunReport::to_json() const {
  json history = json::array();
  for (const auto& b : loss_history) history.push_back(breakdown_to_json(b));
  return {{"parsed",
           {{"stylized_content", parsed.stylized_content},
            {"stylized_objects", parsed.stylized_objects}}},
          {"parser_used", parser_used},
          {"mask_provider_used", mask_provider_used},
          {"final_loss", breakdown_to_json(final_loss)},
          {"loss_history", history},
          {"wall_time_sec", wall_time_sec},
          {"output_path", output_path}};
}

RunReport RunReport::from_json(const json& j) {
  RunReport r;
  r.parsed.stylized_content = j.at("parsed").at("stylized_content").get<std::string>();
  r.parsed.stylized_objects = j.at("parsed").at("stylized_objects").get<std::string>();
  r.parser_used = j.at("parser_used").get<std::string>();
  r.mask_provider_used = j.at("mask_provider_used").get<std::string>();
  r.final_loss = breakdown_from_json(j.at("final_loss"));
  for (const auto& b : j.at("loss_history")) r.loss_history.push_back(breakdown_from_json(b));
  r.wall_time_sec = j.at("wall_time_sec").get<double>();
  r.output_path = j.at("output_path").get<std::string>();
  return r;
}

RunReport run_stylize(const RunManifest& manifest, const PipelineConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  kernels::set_parallel(config.parallel_kernels);

  losses::StyleConfig style = config.style;
  apply_style_overrides(style, manifest.style_overrides);
  style.validate();

  if (!fs::exists(manifest.image_path))
    throw IoError("image file not found: " + manifest.image_path);
  const Image content = imageio::load_image(manifest.image_path);

  RunReport report;
  if (config.llm && !config.llm->base_url.empty()) {
    const auto prompt = instruction::build_prompt({manifest.instruction_text});
    report.parsed = instruction::parse_llm_response(llm::query_llm(*config.llm, prompt));
    report.parser_used = "llm";
  } else {
    report.parsed = instruction::fallback_split({manifest.instruction_text});
    report.parser_used = "fallback";
  }

  Mask mask;
  if (manifest.mask_path) {
    mask = segmentation::get_mask(content, report.parsed.stylized_objects,
                                  segmentation::MaskProvider::from_file(*manifest.mask_path));
    report.mask_provider_used = "file";
  } else if (config.mask_endpoint) {
    mask = segmentation::get_mask(content, report.parsed.stylized_objects,
                                  segmentation::MaskProvider::from_endpoint(*config.mask_endpoint));
    report.mask_provider_used = "external";
  } else if (config.synthetic_mask) {
    mask = segmentation::get_mask(content, report.parsed.stylized_objects,
                                  segmentation::MaskProvider::from_shape(*config.synthetic_mask));
    report.mask_provider_used = "synthetic";
  } else {
    throw ConfigError("no mask source: give --mask, a mask endpoint or a synthetic mask spec");
  }

  const auto backend = perception::make_backend(config.backend);
  auto [stylized, state] = stylenet::optimize(content, report.parsed, mask, style, *backend);
  if (config.composite != CompositeMode::off)
    stylized = stylenet::composite(stylized, content, mask,
                                   config.composite == CompositeMode::hard);

  report.output_path = manifest.output_path.value_or(default_output_path(manifest.image_path));
  imageio::save_image(report.output_path, stylized);
  if (!state.loss_history.empty()) report.final_loss = state.loss_history.back();
  report.loss_history = std::move(state.loss_history);
  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::ofstream rep(report.output_path + ".report.json");
  if (!rep) throw IoError("cannot write report next to " + report.output_path);
  rep << report.to_json().dump(2) << "\n";
  return report;
}

std::vector<RunManifest> load_manifests(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest file: " + path);
  std::vector<RunManifest> manifests;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (instruction::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
      RunManifest m;
      m.image_path = j.at("image").get<std::string>();
      m.instruction_text = j.at("instruction").get<std::string>();
      if (j.contains("mask") && !j["mask"].is_null())
        m.mask_path = j["mask"].get<std::string>();
      if (j.contains("out") && !j["out"].is_null())
        m.output_path = j["out"].get<std::string>();
      if (j.contains("overrides")) m.style_overrides = j["overrides"];
      for (const auto& [key, _] : j.items())
        if (key != "image" && key != "instruction" && key != "mask" && key != "out" &&
            key != "overrides")
          throw ConfigError("unknown manifest key '" + key + "'");
      manifests.push_back(std::move(m));
    } catch (const json::exception& e) {
      throw ConfigError("manifest line " + std::to_string(lineno) + " is invalid: " + e.what());
    }
  }
  if (manifests.empty()) throw ConfigError("manifest file is empty: " + path);
  return manifests;
}

BatchResult run_batch(const std::string& manifest_path, const PipelineConfig& config) {
  const auto manifests = load_manifests(manifest_path);
  BatchResult result;
  result.reports.resize(manifests.size());
  std::vector<std::optional<BatchFailure>> failures(manifests.size());

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < manifests.size(); i = next.fetch_add(1)) {
      try {
        result.reports[i] = run_stylize(manifests[i], config);
      } catch (const std::exception& e) {
        failures[i] = BatchFailure{i + 1, manifests[i].image_path, e.what()};
      }
    }
  };
  const int jobs = std::min<int>(config.jobs, static_cast<int>(manifests.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  // compact failed slots
  BatchResult out;
  json aggregate = {{"manifest", manifest_path},
                    {"total", manifests.size()},
                    {"reports", json::array()},
                    {"failures", json::array()}};
  for (size_t i = 0; i < manifests.size(); ++i) {
    if (failures[i]) {
      out.failures.push_back(*failures[i]);
      aggregate["failures"].push_back({{"line", failures[i]->line},
                                       {"image", failures[i]->image_path},
                                       {"error", failures[i]->error}});
    } else {
      aggregate["reports"].push_back(result.reports[i].to_json());
      out.reports.push_back(std::move(result.reports[i]));
    }
  }
  aggregate["failed"] = out.failures.size();

  std::ofstream agg(manifest_path + ".aggregate.json");
  if (!agg) throw IoError("cannot write aggregate report for " + manifest_path);
  agg << aggregate.dump(2) << "\n";
  return out;
}

}  // namespace soulstyle::pipeline
