#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "soulstyle/llm_client.hpp"
#include "soulstyle/losses.hpp"
#include "soulstyle/perception.hpp"
#include "soulstyle/segmentation.hpp"

namespace soulstyle::pipeline {

enum class CompositeMode { off, soft, hard };

struct PipelineConfig {
  losses::StyleConfig style;
  perception::BackendDescriptor backend;
  std::optional<llm::EndpointConfig> llm;
  std::optional<std::string> mask_endpoint;
  std::optional<segmentation::ShapeSpec> synthetic_mask;
  CompositeMode composite = CompositeMode::off;
  int jobs = 1;
  bool parallel_kernels = true;
};

// Flag-level overrides; applied on top of file values, which sit on top of
// the built-in defaults.
struct CliOverrides {
  std::optional<double> threshold;
  std::optional<int> iterations;
  std::optional<uint64_t> seed;
  std::optional<std::string> backend_kind;  // "mock" | "real"
  std::optional<std::string> weights_path;
  std::optional<std::string> llm_endpoint;
  std::optional<std::string> llm_model;
  std::optional<std::string> composite;     // "off" | "soft" | "hard"
  std::optional<int> jobs;
};

// Precedence: CLI > file > defaults. Unknown keys in the file are
// configuration errors naming the key. The LLM auth token is read from the
// SOULSTYLE_LLM_TOKEN environment variable.
PipelineConfig load_config(const std::optional<std::string>& file_path,
                           const CliOverrides& overrides);

// One work item: content image + instruction (+ optional mask/output paths
// and per-run style overrides).
struct RunManifest {
  std::string image_path;
  std::string instruction_text;
  std::optional<std::string> mask_path;
  std::optional<std::string> output_path;
  nlohmann::json style_overrides = nlohmann::json::object();
};

struct RunReport {
  instruction::ParsedInstruction parsed;
  std::string parser_used;         // "llm" | "fallback"
  std::string mask_provider_used;  // "file" | "external" | "synthetic"
  losses::LossBreakdown final_loss;
  std::vector<losses::LossBreakdown> loss_history;
  double wall_time_sec = 0.0;
  std::string output_path;

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
};

// parse -> mask -> optimize -> write PNG + <out>.report.json.
RunReport run_stylize(const RunManifest& manifest, const PipelineConfig& config);

struct BatchFailure {
  size_t line = 0;
  std::string image_path;
  std::string error;
};

struct BatchResult {
  std::vector<RunReport> reports;
  std::vector<BatchFailure> failures;
};

// Runs every manifest in the JSON-lines file; per-item failures are
// recorded, not fatal. Items run concurrently up to config.jobs. Writes
// <manifest>.aggregate.json.
BatchResult run_batch(const std::string& manifest_path, const PipelineConfig& config);

std::vector<RunManifest> load_manifests(const std::string& path);

}  // namespace soulstyle::pipeline
