#pragma once

// Stage orchestration behind the `nbhd` command line tool.
//
// Every stage owns one directory under the run root and only reads the
// directories of the stages it depends on:
//
//   ingest/     manifest.csv authoritative.csv canopy.csv segmentation.csv
//               geometry.geojson cbg_filter.json
//   elicit/     elicitation.csv prompt_cache.jsonl validation_log.jsonl elicit_meta.json
//   aggregate/  mllm.csv segmentation.csv panel.csv panel_meta.json
//   weights/    weights.json
//   simulate/   panel.csv panel_meta.json weights.json geometry.geojson truth.json
//   fit/        ladder.csv ladder.txt ladder_meta.json fig_ladder.svg
//   stack/      <outcome>_<comparison>/bootstrap_draws.csv, equivalence.json,
//               stacked_fits.csv, fig_violin_*.svg
//   quantile/   r2_ladder.csv quantile_grid.csv quantile_meta.json fig_*.svg
//   report/     tables/ figures/ audit/
//
// run_manifest.json at the root records the config hash, input hashes,
// versions, per-stage durations and output hashes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbhd/aggregate.hpp"
#include "nbhd/econ.hpp"
#include "nbhd/elicit.hpp"
#include "nbhd/simgen.hpp"
#include "nbhd/stackinf.hpp"

namespace nbhd::pipeline {

enum class Stage { Ingest, Elicit, Aggregate, Weights, Simulate, Fit, Stack, Quantile, Report };
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);
/// Comma-separated list; the result is put in pipeline order.
std::vector<Stage> parse_stages(std::string_view list);

struct MockSpec {
  std::optional<std::uint64_t> seed;  // absent: derived from RunConfig::seed
  std::string profile = "mixed";
};

struct RunConfig {
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0: hardware threads

  // ingest
  std::filesystem::path manifest, acs, geie, geo, segmentation;
  int target_year = ingest::kDefaultTargetYear;
  int min_images = ingest::kDefaultMinImages;

  // elicit
  elicit::PromptChainConfig elicit;
  /// Manifest read by `elicit` instead of ingest/manifest.csv.
  std::filesystem::path elicit_manifest;
  std::optional<MockSpec> mock;

  // simulate (present: the panel and weights come from the generator)
  std::optional<simgen::DgpConfig> simulate;
  bool simulate_seed_given = false;

  // estimation
  aggregate::StandardizationScope scope = aggregate::StandardizationScope::EstimationSample;
  aggregate::SdConvention sd = aggregate::SdConvention::Sample;
  econ::SeType ols_se = econ::SeType::CR1;
  econ::SeType sar_se = econ::SeType::ModelBased;
  std::vector<Comparison> comparisons{Comparison::VsIdeal, Comparison::VsStableDeclining};
  std::vector<econ::Variant> variants{econ::kVariants.begin(), econ::kVariants.end()};
  /// Absent: every covariate column present in the panel.
  std::optional<std::vector<std::string>> covariates;

  // stacked bootstrap
  int B = 500;
  std::vector<stackinf::StackSpec> stack_specs{stackinf::StackSpec::ZipFE, stackinf::StackSpec::SAR};
  std::vector<Outcome> stack_outcomes{kOutcomes.begin(), kOutcomes.end()};
  double max_failure_share = 0.05;

  // explanatory power
  std::vector<double> taus{0.10, 0.25, 0.50, 0.75, 0.90};
  int quantile_B = 500;

  std::vector<Stage> stages;  // default stage list for `run`
};

/// Throws ConfigInvalid(field). Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// Exit statuses of the command line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitStage = 3;
inline constexpr int kExitPartial = 4;

struct RunOptions {
  /// Skip a stage whose recorded input fingerprint is unchanged.
  bool resume = false;
};

struct StageReport {
  Stage stage = Stage::Report;
  std::string status;  // ok, partial, skipped, failed
  double duration_ms = 0.0;
  std::string error;
};

struct RunResult {
  int exit_code = kExitOk;
  std::vector<StageReport> stages;
};

/// Runs the stages in pipeline order. Errors are caught and mapped to exit
/// codes; the first failing stage stops the run.
RunResult run(const RunConfig& cfg, const std::vector<Stage>& stages, const RunOptions& opts = {});

/// Exit code for an exception escaping a stage.
int exit_code_for(const std::exception& e);

}  // namespace nbhd::pipeline
