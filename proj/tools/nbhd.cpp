// nbhd: command line front end of the pipeline.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nbhd/error.hpp"
#include "nbhd/pipeline.hpp"
#include "nbhd/util.hpp"

namespace fs = std::filesystem;
using namespace nbhd;
using pipeline::Stage;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::size_t workers = 0;
  std::string log_level = "info";
  bool resume = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run configuration");
  app->add_option("--out", c.out, "Run root directory");
  app->add_option("--workers", c.workers, "Worker threads (0: hardware)");
  app->add_option("--log-level", c.log_level, "trace, debug, info, warn, error, off");
  app->add_flag("--resume", c.resume, "Skip stages whose inputs are unchanged");
}

// `simulate --config F` accepts either a run config or a bare DGP config.
pipeline::RunConfig load_config(const Common& c, bool bare_dgp_ok) {
  pipeline::RunConfig cfg;
  if (!c.config.empty()) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_file(c.config));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ConfigInvalid, c.config + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorKind::ConfigInvalid, e.what());
    }
    const auto base = fs::path(c.config).parent_path();
    if (bare_dgp_ok && doc.is_object() && !doc.contains("simulate") &&
        (doc.contains("rows") || doc.contains("grid") || doc.contains("rho_true"))) {
      cfg.simulate = simgen::parse_config(doc);
      cfg.simulate_seed_given = doc.contains("seed");
    } else {
      cfg = pipeline::parse_run_config(doc, base);
    }
  }
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.workers > 0) cfg.workers = c.workers;
  return cfg;
}

int execute(const pipeline::RunConfig& cfg, const std::vector<Stage>& stages, const Common& c) {
  const auto result = pipeline::run(cfg, stages, {c.resume});
  for (const auto& s : result.stages) {
    std::cout << pipeline::to_string(s.stage) << ": " << s.status;
    if (!s.error.empty()) std::cout << " (" << s.error << ")";
    std::cout << '\n';
  }
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neighborhood indicators from street-view observations: ingest, elicit, estimate, report"};
  app.require_subcommand(1);
  Common common;

  std::string manifest, acs, geie, geo, seg, mock, stages;
  std::optional<int> target_year, min_images;

  auto* ingest = app.add_subcommand("ingest", "Validate raw inputs into canonical tables");
  add_common(ingest, common);
  ingest->add_option("--manifest", manifest, "Image manifest CSV");
  ingest->add_option("--acs", acs, "Authoritative poverty and covariates CSV");
  ingest->add_option("--geie", geie, "Authoritative canopy CSV");
  ingest->add_option("--geo", geo, "CBG GeoJSON");
  ingest->add_option("--seg", seg, "Segmentation shares CSV");
  ingest->add_option("--target-year", target_year, "Capture year to keep");
  ingest->add_option("--min-images", min_images, "Minimum valid images per CBG");

  auto* elicit = app.add_subcommand("elicit", "Run the prompt chain on every valid tile");
  add_common(elicit, common);
  elicit->add_option("--manifest", manifest, "Manifest CSV (default: ingest/manifest.csv)");
  elicit->add_option("--mock", mock, "Use the offline mock endpoint: seed,profile");

  auto* aggregate = app.add_subcommand("aggregate", "Pool tiles to CBGs and build the panel");
  add_common(aggregate, common);
  auto* weights = app.add_subcommand("weights", "Queen contiguity weights of the panel CBGs");
  add_common(weights, common);
  auto* fit = app.add_subcommand("fit", "Treatment effects across the specification ladder");
  add_common(fit, common);
  auto* stack = app.add_subcommand("stack", "Stacked regressions with cluster bootstrap");
  add_common(stack, common);
  auto* quantile = app.add_subcommand("quantile", "Adjusted R2 ladder and quantile pseudo-R2 grid");
  add_common(quantile, common);
  auto* simulate = app.add_subcommand("simulate", "Synthetic lattice panel with known parameters");
  add_common(simulate, common);
  auto* report = app.add_subcommand("report", "Assemble tables, figures and audit files");
  add_common(report, common);
  auto* run = app.add_subcommand("run", "Run several stages from one config");
  add_common(run, common);
  run->add_option("--stages", stages, "Comma-separated stages (default: config `stages` or the full pipeline)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : pipeline::kExitConfig;
  }
  spdlog::set_level(spdlog::level::from_str(common.log_level));
  spdlog::set_pattern("[%l] %v");

  try {
    auto cfg = load_config(common, simulate->parsed());
    if (ingest->parsed()) {
      if (!manifest.empty()) cfg.manifest = manifest;
      if (!acs.empty()) cfg.acs = acs;
      if (!geie.empty()) cfg.geie = geie;
      if (!geo.empty()) cfg.geo = geo;
      if (!seg.empty()) cfg.segmentation = seg;
      if (target_year) cfg.target_year = *target_year;
      if (min_images) cfg.min_images = *min_images;
      return execute(cfg, {Stage::Ingest}, common);
    }
    if (elicit->parsed()) {
      if (!manifest.empty()) cfg.elicit_manifest = manifest;
      if (!mock.empty()) {
        const auto parts = split(mock, ',');
        pipeline::MockSpec m;
        try {
          m.seed = static_cast<std::uint64_t>(parse_int(parts.at(0)));
        } catch (const std::exception&) {
          throw Error(ErrorKind::ConfigInvalid, "--mock: expected seed,profile");
        }
        if (parts.size() > 1) m.profile = trim(parts[1]);
        elicit::parse_mock_profile(m.profile);
        cfg.mock = m;
      }
      return execute(cfg, {Stage::Elicit}, common);
    }
    if (aggregate->parsed()) return execute(cfg, {Stage::Aggregate}, common);
    if (weights->parsed()) return execute(cfg, {Stage::Weights}, common);
    if (fit->parsed()) return execute(cfg, {Stage::Fit}, common);
    if (stack->parsed()) return execute(cfg, {Stage::Stack}, common);
    if (quantile->parsed()) return execute(cfg, {Stage::Quantile}, common);
    if (simulate->parsed()) return execute(cfg, {Stage::Simulate}, common);
    if (report->parsed()) return execute(cfg, {Stage::Report}, common);
    if (run->parsed()) {
      std::vector<Stage> list = cfg.stages;
      if (!stages.empty()) list = pipeline::parse_stages(stages);
      if (list.empty()) {
        list = cfg.simulate ? std::vector<Stage>{Stage::Simulate, Stage::Fit, Stage::Stack, Stage::Quantile, Stage::Report}
                            : std::vector<Stage>{Stage::Ingest, Stage::Elicit, Stage::Aggregate, Stage::Weights,
                                                 Stage::Fit, Stage::Stack, Stage::Quantile, Stage::Report};
      }
      return execute(cfg, list, common);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return pipeline::exit_code_for(e);
  }
  return pipeline::kExitConfig;
}
