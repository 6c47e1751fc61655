#include "nbhd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Core>
#include <spdlog/spdlog.h>

#include "nbhd/csv.hpp"
#include "nbhd/endpoint.hpp"
#include "nbhd/error.hpp"
#include "nbhd/geometry.hpp"
#include "nbhd/ingest.hpp"
#include "nbhd/quantfit.hpp"
#include "nbhd/spatial.hpp"
#include "nbhd/svg.hpp"
#include "nbhd/util.hpp"

#ifndef NBHD_VERSION
#define NBHD_VERSION "0.0.0"
#endif

namespace nbhd::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<Stage, 9> kStageOrder{Stage::Ingest, Stage::Elicit, Stage::Aggregate, Stage::Weights,
                                           Stage::Simulate, Stage::Fit, Stage::Stack, Stage::Quantile,
                                           Stage::Report};

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::ConfigInvalid, field + ": " + why);
}

econ::SeType parse_se(std::string_view s, const std::string& field) {
  if (s == "classical") return econ::SeType::Classical;
  if (s == "hc1") return econ::SeType::HC1;
  if (s == "cr1") return econ::SeType::CR1;
  if (s == "model_based") return econ::SeType::ModelBased;
  bad(field, "unknown SE convention '" + std::string(s) + "'");
}

aggregate::SdConvention parse_sd(std::string_view s) {
  if (s == "sample") return aggregate::SdConvention::Sample;
  if (s == "population") return aggregate::SdConvention::Population;
  bad("standardization.sd", "expected sample or population");
}

std::string_view to_string(aggregate::SdConvention s) {
  return s == aggregate::SdConvention::Sample ? "sample" : "population";
}

template <class T, class F>
std::vector<T> parse_list(const json& doc, const std::string& field, F&& parse) {
  if (!doc.is_array()) bad(field, "expected an array");
  std::vector<T> out;
  for (const auto& v : doc) {
    if (!v.is_string()) bad(field, "expected strings");
    T item = parse(v.get<std::string>());
    if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
  }
  if (out.empty()) bad(field, "must not be empty");
  return out;
}

void check_keys(const json& doc, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!doc.is_object()) bad(where.empty() ? "config" : where, "expected an object");
  for (const auto& [key, _] : doc.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      bad(where.empty() ? key : where + "." + key, "unknown key");
}

fs::path resolve(const fs::path& base, const json& v, const std::string& field) {
  if (!v.is_string()) bad(field, "expected a path string");
  fs::path p = v.get<std::string>();
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages and config

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Elicit: return "elicit";
    case Stage::Aggregate: return "aggregate";
    case Stage::Weights: return "weights";
    case Stage::Simulate: return "simulate";
    case Stage::Fit: return "fit";
    case Stage::Stack: return "stack";
    case Stage::Quantile: return "quantile";
    case Stage::Report: return "report";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  for (Stage st : kStageOrder)
    if (to_string(st) == s) return st;
  bad("stages", "unknown stage '" + std::string(s) + "'");
}

std::vector<Stage> parse_stages(std::string_view list) {
  std::set<Stage> wanted;
  for (const auto& part : split(list, ',')) {
    const auto name = trim(part);
    if (!name.empty()) wanted.insert(parse_stage(name));
  }
  if (wanted.empty()) bad("stages", "no stage given");
  std::vector<Stage> out;
  for (Stage st : kStageOrder)
    if (wanted.count(st)) out.push_back(st);
  return out;
}

RunConfig parse_run_config(const json& doc, const fs::path& base) {
  RunConfig c;
  try {
    check_keys(doc, "", {"out_dir", "seed", "workers", "inputs", "target_year", "min_images", "elicit", "simulate",
                         "standardization", "se", "comparisons", "variants", "covariates", "bootstrap", "quantile",
                         "stages"});
    if (doc.contains("out_dir")) c.out_dir = resolve(base, doc["out_dir"], "out_dir");
    c.seed = doc.value("seed", c.seed);
    c.workers = doc.value("workers", c.workers);
    if (doc.contains("inputs")) {
      const auto& in = doc["inputs"];
      check_keys(in, "inputs", {"manifest", "acs", "geie", "geo", "segmentation"});
      if (in.contains("manifest")) c.manifest = resolve(base, in["manifest"], "inputs.manifest");
      if (in.contains("acs")) c.acs = resolve(base, in["acs"], "inputs.acs");
      if (in.contains("geie")) c.geie = resolve(base, in["geie"], "inputs.geie");
      if (in.contains("geo")) c.geo = resolve(base, in["geo"], "inputs.geo");
      if (in.contains("segmentation")) c.segmentation = resolve(base, in["segmentation"], "inputs.segmentation");
    }
    c.target_year = doc.value("target_year", c.target_year);
    c.min_images = doc.value("min_images", c.min_images);
    if (c.min_images < 0) bad("min_images", "must be >= 0");

    if (doc.contains("elicit")) {
      const auto& e = doc["elicit"];
      check_keys(e, "elicit", {"rounds", "quorum", "endpoint", "model_name", "temperature", "timeout_ms",
                               "max_retries", "max_in_flight", "credential_env", "mock"});
      auto& p = c.elicit;
      p.rounds = e.value("rounds", p.rounds);
      p.quorum = e.value("quorum", p.quorum);
      p.endpoint = e.value("endpoint", p.endpoint);
      p.model_name = e.value("model_name", p.model_name);
      p.temperature = e.value("temperature", p.temperature);
      p.timeout = std::chrono::milliseconds(e.value("timeout_ms", static_cast<long long>(p.timeout.count())));
      p.max_retries = e.value("max_retries", p.max_retries);
      p.max_in_flight = e.value("max_in_flight", p.max_in_flight);
      p.credential_env = e.value("credential_env", p.credential_env);
      if (e.contains("mock") && !e["mock"].is_null()) {
        check_keys(e["mock"], "elicit.mock", {"seed", "profile"});
        MockSpec m;
        if (e["mock"].contains("seed")) m.seed = e["mock"]["seed"].get<std::uint64_t>();
        m.profile = e["mock"].value("profile", m.profile);
        elicit::parse_mock_profile(m.profile);
        c.mock = m;
      }
      elicit::validate_config(c.elicit);
    }

    if (doc.contains("simulate")) {
      c.simulate = simgen::parse_config(doc["simulate"]);
      c.simulate_seed_given = doc["simulate"].contains("seed");
    }

    if (doc.contains("standardization")) {
      const auto& s = doc["standardization"];
      check_keys(s, "standardization", {"scope", "sd"});
      if (s.contains("scope")) c.scope = aggregate::parse_scope(s["scope"].get<std::string>());
      if (s.contains("sd")) c.sd = parse_sd(s["sd"].get<std::string>());
    }
    if (doc.contains("se")) {
      const auto& s = doc["se"];
      check_keys(s, "se", {"ols", "sar"});
      if (s.contains("ols")) c.ols_se = parse_se(s["ols"].get<std::string>(), "se.ols");
      if (s.contains("sar")) c.sar_se = parse_se(s["sar"].get<std::string>(), "se.sar");
      if (c.ols_se == econ::SeType::ModelBased) bad("se.ols", "model_based applies to SAR only");
    }
    if (doc.contains("comparisons")) {
      c.comparisons = parse_list<Comparison>(doc["comparisons"], "comparisons",
                                             [](const std::string& s) { return parse_comparison(s); });
      if (std::find(c.comparisons.begin(), c.comparisons.end(), Comparison::All) != c.comparisons.end())
        bad("comparisons", "use vs_ideal and/or vs_stable_declining");
    }
    if (doc.contains("variants"))
      c.variants = parse_list<econ::Variant>(doc["variants"], "variants",
                                             [](const std::string& s) { return econ::parse_variant(s); });
    if (doc.contains("covariates")) c.covariates = doc["covariates"].get<std::vector<std::string>>();

    if (doc.contains("bootstrap")) {
      const auto& b = doc["bootstrap"];
      check_keys(b, "bootstrap", {"B", "specs", "outcomes", "max_failure_share"});
      c.B = b.value("B", c.B);
      if (b.contains("specs"))
        c.stack_specs = parse_list<stackinf::StackSpec>(b["specs"], "bootstrap.specs",
                                                        [](const std::string& s) { return stackinf::parse_stack_spec(s); });
      if (b.contains("outcomes"))
        c.stack_outcomes = parse_list<Outcome>(b["outcomes"], "bootstrap.outcomes",
                                               [](const std::string& s) { return parse_outcome(s); });
      c.max_failure_share = b.value("max_failure_share", c.max_failure_share);
      if (c.B < 2) bad("bootstrap.B", "must be >= 2");
      if (!(c.max_failure_share >= 0.0 && c.max_failure_share < 1.0)) bad("bootstrap.max_failure_share", "must lie in [0, 1)");
    }
    if (doc.contains("quantile")) {
      const auto& q = doc["quantile"];
      check_keys(q, "quantile", {"taus", "B"});
      c.taus = q.value("taus", c.taus);
      c.quantile_B = q.value("B", c.quantile_B);
      if (c.taus.empty()) bad("quantile.taus", "must not be empty");
      for (double t : c.taus)
        if (!(t > 0.0 && t < 1.0)) bad("quantile.taus", "each tau must lie in (0, 1)");
      if (c.quantile_B < 2) bad("quantile.B", "must be >= 2");
    }
    if (doc.contains("stages")) {
      std::string joined;
      for (const auto& s : doc["stages"]) joined += s.get<std::string>() + ",";
      c.stages = parse_stages(joined);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigInvalid, e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& c) {
  json j;
  j["out_dir"] = c.out_dir.string();
  j["seed"] = c.seed;
  j["inputs"] = {{"manifest", c.manifest.string()}, {"acs", c.acs.string()}, {"geie", c.geie.string()},
                 {"geo", c.geo.string()}, {"segmentation", c.segmentation.string()}};
  if (!c.elicit_manifest.empty()) j["inputs"]["elicit_manifest"] = c.elicit_manifest.string();
  j["target_year"] = c.target_year;
  j["min_images"] = c.min_images;
  const auto& p = c.elicit;
  j["elicit"] = {{"rounds", p.rounds},         {"quorum", p.quorum},
                 {"endpoint", p.endpoint},     {"model_name", p.model_name},
                 {"temperature", p.temperature}, {"timeout_ms", p.timeout.count()},
                 {"max_retries", p.max_retries}, {"max_in_flight", p.max_in_flight},
                 {"credential_env", p.credential_env}};
  if (c.mock) {
    j["elicit"]["mock"] = {{"profile", c.mock->profile}};
    if (c.mock->seed) j["elicit"]["mock"]["seed"] = *c.mock->seed;
  }
  if (c.simulate) j["simulate"] = simgen::to_json(*c.simulate);
  j["standardization"] = {{"scope", aggregate::to_string(c.scope)}, {"sd", to_string(c.sd)}};
  j["se"] = {{"ols", econ::to_string(c.ols_se)}, {"sar", econ::to_string(c.sar_se)}};
  for (auto cmp : c.comparisons) j["comparisons"].push_back(to_string(cmp));
  for (auto v : c.variants) j["variants"].push_back(econ::to_string(v));
  if (c.covariates) j["covariates"] = *c.covariates;
  j["bootstrap"] = {{"B", c.B}, {"max_failure_share", c.max_failure_share}};
  for (auto s : c.stack_specs) j["bootstrap"]["specs"].push_back(stackinf::to_string(s));
  for (auto o : c.stack_outcomes) j["bootstrap"]["outcomes"].push_back(to_string(o));
  j["quantile"] = {{"taus", c.taus}, {"B", c.quantile_B}};
  return j;
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e); err && err->kind() == ErrorKind::ConfigInvalid)
    return kExitConfig;
  return kExitStage;
}

// ---------------------------------------------------------------------------
// Stage execution

namespace {

std::string dump(const json& j) { return j.dump(2) + "\n"; }

struct Ctx {
  const RunConfig& cfg;
  Stage stage;
  fs::path root;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path relative to root -> sha256
  bool partial = false;

  fs::path dir(Stage s) const { return root / std::string(to_string(s)); }
  fs::path own() const { return dir(stage); }

  std::string read(const fs::path& p, const std::string& missing_stage = {}) {
    if (!fs::exists(p)) {
      if (!missing_stage.empty()) throw Error(ErrorKind::StageInputMissing, missing_stage + " (" + p.string() + ")");
      throw Error(ErrorKind::Io, "missing input " + p.string());
    }
    auto text = read_file(p);
    inputs[p.lexically_normal().string()] = sha256_hex(text);
    return text;
  }

  void write(const fs::path& rel, std::string_view contents) {
    const auto path = own() / rel;
    fs::create_directories(path.parent_path());
    write_file_atomic(path, contents);
    outputs[fs::relative(path, root).generic_string()] = sha256_hex(contents);
  }

  std::uint64_t derived_seed(std::string_view tag) const { return hash_combine(cfg.seed, fnv1a64(tag)); }

  // Panel and weights come from the simulator when the config has one.
  Stage source() const { return cfg.simulate ? Stage::Simulate : Stage::Aggregate; }
  fs::path panel_path() const { return dir(source()) / "panel.csv"; }
  fs::path weights_path() const { return dir(cfg.simulate ? Stage::Simulate : Stage::Weights) / "weights.json"; }

  aggregate::Panel panel() {
    return aggregate::parse_panel(read(panel_path(), std::string(to_string(source()))), panel_path().string());
  }
  std::optional<spatial::WeightsMatrix> weights(bool required) {
    if (!fs::exists(weights_path())) {
      if (required) throw Error(ErrorKind::StageInputMissing, "spatial (" + weights_path().string() + ")");
      return std::nullopt;
    }
    return spatial::from_json(load_json_recorded(weights_path()));
  }
  json load_json_recorded(const fs::path& p) {
    try {
      return json::parse(read(p));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Io, p.string() + ": " + e.what());
    }
  }

  std::vector<std::string> covariates(const aggregate::Panel& panel) const {
    if (cfg.covariates) return *cfg.covariates;
    std::set<std::string> present;
    for (const auto& r : panel.rows)
      for (const auto& [name, _] : r.covariates) present.insert(name);
    std::vector<std::string> out;
    for (const auto& name : ingest::kDefaultCovariates)
      if (present.erase(name)) out.push_back(name);
    out.insert(out.end(), present.begin(), present.end());
    return out;
  }
};

std::vector<Stage> depends_on(const RunConfig& cfg, Stage s) {
  const Stage src = cfg.simulate ? Stage::Simulate : Stage::Aggregate;
  switch (s) {
    case Stage::Ingest: return {};
    case Stage::Elicit: return {Stage::Ingest};
    case Stage::Aggregate: return {Stage::Ingest, Stage::Elicit};
    case Stage::Weights: return {Stage::Ingest, Stage::Aggregate};
    case Stage::Simulate: return {};
    case Stage::Fit:
    case Stage::Stack:
      if (cfg.simulate) return {src};
      return {src, Stage::Weights};
    case Stage::Quantile: return {src};
    case Stage::Report: {
      std::vector<Stage> d{src, Stage::Fit, Stage::Stack, Stage::Quantile};
      if (!cfg.simulate) d.insert(d.begin(), Stage::Elicit);
      return d;
    }
  }
  return {};
}

void require(const fs::path& p, const std::string& field) {
  if (p.empty()) throw Error(ErrorKind::ConfigInvalid, field + ": required by this stage");
}

// -- ingest ------------------------------------------------------------------

void stage_ingest(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  require(cfg.manifest, "inputs.manifest");
  require(cfg.acs, "inputs.acs");
  require(cfg.geie, "inputs.geie");
  require(cfg.geo, "inputs.geo");
  require(cfg.segmentation, "inputs.segmentation");

  auto manifest = ingest::parse_manifest(ctx.read(cfg.manifest), {cfg.target_year}, cfg.manifest.string());
  spdlog::info("ingest: {} manifest rows, {} dropped off target year {}", manifest.rows_read,
               manifest.rows_dropped_off_year, cfg.target_year);
  json geo_doc;
  try {
    geo_doc = json::parse(ctx.read(cfg.geo));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidGeometry, cfg.geo.string() + ": " + e.what());
  }
  const auto shapes = geo::parse_geojson(geo_doc);
  const auto raw = ingest::parse_authoritative(ctx.read(cfg.acs), ctx.read(cfg.geie), shapes);
  const auto seg = ingest::parse_segmentation(ctx.read(cfg.segmentation), manifest.panoramas, cfg.segmentation.string());
  const auto filter = ingest::filter_cbgs(manifest.panoramas, cfg.min_images);

  std::map<std::string, geo::MultiPolygon> kept_shapes;
  for (const auto& r : raw) kept_shapes[r.cbg_id] = r.geometry;

  ctx.write("manifest.csv", ingest::write_manifest(manifest.panoramas));
  ctx.write("authoritative.csv", ingest::write_authoritative(raw));
  ctx.write("canopy.csv", ingest::write_canopy(raw));
  ctx.write("segmentation.csv", ingest::write_segmentation(seg));
  ctx.write("geometry.geojson", dump(geo::to_geojson(kept_shapes)));
  json f;
  f["min_images"] = cfg.min_images;
  f["target_year"] = cfg.target_year;
  f["rows_read"] = manifest.rows_read;
  f["rows_dropped_off_year"] = manifest.rows_dropped_off_year;
  f["image_count_unit"] = "valid tiles";
  f["kept"] = std::vector<std::string>(filter.kept.begin(), filter.kept.end());
  f["dropped"] = std::vector<std::string>(filter.dropped.begin(), filter.dropped.end());
  f["valid_images"] = filter.valid_images;
  ctx.write("cbg_filter.json", dump(f));
  spdlog::info("ingest: {} CBGs kept, {} dropped (min_images={})", filter.kept.size(), filter.dropped.size(),
               cfg.min_images);
}

// -- elicit ------------------------------------------------------------------

void stage_elicit(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  const auto in = cfg.elicit_manifest.empty() ? ctx.dir(Stage::Ingest) / "manifest.csv" : cfg.elicit_manifest;
  const auto manifest = ingest::parse_manifest(ctx.read(in, "ingest"), {cfg.target_year}, in.string());

  auto chain = cfg.elicit;
  chain.cache_dir = ctx.own();
  fs::create_directories(chain.cache_dir);
  std::unique_ptr<elicit::EndpointClient> endpoint;
  json meta;
  if (cfg.mock) {
    const auto seed = cfg.mock->seed.value_or(ctx.derived_seed("mock"));
    endpoint = elicit::mock_endpoint(seed, elicit::parse_mock_profile(cfg.mock->profile));
    meta["endpoint"] = {{"kind", "mock"}, {"seed", seed}, {"profile", cfg.mock->profile}};
  } else {
    if (chain.endpoint.empty()) throw Error(ErrorKind::ConfigInvalid, "elicit.endpoint: required without a mock");
    endpoint = std::make_unique<elicit::HttpEndpoint>(chain.endpoint, chain.timeout, chain.credential_env);
    meta["endpoint"] = {{"kind", "http"}, {"url", chain.endpoint}, {"credential_env", chain.credential_env}};
  }
  elicit::Elicitor elicitor(chain, *endpoint);
  const auto results = elicitor.run_all(manifest.panoramas);
  ctx.write("elicitation.csv", elicit::write_results(results, chain.rounds));

  std::ostringstream log;
  std::size_t n_fail = 0;
  for (const auto& r : results)
    for (const auto& f : r.failures) {
      json line{{"pano_id", r.pano_id}, {"heading", r.tile_heading}, {"image_ref", r.image_ref}, {"failure", f}};
      log << line.dump() << '\n';
      ++n_fail;
    }
  ctx.write("validation_log.jsonl", log.str());
  const auto stats = elicitor.stats();
  meta["model_name"] = chain.model_name;
  meta["rounds"] = chain.rounds;
  meta["quorum"] = chain.quorum;
  meta["temperature"] = chain.temperature;
  meta["temperature_note"] = "decoding settings of the reference runs are unpublished";
  meta["tiles"] = results.size();
  meta["failed_rounds"] = n_fail;
  meta["endpoint_calls"] = stats.endpoint_calls;
  meta["cache_hits"] = stats.cache_hits;
  meta["validation_failures"] = stats.validation_failures;
  ctx.write("elicit_meta.json", dump(meta));
  if (fs::exists(elicitor.cache().file()))
    ctx.outputs[fs::relative(elicitor.cache().file(), ctx.root).generic_string()] =
        sha256_file(elicitor.cache().file());
  spdlog::info("elicit: {} tiles, {} endpoint calls, {} cache hits, {} failed rounds", results.size(),
               stats.endpoint_calls, stats.cache_hits, n_fail);
}

// -- aggregate ---------------------------------------------------------------

void stage_aggregate(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  const auto ing = ctx.dir(Stage::Ingest);
  const auto manifest =
      ingest::parse_manifest(ctx.read(ing / "manifest.csv", "ingest"), {cfg.target_year}, "manifest.csv");
  const auto shapes = geo::parse_geojson(ctx.load_json_recorded(ing / "geometry.geojson"));
  const auto raw = ingest::parse_authoritative(ctx.read(ing / "authoritative.csv", "ingest"),
                                               ctx.read(ing / "canopy.csv", "ingest"), shapes);
  const auto seg = ingest::parse_segmentation(ctx.read(ing / "segmentation.csv", "ingest"), manifest.panoramas);
  const auto filter = ctx.load_json_recorded(ing / "cbg_filter.json");
  const auto kept_list = filter.at("kept").get<std::vector<std::string>>();
  const std::set<std::string> kept(kept_list.begin(), kept_list.end());
  const auto results = elicit::parse_results(ctx.read(ctx.dir(Stage::Elicit) / "elicitation.csv", "elicit"));

  const auto mllm = aggregate::aggregate_mllm(manifest.panoramas, results);
  const auto segm = aggregate::aggregate_segmentation(manifest.panoramas, seg);
  const auto panel = aggregate::build_panel(raw, mllm, segm, kept, {Comparison::All, cfg.scope, cfg.sd});
  ctx.write("mllm.csv", aggregate::write_aggregates(mllm));
  ctx.write("segmentation.csv", aggregate::write_aggregates(segm));
  ctx.write("panel.csv", aggregate::write_panel(panel));
  ctx.write("panel_meta.json", dump(aggregate::panel_meta(panel)));
  spdlog::info("aggregate: {} CBGs in the common sample, {} excluded", panel.n_cbgs(), panel.excluded.size());
}

// -- weights -----------------------------------------------------------------

void stage_weights(Ctx& ctx) {
  auto shapes = geo::parse_geojson(ctx.load_json_recorded(ctx.dir(Stage::Ingest) / "geometry.geojson"));
  const auto panel_file = ctx.dir(Stage::Aggregate) / "panel.csv";
  if (fs::exists(panel_file)) {
    const auto panel = aggregate::parse_panel(ctx.read(panel_file), panel_file.string());
    const auto ids = panel.cbg_ids();
    const std::set<std::string> keep(ids.begin(), ids.end());
    std::erase_if(shapes, [&](const auto& kv) { return !keep.count(kv.first); });
  }
  const auto w = spatial::queen_weights(shapes);
  ctx.write("weights.json", dump(spatial::to_json(w)));
  spdlog::info("weights: {} units, {} islands", w.size(), w.islands.size());
}

// -- simulate ----------------------------------------------------------------

void stage_simulate(Ctx& ctx) {
  if (!ctx.cfg.simulate) throw Error(ErrorKind::ConfigInvalid, "simulate: section required by this stage");
  auto dgp = *ctx.cfg.simulate;
  if (!ctx.cfg.simulate_seed_given) dgp.seed = ctx.derived_seed("simulate");
  const auto lattice = simgen::make_lattice(dgp.rows, dgp.cols);
  const auto g = simgen::generate(dgp, lattice);
  ctx.write("panel.csv", aggregate::write_panel(g.panel));
  ctx.write("panel_meta.json", dump(aggregate::panel_meta(g.panel)));
  ctx.write("weights.json", dump(spatial::to_json(lattice.weights)));
  ctx.write("geometry.geojson", dump(geo::to_geojson(lattice.shapes)));
  ctx.write("truth.json", dump(g.truth()));
  spdlog::info("simulate: {}x{} lattice, rho={}, seed={}", dgp.rows, dgp.cols, dgp.rho_true, dgp.seed);
}

// -- fit ---------------------------------------------------------------------

void stage_fit(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  const auto panel = ctx.panel();
  const auto covs = ctx.covariates(panel);
  std::vector<econ::ModelSpec> specs;
  for (auto& s : econ::ladder_specs(covs))
    if (std::find(cfg.comparisons.begin(), cfg.comparisons.end(), s.comparison) != cfg.comparisons.end() &&
        std::find(cfg.variants.begin(), cfg.variants.end(), s.variant) != cfg.variants.end())
      specs.push_back(std::move(s));
  const bool need_w = std::any_of(specs.begin(), specs.end(), [](const auto& s) { return s.variant == econ::Variant::SAR; });
  const auto w = ctx.weights(need_w);

  const auto cells = econ::contrast_ladder(panel, w ? &*w : nullptr, specs, {cfg.scope, cfg.sd, cfg.ols_se, cfg.sar_se});
  ctx.write("ladder.csv", econ::write_ladder_csv(cells));
  ctx.write("ladder.txt", econ::format_ladder_table(cells));
  ctx.write("fig_ladder.svg", svg::ladder_figure(cells));

  json meta;
  meta["covariates"] = covs;
  meta["standardization"] = {{"scope", aggregate::to_string(cfg.scope)}, {"sd", to_string(cfg.sd)}};
  meta["se"] = {{"ols", econ::to_string(cfg.ols_se)}, {"sar", econ::to_string(cfg.sar_se)}};
  meta["se_note"] = "SAR rows report the configured SE; both model-based and zip-clustered SEs are listed below";
  json sar = json::array(), failed = json::array(), warnings = json::array();
  std::size_t n_failed = 0;
  for (const auto& c : cells) {
    const json key{{"outcome", to_string(c.spec.outcome)}, {"approach", to_string(c.spec.approach)},
                   {"comparison", to_string(c.spec.comparison)}, {"variant", econ::to_string(c.spec.variant)}};
    if (!c.fit) {
      ++n_failed;
      auto k = key;
      k["error"] = c.error;
      failed.push_back(k);
      continue;
    }
    for (const auto& wmsg : c.fit->warnings) {
      auto k = key;
      k["warning"] = wmsg;
      warnings.push_back(k);
    }
    if (c.spec.variant == econ::Variant::SAR) {
      auto k = key;
      k["se_delta"] = format_sig6(c.fit->se_delta);
      k["se_type"] = econ::to_string(c.fit->se_type);
      k["se_delta_clustered"] = c.fit->se_delta_clustered ? json(format_sig6(*c.fit->se_delta_clustered)) : json();
      k["rho"] = c.fit->rho ? json(format_sig6(*c.fit->rho)) : json();
      k["se_rho"] = c.fit->se_rho ? json(format_sig6(*c.fit->se_rho)) : json();
      sar.push_back(k);
    }
  }
  meta["sar_standard_errors"] = sar;
  meta["failed_cells"] = failed;
  meta["warnings"] = warnings;
  ctx.write("ladder_meta.json", dump(meta));
  ctx.partial = n_failed > 0;
  spdlog::info("fit: {} cells, {} failed", cells.size(), n_failed);
}

// -- stack -------------------------------------------------------------------

void stage_stack(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  const auto panel = ctx.panel();
  const auto covs = ctx.covariates(panel);
  const bool need_w = std::find(cfg.stack_specs.begin(), cfg.stack_specs.end(), stackinf::StackSpec::SAR) !=
                      cfg.stack_specs.end();
  const auto w = ctx.weights(need_w);

  json verdicts = json::array();
  csv::Writer fits({"outcome", "comparison", "spec", "n_units", "delta0", "se_delta0", "theta_mllm", "se_theta_mllm",
                    "theta_segmentation", "se_theta_segmentation", "rho", "status"});
  std::size_t n_failed = 0;
  for (Outcome o : cfg.stack_outcomes)
    for (Comparison cmp : cfg.comparisons) {
      const std::string tag = std::string(to_string(o)) + "_" + std::string(to_string(cmp));
      const auto sample = aggregate::restrict_panel(panel, {cmp, cfg.scope, cfg.sd});
      std::string draws_csv;
      for (auto spec : cfg.stack_specs) {
        const std::string name = std::string(stackinf::to_string(spec));
        try {
          const auto* wp = spec == stackinf::StackSpec::SAR ? &*w : nullptr;
          const auto data = stackinf::stack_panel(sample, o, cmp, covs, wp);
          stackinf::BootstrapOptions bo;
          bo.B = cfg.B;
          bo.seed = ctx.derived_seed(tag + "|" + name);
          bo.fit.spec = spec;
          bo.max_failure_share = cfg.max_failure_share;
          const auto dist = stackinf::cluster_bootstrap(data, bo, wp);
          auto csv_text = stackinf::write_draws_csv(dist);
          if (!draws_csv.empty()) csv_text.erase(0, csv_text.find('\n') + 1);
          draws_csv += csv_text;
          auto v = stackinf::equivalence_json(dist, o, cmp);
          verdicts.push_back(v);
          const auto& p = dist.point;
          auto theta_of = [&](Approach a, bool se) {
            for (int i = 0; i < 2; ++i)
              if (p.others[static_cast<std::size_t>(i)] == a)
                return format_sig6(se ? p.se_theta[static_cast<std::size_t>(i)] : p.theta[static_cast<std::size_t>(i)]);
            return std::string("NA");
          };
          fits.add_row({std::string(to_string(o)), std::string(to_string(cmp)), name, std::to_string(p.n_units),
                        format_sig6(p.delta0), format_sig6(p.se_delta0), theta_of(Approach::Mllm, false),
                        theta_of(Approach::Mllm, true), theta_of(Approach::Segmentation, false),
                        theta_of(Approach::Segmentation, true), p.rho ? format_sig6(*p.rho) : "NA", "ok"});
          ctx.write("fig_violin_" + tag + "_" + name + ".svg", svg::violin_figure(dist, o, cmp));
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::StageInputMissing) throw;
          ++n_failed;
          spdlog::warn("stack {} {}: {}", tag, name, e.what());
          fits.add_row({std::string(to_string(o)), std::string(to_string(cmp)), name, "NA", "NA", "NA", "NA", "NA",
                        "NA", "NA", "NA", e.what()});
        }
      }
      if (!draws_csv.empty()) ctx.write(fs::path(tag) / "bootstrap_draws.csv", draws_csv);
    }
  json eq;
  eq["B"] = cfg.B;
  eq["seed"] = cfg.seed;
  eq["results"] = verdicts;
  ctx.write("equivalence.json", dump(eq));
  ctx.write("stacked_fits.csv", fits.str());
  ctx.partial = n_failed > 0;
  spdlog::info("stack: {} fits, {} failed", verdicts.size(), n_failed);
}

// -- quantile ----------------------------------------------------------------

void stage_quantile(Ctx& ctx) {
  const auto& cfg = ctx.cfg;
  const auto panel = ctx.panel();
  const auto covs = ctx.covariates(panel);
  const auto r2 = quantfit::r2_ladder(panel, covs, {cfg.quantile_B, ctx.derived_seed("r2")});
  const auto qg = quantfit::quantile_grid(panel, cfg.taus, {cfg.quantile_B, ctx.derived_seed("quantile")});
  ctx.write("r2_ladder.csv", quantfit::write_r2_csv(r2));
  ctx.write("quantile_grid.csv", quantfit::write_quantile_csv(qg));
  ctx.write("fig_explanatory.svg", svg::explanatory_figure(r2, panel));
  ctx.write("fig_quantile.svg", svg::quantile_figure(qg));
  json meta;
  meta["B"] = cfg.quantile_B;
  meta["B_note"] = "published panel A caption states B=1000 while the text uses B=500; B is configurable";
  meta["taus"] = cfg.taus;
  meta["covariates"] = covs;
  meta["r2_statistic"] = "adjusted R2 on the common complete-case sample";
  meta["pseudo_r2"] = "1 - V(tau)/V0(tau), V0 from the intercept-only fit";
  std::size_t n_failed = 0;
  for (const auto& c : r2) n_failed += !c.error.empty();
  for (const auto& c : qg) n_failed += !c.error.empty();
  meta["failed_cells"] = n_failed;
  ctx.write("quantile_meta.json", dump(meta));
  ctx.partial = n_failed > 0;
}

// -- report ------------------------------------------------------------------

void stage_report(Ctx& ctx) {
  auto copy = [&](Stage from, const fs::path& name, const fs::path& to) {
    const auto src = ctx.dir(from) / name;
    if (!fs::exists(src)) return false;
    ctx.write(to, ctx.read(src));
    return true;
  };
  std::vector<std::string> missing;
  auto note = [&](bool ok, const std::string& what) {
    if (!ok) missing.push_back(what);
  };

  const auto panel = ctx.panel();
  // Sample composition by group: CBG counts, image weights, raw means.
  {
    csv::Writer t({"holc_group", "n_cbgs", "images", "authoritative_poverty", "mllm_poverty", "segmentation_poverty",
                   "authoritative_canopy", "mllm_canopy", "segmentation_canopy"});
    for (HolcGroup g : {HolcGroup::Redlined, HolcGroup::Ideal, HolcGroup::StableDeclining}) {
      std::array<double, 3> pov{}, can{};
      std::size_t n = 0;
      long long images = 0;
      for (Approach a : kApproaches)
        for (const auto* r : panel.layer(a)) {
          if (r->holc_group != g) continue;
          const auto ai = static_cast<std::size_t>(a);
          pov[ai] += r->poverty_raw;
          can[ai] += r->canopy_raw;
          if (a == Approach::Authoritative) {
            ++n;
            images += r->weight_images;
          }
        }
      auto mean = [&](double s) { return n ? format_sig6(s / static_cast<double>(n)) : std::string("NA"); };
      t.add_row({std::string(to_string(g)), std::to_string(n), std::to_string(images), mean(pov[0]), mean(pov[1]),
                 mean(pov[2]), mean(can[0]), mean(can[1]), mean(can[2])});
    }
    ctx.write("tables/sample_by_group.csv", t.str());
  }
  note(copy(Stage::Fit, "ladder.csv", "tables/effects_ladder.csv"), "fit/ladder.csv");
  copy(Stage::Fit, "ladder.txt", "tables/effects_ladder.txt");
  note(copy(Stage::Stack, "stacked_fits.csv", "tables/stacked_fits.csv"), "stack/stacked_fits.csv");
  note(copy(Stage::Quantile, "r2_ladder.csv", "tables/r2_ladder.csv"), "quantile/r2_ladder.csv");
  copy(Stage::Quantile, "quantile_grid.csv", "tables/quantile_grid.csv");

  const auto eq_path = ctx.dir(Stage::Stack) / "equivalence.json";
  if (fs::exists(eq_path)) {
    const auto eq = ctx.load_json_recorded(eq_path);
    csv::Writer t({"outcome", "comparison", "spec", "approach", "theta_mean", "ci_low", "ci_high", "verdict"});
    for (const auto& r : eq.at("results"))
      for (const auto& v : r.at("tests"))
        t.add_row({r.at("outcome").get<std::string>(), r.at("comparison").get<std::string>(),
                   r.at("spec").get<std::string>(), v.at("approach").get<std::string>(),
                   format_sig6(v.at("theta_mean").get<double>()), format_sig6(v.at("ci_low").get<double>()),
                   format_sig6(v.at("ci_high").get<double>()), v.at("verdict").get<std::string>()});
    ctx.write("tables/equivalence.csv", t.str());
    copy(Stage::Stack, "equivalence.json", "tables/equivalence.json");
  }

  note(copy(Stage::Fit, "fig_ladder.svg", "figures/effects_ladder.svg"), "fit/fig_ladder.svg");
  if (fs::exists(ctx.dir(Stage::Stack)))
    for (const auto& e : fs::directory_iterator(ctx.dir(Stage::Stack))) {
      const auto name = e.path().filename().string();
      if (name.rfind("fig_violin_", 0) == 0) copy(Stage::Stack, name, fs::path("figures") / name.substr(4));
    }
  copy(Stage::Quantile, "fig_explanatory.svg", "figures/explanatory_power.svg");
  copy(Stage::Quantile, "fig_quantile.svg", "figures/quantile_pseudo_r2.svg");

  copy(ctx.source(), "panel_meta.json", "audit/panel_meta.json");
  copy(Stage::Fit, "ladder_meta.json", "audit/ladder_meta.json");
  copy(Stage::Quantile, "quantile_meta.json", "audit/quantile_meta.json");
  if (ctx.cfg.simulate) copy(Stage::Simulate, "truth.json", "audit/truth.json");
  if (!ctx.cfg.simulate) {
    copy(Stage::Elicit, "prompt_cache.jsonl", "audit/prompt_cache.jsonl");
    copy(Stage::Elicit, "validation_log.jsonl", "audit/validation_log.jsonl");
    copy(Stage::Elicit, "elicit_meta.json", "audit/elicit_meta.json");
    copy(Stage::Ingest, "cbg_filter.json", "audit/cbg_filter.json");
  }
  json idx;
  idx["missing"] = missing;
  ctx.write("audit/report_index.json", dump(idx));
  for (const auto& m : missing) spdlog::warn("report: missing input {}", m);
}

using StageFn = void (*)(Ctx&);
StageFn stage_fn(Stage s) {
  switch (s) {
    case Stage::Ingest: return stage_ingest;
    case Stage::Elicit: return stage_elicit;
    case Stage::Aggregate: return stage_aggregate;
    case Stage::Weights: return stage_weights;
    case Stage::Simulate: return stage_simulate;
    case Stage::Fit: return stage_fit;
    case Stage::Stack: return stage_stack;
    case Stage::Quantile: return stage_quantile;
    case Stage::Report: return stage_report;
  }
  return nullptr;
}

json versions() {
  json v;
  v["nbhd"] = NBHD_VERSION;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  v["spdlog"] = std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) + "." +
                std::to_string(SPDLOG_VER_PATCH);
#if defined(__clang__)
  v["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  v["compiler"] = std::string("gcc ") + __VERSION__;
#endif
  return v;
}

bool stamp_current(const fs::path& stamp_file, const fs::path& root, const std::string& config_hash) {
  if (!fs::exists(stamp_file)) return false;
  json stamp;
  try {
    stamp = json::parse(read_file(stamp_file));
  } catch (...) {
    return false;
  }
  if (stamp.value("config_hash", "") != config_hash) return false;
  for (const auto& [path, hash] : stamp.at("inputs").items())
    if (!fs::exists(path) || sha256_file(path) != hash.get<std::string>()) return false;
  for (const auto& [rel, hash] : stamp.at("outputs").items())
    if (!fs::exists(root / rel) || sha256_file(root / rel) != hash.get<std::string>()) return false;
  return true;
}

}  // namespace

RunResult run(const RunConfig& cfg, const std::vector<Stage>& requested, const RunOptions& opts) {
  RunResult result;
  std::vector<Stage> stages;
  for (Stage s : kStageOrder)
    if (std::find(requested.begin(), requested.end(), s) != requested.end()) stages.push_back(s);

  if (cfg.workers > 0) set_worker_count(cfg.workers);
  const fs::path root = cfg.out_dir;
  fs::create_directories(root);
  const auto cfg_json = to_json(cfg);
  auto hashed = cfg_json;
  hashed.erase("out_dir");
  const auto config_hash = sha256_hex(hashed.dump());

  const auto manifest_path = root / "run_manifest.json";
  json manifest;
  if (fs::exists(manifest_path)) {
    try {
      manifest = json::parse(read_file(manifest_path));
    } catch (...) {
      manifest = json();
    }
    if (!manifest.is_object() || manifest.value("config_hash", "") != config_hash) manifest = json();
  }
  manifest["config_hash"] = config_hash;
  manifest["config"] = cfg_json;
  manifest["versions"] = versions();
  if (!manifest.contains("stages")) manifest["stages"] = json::object();
  if (!manifest.contains("inputs")) manifest["inputs"] = json::object();

  for (Stage s : stages) {
    StageReport rep;
    rep.stage = s;
    Ctx ctx{cfg, s, root, {}, {}, false};
    const auto stamp_file = ctx.own() / ".stamp.json";
    const auto t0 = std::chrono::steady_clock::now();
    if (opts.resume && stamp_current(stamp_file, root, config_hash)) {
      rep.status = "skipped";
      spdlog::info("{}: inputs unchanged, skipped", to_string(s));
      result.stages.push_back(rep);
      manifest["stages"][std::string(to_string(s))]["status"] = "skipped";
      continue;
    }
    try {
      fs::create_directories(ctx.own());
      stage_fn(s)(ctx);
      rep.status = ctx.partial ? "partial" : "ok";
      if (ctx.partial) result.exit_code = kExitPartial;
    } catch (const std::exception& e) {
      rep.status = "failed";
      rep.error = e.what();
      result.exit_code = exit_code_for(e);
      spdlog::error("{}: {}", to_string(s), e.what());
    }
    rep.duration_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.stages.push_back(rep);

    json entry;
    entry["status"] = rep.status;
    entry["duration_ms"] = rep.duration_ms;
    entry["depends_on"] = json::array();
    for (Stage d : depends_on(cfg, s)) entry["depends_on"].push_back(to_string(d));
    entry["inputs"] = ctx.inputs;
    entry["outputs"] = ctx.outputs;
    if (!rep.error.empty()) entry["error"] = rep.error;
    manifest["stages"][std::string(to_string(s))] = entry;
    for (const auto& [p, h] : ctx.inputs)
      if (p.rfind(root.lexically_normal().string(), 0) != 0) manifest["inputs"][p] = h;

    if (rep.status == "failed") break;
    json stamp{{"config_hash", config_hash}, {"inputs", ctx.inputs}, {"outputs", ctx.outputs}};
    write_file_atomic(stamp_file, dump(stamp));
  }
  manifest["exit_code"] = result.exit_code;
  write_file_atomic(manifest_path, dump(manifest));
  return result;
}

}  // namespace nbhd::pipeline
