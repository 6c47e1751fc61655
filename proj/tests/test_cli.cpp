#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "nbhd/elicit.hpp"
#include "nbhd/geometry.hpp"
#include "nbhd/ingest.hpp"
#include "nbhd/pipeline.hpp"
#include "nbhd/quantfit.hpp"
#include "nbhd/simgen.hpp"
#include "nbhd/util.hpp"
#include "test_support.hpp"

#ifndef NBHD_CLI
#define NBHD_CLI "nbhd"
#endif

using namespace nbhd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("nbhd_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + NBHD_CLI + "\" " + args + " --log-level off > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

int cli_raw(const std::string& args) {
  const std::string cmd = std::string("\"") + NBHD_CLI + "\" " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

json load(const fs::path& p) { return json::parse(read_file(p)); }

json small_sim_config() {
  return {{"seed", 5},
          {"simulate", {{"grid", {7, 7}}, {"rho_true", 0.25}, {"approach_bias", {{"segmentation", {{"noise_sd", 0.5}}}}}}},
          {"bootstrap", {{"B", 39}}},
          {"quantile", {{"B", 19}, {"taus", {0.5}}}}};
}

// Raw inputs for a 6x6 lattice of block groups, 3 panoramas of 4 tiles each.
void write_raw_inputs(const fs::path& dir) {
  const auto lat = simgen::make_lattice(6, 6);
  Rng rng(17);
  std::string manifest = "pano_id,cbg_id,year,heading,valid,image_ref\n";
  std::string acs = "cbg_id,acs_poverty,holc_group,zip_code,pop_density_ln,college_pct\n";
  std::string geie = "cbg_id,geie_canopy\n";
  std::string seg = "pano_id,canopy_share,poverty_proxy,tree,road\n";
  const char* groups[] = {"redlined", "ideal", "stable_declining"};
  for (std::size_t i = 0; i < lat.ids.size(); ++i) {
    const auto& id = lat.ids[i];
    const int panos = i == 5 ? 2 : 3;  // one block group falls below 10 images
    for (int p = 0; p < panos; ++p) {
      const std::string pano = id + "_p" + std::to_string(p);
      for (int h = 0; h < 4; ++h)
        manifest += pano + "," + id + ",2023," + std::to_string(h * 90) + ",true," + pano + "_" + std::to_string(h) + ".jpg\n";
      const double tree = 0.1 + 0.5 * rng.uniform();
      seg += pano + "," + format_exact(tree) + "," + format_exact(0.2 + 0.5 * rng.uniform()) + "," + format_exact(tree) +
             "," + format_exact(0.3 * rng.uniform()) + "\n";
    }
    manifest += id + "_old," + id + ",2019,0,true," + id + "_old.jpg\n";
    acs += id + "," + format_exact(0.05 + 0.6 * rng.uniform()) + "," + groups[i % 3] + ",z" + std::to_string(i / 6) + "," +
           format_exact(rng.normal()) + "," + format_exact(rng.uniform()) + "\n";
    geie += id + "," + format_exact(0.05 + 0.5 * rng.uniform()) + "\n";
  }
  write_file_atomic(dir / "manifest.csv", manifest);
  write_file_atomic(dir / "acs.csv", acs);
  write_file_atomic(dir / "geie.csv", geie);
  write_file_atomic(dir / "seg.csv", seg);
  write_file_atomic(dir / "cbg.geojson", geo::to_geojson(lat.shapes).dump());
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("defaults agree with the modules") {
    const pipeline::RunConfig cfg;
    const elicit::PromptChainConfig chain;
    CHECK(cfg.elicit.rounds == chain.rounds);
    CHECK(cfg.elicit.quorum == chain.quorum);
    CHECK(cfg.target_year == ingest::kDefaultTargetYear);
    CHECK(cfg.min_images == ingest::kDefaultMinImages);
    CHECK(cfg.B == stackinf::BootstrapOptions{}.B);
    CHECK(cfg.quantile_B == quantfit::BootOptions{}.B);
    CHECK(cfg.max_failure_share == stackinf::BootstrapOptions{}.max_failure_share);
    CHECK(cfg.taus == std::vector<double>{0.10, 0.25, 0.50, 0.75, 0.90});
    const auto round = pipeline::parse_run_config(pipeline::to_json(cfg));
    CHECK(pipeline::to_json(round) == pipeline::to_json(cfg));
  }

  TEST_CASE("config errors") {
    CHECK(testing::kind_of([] { pipeline::parse_run_config(json{{"bootstrapp", {{"B", 9}}}}); }) ==
          ErrorKind::ConfigInvalid);
    CHECK(testing::kind_of([] { pipeline::parse_run_config(json{{"elicit", {{"rounds", 2}, {"quorum", 3}}}}); }) ==
          ErrorKind::ConfigInvalid);
    CHECK(testing::kind_of([] { pipeline::parse_stages("simulate,fitt"); }) == ErrorKind::ConfigInvalid);
    CHECK(pipeline::parse_stages("report,simulate") ==
          std::vector<pipeline::Stage>{pipeline::Stage::Simulate, pipeline::Stage::Report});

    TempDir t("cfg");
    write_file_atomic(t.path / "bad.json", R"({"seed": 1, "stages": ["simulate"], "colour": 1})");
    CHECK(cli("run --config " + (t.path / "bad.json").string() + " --out " + (t.path / "o").string()) == 2);
    CHECK(cli("run --bogus-flag") == 2);
    CHECK(cli_raw("") == 2);
  }

  TEST_CASE("offline simulate path writes a report bundle") {
    TempDir t("sim");
    write_file_atomic(t.path / "c.json", small_sim_config().dump());
    const auto out = t.path / "run";
    REQUIRE(cli("run --config " + (t.path / "c.json").string() + " --out " + out.string() +
                " --stages simulate,fit,stack,quantile,report") == 0);
    for (const char* f : {"simulate/truth.json", "fit/ladder.csv", "stack/equivalence.json",
                          "stack/poverty_vs_ideal/bootstrap_draws.csv", "quantile/quantile_grid.csv",
                          "report/tables/effects_ladder.csv", "report/tables/equivalence.csv",
                          "report/figures/effects_ladder.svg", "report/audit/truth.json"})
      CHECK_MESSAGE(fs::exists(out / f), f);

    const auto m = load(out / "run_manifest.json");
    CHECK(m["exit_code"] == 0);
    CHECK(m["stages"]["fit"]["depends_on"] == json::array({"simulate"}));
    CHECK(m["stages"]["stack"]["outputs"].size() > 0);
    CHECK(m["stages"]["report"]["status"] == "ok");

    // Resume skips every stage and leaves the outputs untouched.
    const auto before = sha256_file(out / "report/tables/effects_ladder.csv");
    REQUIRE(cli("run --config " + (t.path / "c.json").string() + " --out " + out.string() +
                " --stages simulate,fit,stack,quantile,report --resume") == 0);
    const auto m2 = load(out / "run_manifest.json");
    for (const char* s : {"simulate", "fit", "stack", "quantile", "report"}) {
      CHECK(m2["stages"][s]["status"] == "skipped");
      CHECK(m2["stages"][s]["outputs"] == m["stages"][s]["outputs"]);
    }
    CHECK(sha256_file(out / "report/tables/effects_ladder.csv") == before);
  }

  TEST_CASE("individual subcommands chain through the run root") {
    TempDir t("steps");
    json dgp = {{"grid", {6, 6}}, {"seed", 3}};
    write_file_atomic(t.path / "dgp.json", dgp.dump());
    json rest = small_sim_config();
    rest["simulate"] = dgp;
    write_file_atomic(t.path / "run.json", rest.dump());
    const auto out = (t.path / "r").string();
    CHECK(cli("simulate --config " + (t.path / "dgp.json").string() + " --out " + out) == 0);
    CHECK(fs::exists(t.path / "r/simulate/panel.csv"));
    CHECK(cli("fit --config " + (t.path / "run.json").string() + " --out " + out) == 0);
    CHECK(fs::exists(t.path / "r/fit/ladder.txt"));
  }

  TEST_CASE("fit without weights names the missing input") {
    TempDir t("noweights");
    json sim = small_sim_config();
    write_file_atomic(t.path / "sim.json", sim.dump());
    REQUIRE(cli("simulate --config " + (t.path / "sim.json").string() + " --out " + (t.path / "src").string()) == 0);
    fs::create_directories(t.path / "run/aggregate");
    fs::copy_file(t.path / "src/simulate/panel.csv", t.path / "run/aggregate/panel.csv");
    write_file_atomic(t.path / "plain.json", json{{"seed", 5}}.dump());
    CHECK(cli("fit --config " + (t.path / "plain.json").string() + " --out " + (t.path / "run").string()) == 3);
    const auto m = load(t.path / "run/run_manifest.json");
    const std::string err = m["stages"]["fit"]["error"];
    CHECK(err.find("StageInputMissing") != std::string::npos);
    CHECK(err.find("spatial") != std::string::npos);
  }

  TEST_CASE("raw inputs through the mock endpoint") {
    TempDir t("raw");
    write_raw_inputs(t.path);
    json cfg = {{"seed", 11},
                {"inputs",
                 {{"manifest", "manifest.csv"},
                  {"acs", "acs.csv"},
                  {"geie", "geie.csv"},
                  {"geo", "cbg.geojson"},
                  {"segmentation", "seg.csv"}}},
                {"elicit", {{"rounds", 3}, {"quorum", 2}, {"mock", {{"seed", 4}, {"profile", "mixed"}}}}},
                {"bootstrap", {{"B", 29}, {"specs", {"zip_fe"}}}},
                {"quantile", {{"B", 19}, {"taus", {0.25, 0.75}}}}};
    write_file_atomic(t.path / "cfg.json", cfg.dump());
    const auto out = t.path / "run";
    REQUIRE(cli("run --config " + (t.path / "cfg.json").string() + " --out " + out.string()) == 0);
    const auto filter = load(out / "ingest/cbg_filter.json");
    CHECK(filter["dropped"].size() == 1);
    const auto elicit_meta = load(out / "elicit/elicit_meta.json");
    CHECK(elicit_meta["endpoint"]["kind"] == "mock");
    CHECK(fs::exists(out / "elicit/prompt_cache.jsonl"));
    CHECK(fs::exists(out / "weights/weights.json"));
    CHECK(fs::exists(out / "report/tables/sample_by_group.csv"));
    CHECK(fs::exists(out / "report/audit/prompt_cache.jsonl"));
    const auto m = load(out / "run_manifest.json");
    CHECK(m["inputs"].size() == 5);

    // A second run into a fresh root reproduces every table.
    const auto again = t.path / "again";
    REQUIRE(cli("run --config " + (t.path / "cfg.json").string() + " --out " + again.string()) == 0);
    for (const auto& e : fs::recursive_directory_iterator(out / "report/tables"))
      if (e.is_regular_file())
        CHECK_MESSAGE(read_file(e.path()) == read_file(again / fs::relative(e.path(), out)), e.path().string());
  }
}
