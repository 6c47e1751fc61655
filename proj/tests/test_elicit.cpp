#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "nbhd/elicit.hpp"
#include "nbhd/util.hpp"
#include "test_support.hpp"

using namespace nbhd;
using namespace nbhd::elicit;
using nbhd::testing::kind_of;
namespace fs = std::filesystem;

namespace {

ChainContext p4_context(int facade, int env) {
  ChainContext ctx;
  Prompt1Response p1;
  p1.structure_type = "apartment";
  p1.n_facade_indicators = facade;
  for (int i = 0; i < facade; ++i) p1.facade_indicators.push_back("f" + std::to_string(i));
  ctx.prompt1 = p1;
  Prompt2Response p2;
  p2.n_env_indicators = env;
  ctx.prompt2 = p2;
  return ctx;
}

std::string p4_reply(const std::string& band, const std::string& value, int facade, int env) {
  return "{\"poverty_band\": \"" + band + "\", \"poverty_proxy_0_1\": " + value +
         ", \"evidence_counts\": {\"n_facade_indicators\": " + std::to_string(facade) +
         ", \"n_env_indicators\": " + std::to_string(env) + "}}";
}

ingest::PanoramaRecord pano(const std::string& id, int valid) {
  ingest::PanoramaRecord p;
  p.pano_id = id;
  p.cbg_id = "c_" + id;
  p.capture_year = 2023;
  for (int h = 0; h < 4; ++h) p.tiles.push_back({h * 90, h < valid, id + "_" + std::to_string(h * 90) + ".jpg"});
  p.n_valid_tiles = valid;
  return p;
}

// Returns unparseable text on the first attempt of every request.
class FlakyEndpoint final : public EndpointClient {
 public:
  explicit FlakyEndpoint(EndpointClient& inner) : inner_(inner) {}
  std::string complete(const EndpointRequest& r) override {
    ++calls;
    if (r.attempt == 0) return "Sure! Here is the JSON you asked for.";
    return inner_.complete(r);
  }
  std::atomic<int> calls{0};

 private:
  EndpointClient& inner_;
};

class DeadEndpoint final : public EndpointClient {
 public:
  std::string complete(const EndpointRequest&) override { return "not json"; }
};

}  // namespace

TEST_SUITE("elicit") {
  TEST_CASE("prompt 3 band checks") {
    ChainContext ctx;
    Prompt2Response p2;
    p2.n_canopy_indicators = 1;
    p2.canopy_indicators = {"tree"};
    ctx.prompt2 = p2;
    const auto est = validate_prompt3(R"({"canopy_band": "low", "canopy_share_0_1": 0.31})", ctx);
    CHECK(est.band == Band::Low);
    CHECK(est.value == 0.31);
    CHECK(kind_of([&] { validate_prompt3(R"({"canopy_band": "low", "canopy_share_0_1": 0.20})", ctx); }) ==
          ErrorKind::BandCutpoint);
    CHECK(kind_of([&] { validate_prompt3(R"({"canopy_band": "very_high", "canopy_share_0_1": 1.00})", ctx); }) ==
          ErrorKind::BandCutpoint);
    CHECK(kind_of([&] { validate_prompt3(R"({"canopy_band": "low", "canopy_share_0_1": 0.55})", ctx); }) ==
          ErrorKind::BandValueMismatch);
    CHECK(kind_of([&] { validate_prompt3(R"({"canopy_band": "lowish", "canopy_share_0_1": 0.3})", ctx); }) ==
          ErrorKind::UnknownToken);
  }

  TEST_CASE("prompt 4 zero rule") {
    CHECK(validate_prompt4(p4_reply("very_low", "0.00", 0, 0), p4_context(0, 0)).value == 0.0);
    CHECK(kind_of([] { validate_prompt4(p4_reply("very_low", "0.00", 0, 2), p4_context(0, 2)); }) ==
          ErrorKind::IllegalZero);
    CHECK(kind_of([] { validate_prompt4(p4_reply("moderate", "0.47", 1, 2), p4_context(2, 2)); }) ==
          ErrorKind::CountMismatch);
  }

  TEST_CASE("reply parsing errors") {
    CHECK(kind_of([] { validate_response(1, "```json\n{}\n```"); }) == ErrorKind::NotJson);
    CHECK(kind_of([] { validate_response(1, R"({"structure_type": "castle", "facade_indicators": [], "n_facade_indicators": 0})"); }) ==
          ErrorKind::UnknownToken);
    CHECK(kind_of([] { validate_response(2, R"({"env_indicators": ["debris"]})"); }) == ErrorKind::SchemaViolation);
    CHECK(kind_of([] {
            validate_response(2, R"({"env_indicators": ["debris"], "n_env_indicators": 2, "canopy_indicators": [], "n_canopy_indicators": 0})");
          }) == ErrorKind::CountMismatch);
  }

  TEST_CASE("band bounds") {
    CHECK(band_bounds_cents(Band::VeryLow) == std::pair{0, 20});
    CHECK(band_bounds_cents(Band::Low) == std::pair{20, 40});
    CHECK(band_bounds_cents(Band::VeryHigh) == std::pair{80, 100});
    CHECK(parse_band("moderate") == Band::Moderate);
  }

  TEST_CASE("consensus") {
    using V = std::vector<std::optional<double>>;
    V five{0.21, 0.25, 0.23, 0.27, 0.24};
    CHECK(consensus(five, 3).value.value() == doctest::Approx(0.24).epsilon(1e-12));
    V gappy{0.30, std::nullopt, 0.30, 0.30, std::nullopt};
    const auto c = consensus(gappy, 3);
    CHECK(c.value.value() == doctest::Approx(0.30));
    CHECK(c.n_valid == 3);
    V sparse{std::nullopt, std::nullopt, 0.5, std::nullopt, std::nullopt};
    CHECK_FALSE(consensus(sparse, 3).value.has_value());
    // Round order does not matter, bit for bit.
    V mixed{0.11, 0.73, 0.29, 0.57, 0.05};
    const double ref = *consensus(mixed, 3).value;
    std::sort(mixed.begin(), mixed.end());
    do {
      CHECK(*consensus(mixed, 3).value == ref);
    } while (std::next_permutation(mixed.begin(), mixed.end()));
  }

  TEST_CASE("config invariants") {
    PromptChainConfig cfg;
    CHECK_NOTHROW(validate_config(cfg));
    cfg.rounds = 0;
    CHECK(kind_of([&] { validate_config(cfg); }) == ErrorKind::ConfigInvalid);
    cfg.rounds = 5;
    cfg.quorum = 6;
    CHECK(kind_of([&] { validate_config(cfg); }) == ErrorKind::ConfigInvalid);
    cfg.quorum = 3;
    cfg.max_retries = -1;
    CHECK(kind_of([&] { validate_config(cfg); }) == ErrorKind::ConfigInvalid);
  }

  TEST_CASE("mock endpoint is deterministic and always valid") {
    MockEndpoint a(11, MockProfile::Mixed), b(11, MockProfile::Mixed);
    for (int tile = 0; tile < 30; ++tile) {
      ChainContext ctx;
      for (int p = 1; p <= 4; ++p) {
        EndpointRequest r;
        r.image_ref = "img" + std::to_string(tile);
        r.prompt_id = p;
        r.round = tile % 5;
        const auto reply = a.complete(r);
        CHECK(reply == b.complete(r));
        const auto v = validate_response(p, reply, ctx);
        if (p == 1) ctx.prompt1 = std::get<Prompt1Response>(v);
        if (p == 2) ctx.prompt2 = std::get<Prompt2Response>(v);
      }
    }
  }

  TEST_CASE("affluent mock reads poorer than deprived") {
    std::vector<ingest::PanoramaRecord> panos;
    for (int i = 0; i < 25; ++i) panos.push_back(pano("p" + std::to_string(100 + i), 4));
    auto mean_poverty = [&](MockProfile profile) {
      MockEndpoint ep(3, profile);
      PromptChainConfig cfg;
      Elicitor el(cfg, ep);
      double sum = 0.0;
      int n = 0;
      for (const auto& r : el.run_all(panos))
        if (r.consensus_poverty) {
          sum += *r.consensus_poverty;
          ++n;
        }
      CHECK(n == 100);
      CHECK(el.stats().validation_failures == 0);
      return sum / n;
    };
    CHECK(mean_poverty(MockProfile::Affluent) < mean_poverty(MockProfile::Deprived));
  }

  TEST_CASE("warm cache makes no endpoint calls") {
    const fs::path dir = fs::temp_directory_path() / "nbhd_elicit_cache_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto p = pano("pc", 2);
    PromptChainConfig cfg;
    cfg.cache_dir = dir;
    MockEndpoint cold_ep(5, MockProfile::Mixed);
    std::vector<ElicitationResult> cold;
    {
      Elicitor el(cfg, cold_ep);
      cold = el.run_all({p});
      CHECK(cold.size() == 2);
      CHECK(el.stats().endpoint_calls == 2 * 4 * 5);
    }
    MockEndpoint warm_ep(5, MockProfile::Mixed);
    Elicitor el(cfg, warm_ep);
    CHECK(el.run_all({p}) == cold);
    CHECK(warm_ep.calls() == 0);
    CHECK(el.stats().cache_hits == 2 * 4 * 5);
    fs::remove_all(dir);
  }

  TEST_CASE("retries recover from a bad first reply") {
    MockEndpoint mock(9, MockProfile::Mixed);
    FlakyEndpoint flaky(mock);
    PromptChainConfig cfg;
    cfg.max_retries = 1;
    const auto tile = pano("pf", 1).tiles[0];
    const auto r = run_chain("pf", tile, cfg, flaky);
    CHECK(r.n_valid_rounds_poverty == 5);
    CHECK(r.consensus_poverty.has_value());
    CHECK(flaky.calls == 2 * 4 * 5);
  }

  TEST_CASE("exhausted retries leave null rounds") {
    DeadEndpoint dead;
    PromptChainConfig cfg;
    cfg.max_retries = 2;
    const auto tile = pano("pd", 1).tiles[0];
    const auto r = run_chain("pd", tile, cfg, dead);
    CHECK(r.n_valid_rounds_poverty == 0);
    CHECK_FALSE(r.consensus_poverty.has_value());
    CHECK_FALSE(r.consensus_canopy.has_value());
    CHECK_FALSE(r.failures.empty());
  }

  TEST_CASE("results csv round trip") {
    MockEndpoint ep(2, MockProfile::Deprived);
    PromptChainConfig cfg;
    Elicitor el(cfg, ep);
    const auto res = el.run_all({pano("pa", 3), pano("pb", 4)});
    CHECK(parse_results(write_results(res, cfg.rounds)) == res);
  }
}
