#include <algorithm>

#include <nlohmann/json.hpp>

#include "nbhd/elicit.hpp"
#include "nbhd/endpoint.hpp"
#include "nbhd/error.hpp"
#include "nbhd/util.hpp"

namespace nbhd::elicit {

MockProfile parse_mock_profile(const std::string& s) {
  if (s == "affluent") return MockProfile::Affluent;
  if (s == "deprived") return MockProfile::Deprived;
  if (s == "mixed") return MockProfile::Mixed;
  throw Error(ErrorKind::ConfigInvalid, "mock profile must be affluent, deprived or mixed, got '" + s + "'");
}

namespace {

constexpr std::array<std::string_view, 6> kMockFacadeTokens{"peeling_paint",  "boarded_window", "damaged_roof",
                                                            "broken_gutter", "missing_siding", "graffiti"};

// Everything one round of the chain would "see" in a tile. Prompts 1-4 each
// render their slice, so the chained replies stay mutually consistent.
struct Scene {
  std::string structure_type;
  std::vector<std::string> facade;
  std::vector<std::string> env;
  std::vector<std::string> canopy;
  Band poverty_band = Band::Unknown;
  int poverty_cents = 0;
  Band canopy_band = Band::Unknown;
  int canopy_cents = 0;
};

template <std::size_t N>
std::vector<std::string> pick_tokens(Rng& rng, const std::array<std::string_view, N>& vocab, std::size_t count) {
  std::vector<std::size_t> idx(N);
  for (std::size_t i = 0; i < N; ++i) idx[i] = i;
  count = std::min(count, N);
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.below(N - i)]);
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count));
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) out.emplace_back(vocab[idx[i]]);
  return out;
}

// Inside the open band interval, never on a cutpoint.
int cents_in_band(Rng& rng, Band b) {
  const auto [lo, hi] = band_bounds_cents(b);
  return lo + 1 + static_cast<int>(rng.below(static_cast<std::size_t>(hi - lo - 1)));
}

Band choose_band(Rng& rng, std::uint64_t image_hash, const std::vector<Band>& allowed) {
  // Each image has a preferred band; rounds usually agree with it.
  const Band preferred = allowed[image_hash % allowed.size()];
  if (rng.uniform() < 0.7) return preferred;
  return allowed[rng.below(allowed.size())];
}

Scene make_scene(std::uint64_t seed, MockProfile profile, const std::string& image_ref, int round) {
  const std::uint64_t image_hash = hash_combine(seed, fnv1a64(image_ref));
  Rng rng(hash_combine(image_hash, static_cast<std::uint64_t>(round)));
  Scene s;

  std::vector<Band> poverty_bands, canopy_bands;
  switch (profile) {
    case MockProfile::Affluent:
      poverty_bands = {Band::VeryLow, Band::Low};
      canopy_bands = {Band::Low, Band::Moderate, Band::High};
      break;
    case MockProfile::Deprived:
      poverty_bands = {Band::Moderate, Band::High};
      canopy_bands = {Band::VeryLow, Band::Low};
      break;
    case MockProfile::Mixed:
      poverty_bands = {Band::VeryLow, Band::Low, Band::Moderate, Band::High, Band::VeryHigh};
      canopy_bands = poverty_bands;
      break;
  }

  s.structure_type = std::string(kStructureTypes[rng.below(7)]);  // skip unknown / none_visible
  s.poverty_band = rng.uniform() < 0.02 ? Band::Unknown : choose_band(rng, image_hash, poverty_bands);
  s.canopy_band = rng.uniform() < 0.02 ? Band::Unknown : choose_band(rng, splitmix64(image_hash), canopy_bands);

  // Evidence volume tracks the poverty band.
  const int level = s.poverty_band == Band::Unknown ? 1 : static_cast<int>(s.poverty_band);
  const std::size_t n_env = static_cast<std::size_t>(level) + rng.below(3) - (level > 0 ? 1 : 0);
  s.env = pick_tokens(rng, kEnvTokens, n_env);
  s.facade = pick_tokens(rng, kMockFacadeTokens, rng.below(static_cast<std::size_t>(level) + 1));

  if (s.canopy_band == Band::VeryLow)
    s.canopy = pick_tokens(rng, kCanopyTokens, rng.below(2));
  else
    s.canopy = pick_tokens(rng, kCanopyTokens, 1 + rng.below(3));

  if (s.poverty_band != Band::Unknown) {
    s.poverty_cents = cents_in_band(rng, s.poverty_band);
    if (s.poverty_band == Band::VeryLow && s.facade.empty() && s.env.empty() && rng.uniform() < 0.3)
      s.poverty_cents = 0;
  }
  if (s.canopy_band != Band::Unknown) {
    s.canopy_cents = cents_in_band(rng, s.canopy_band);
    if (s.canopy_band == Band::VeryLow && s.canopy.empty() && rng.uniform() < 0.3) s.canopy_cents = 0;
  }
  return s;
}

nlohmann::json banded_value(Band b, int cents) {
  if (b == Band::Unknown) return nullptr;
  return static_cast<double>(cents) / 100.0;
}

}  // namespace

MockEndpoint::MockEndpoint(std::uint64_t seed, MockProfile profile) : seed_(seed), profile_(profile) {}

std::string MockEndpoint::complete(const EndpointRequest& request) {
  ++calls_;
  const Scene s = make_scene(seed_, profile_, request.image_ref, request.round);
  nlohmann::ordered_json j;
  switch (request.prompt_id) {
    case 1:
      j["structure_type"] = s.structure_type;
      j["facade_indicators"] = s.facade;
      j["n_facade_indicators"] = s.facade.size();
      j["notes"] = "";
      break;
    case 2:
      j["env_indicators"] = s.env;
      j["n_env_indicators"] = s.env.size();
      j["canopy_indicators"] = s.canopy;
      j["n_canopy_indicators"] = s.canopy.size();
      j["notes"] = "";
      break;
    case 3:
      j["canopy_band"] = to_string(s.canopy_band);
      j["canopy_share_0_1"] = banded_value(s.canopy_band, s.canopy_cents);
      j["notes"] = "";
      break;
    case 4:
      j["poverty_band"] = to_string(s.poverty_band);
      j["poverty_proxy_0_1"] = banded_value(s.poverty_band, s.poverty_cents);
      j["evidence_counts"] = {{"n_facade_indicators", s.facade.size()}, {"n_env_indicators", s.env.size()}};
      j["notes"] = "";
      break;
    default:
      throw Error(ErrorKind::ConfigInvalid, "prompt_id must be 1..4");
  }
  return j.dump();
}

std::unique_ptr<MockEndpoint> mock_endpoint(std::uint64_t seed, MockProfile profile) {
  return std::make_unique<MockEndpoint>(seed, profile);
}

}  // namespace nbhd::elicit
