#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "nbhd/elicit.hpp"
#include "nbhd/error.hpp"

namespace nbhd::elicit {

using nlohmann::json;

std::string_view to_string(Band b) {
  switch (b) {
    case Band::VeryLow: return "very_low";
    case Band::Low: return "low";
    case Band::Moderate: return "moderate";
    case Band::High: return "high";
    case Band::VeryHigh: return "very_high";
    case Band::Unknown: return "unknown";
  }
  return "?";
}

Band parse_band(std::string_view s) {
  for (auto b : {Band::VeryLow, Band::Low, Band::Moderate, Band::High, Band::VeryHigh, Band::Unknown})
    if (to_string(b) == s) return b;
  throw Error(ErrorKind::UnknownToken, "band '" + std::string(s) + "'");
}

std::pair<int, int> band_bounds_cents(Band b) {
  switch (b) {
    case Band::VeryLow: return {0, 20};
    case Band::Low: return {20, 40};
    case Band::Moderate: return {40, 60};
    case Band::High: return {60, 80};
    case Band::VeryHigh: return {80, 100};
    case Band::Unknown: break;
  }
  return {0, 0};
}

namespace {

[[noreturn]] void schema(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::SchemaViolation, field + ": " + why);
}

json parse_object(std::string_view raw) {
  json doc;
  try {
    doc = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::NotJson, e.what());
  }
  if (!doc.is_object()) schema("<root>", "reply must be a JSON object");
  return doc;
}

void check_keys(const json& doc, std::initializer_list<std::string_view> required,
                std::initializer_list<std::string_view> optional) {
  for (auto k : required)
    if (!doc.contains(k)) schema(std::string(k), "missing");
  for (const auto& [key, _] : doc.items()) {
    const bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                       std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) schema(key, "unexpected key");
  }
}

int get_count(const json& doc, const std::string& field) {
  const auto& v = doc.at(field);
  if (!v.is_number_integer()) schema(field, "must be an integer");
  const auto n = v.get<long long>();
  if (n < 0) schema(field, "must be >= 0");
  return static_cast<int>(n);
}

std::size_t utf8_length(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

std::string get_notes(const json& doc) {
  if (!doc.contains("notes") || doc.at("notes").is_null()) return {};
  const auto& v = doc.at("notes");
  if (!v.is_string()) schema("notes", "must be a string");
  auto s = v.get<std::string>();
  if (utf8_length(s) > kMaxNotesChars) schema("notes", "longer than 100 characters");
  return s;
}

template <std::size_t N>
bool in_list(const std::array<std::string_view, N>& list, std::string_view token) {
  return std::find(list.begin(), list.end(), token) != list.end();
}

// Canonical token form: lowercase snake_case.
bool canonical_token(std::string_view t) {
  if (t.empty() || t.size() > 40 || !(t[0] >= 'a' && t[0] <= 'z')) return false;
  return std::all_of(t.begin(), t.end(), [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; });
}

template <class Accept>
std::vector<std::string> get_tokens(const json& doc, const std::string& field, Accept&& accept) {
  const auto& v = doc.at(field);
  if (!v.is_array()) schema(field, "must be an array");
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& item : v) {
    if (!item.is_string()) schema(field, "tokens must be strings");
    auto t = item.get<std::string>();
    if (!accept(t)) throw Error(ErrorKind::UnknownToken, field + ": '" + t + "'");
    if (!seen.insert(t).second) schema(field, "duplicate token '" + t + "'");
    out.push_back(std::move(t));
  }
  return out;
}

void check_count(const std::string& field, int declared, std::size_t actual) {
  if (static_cast<std::size_t>(declared) != actual)
    throw Error(ErrorKind::CountMismatch,
                field + "=" + std::to_string(declared) + " but list has " + std::to_string(actual) + " tokens");
}

// Shared band/value rules for Prompts 3 and 4. `zero_evidence` is nullopt when
// the evidence needed to judge an exact 0.00 is unavailable.
BandedEstimate check_banded(const json& doc, const std::string& band_key, const std::string& value_key,
                            std::optional<bool> zero_evidence) {
  BandedEstimate est;
  const auto& bv = doc.at(band_key);
  if (!bv.is_string()) schema(band_key, "must be a string");
  try {
    est.band = parse_band(bv.get<std::string>());
  } catch (const Error&) {
    throw Error(ErrorKind::UnknownToken, band_key + ": '" + bv.get<std::string>() + "'");
  }
  const auto& vv = doc.at(value_key);
  if (est.band == Band::Unknown) {
    if (!vv.is_null()) schema(value_key, "must be null when band is unknown");
    return est;
  }
  if (vv.is_null()) schema(value_key, "null requires band 'unknown'");
  if (!vv.is_number()) schema(value_key, "must be a number or null");
  const double v = vv.get<double>();
  if (!(v >= 0.0 && v <= 1.0)) schema(value_key, "outside [0.00, 1.00]");
  const double cents_f = v * 100.0;
  const long cents = std::lround(cents_f);
  if (std::abs(cents_f - static_cast<double>(cents)) > 1e-6) schema(value_key, "not rounded to two decimals");
  est.value = static_cast<double>(cents) / 100.0;

  if (cents > 0 && cents % 20 == 0) throw Error(ErrorKind::BandCutpoint, value_key + "=" + vv.dump());
  if (cents == 0) {
    if (est.band != Band::VeryLow)
      throw Error(ErrorKind::BandValueMismatch, value_key + "=0.00 outside band " + std::string(to_string(est.band)));
    if (zero_evidence.has_value() && !*zero_evidence)
      throw Error(ErrorKind::IllegalZero, value_key + "=0.00 with nonzero evidence");
    return est;
  }
  const auto [lo, hi] = band_bounds_cents(est.band);
  if (!(cents > lo && cents < hi))
    throw Error(ErrorKind::BandValueMismatch,
                value_key + "=" + vv.dump() + " outside band " + std::string(to_string(est.band)));
  return est;
}

}  // namespace

Prompt1Response validate_prompt1(std::string_view raw_json) {
  const auto doc = parse_object(raw_json);
  check_keys(doc, {"structure_type", "facade_indicators", "n_facade_indicators"}, {"notes"});
  Prompt1Response r;
  const auto& st = doc.at("structure_type");
  if (!st.is_string()) schema("structure_type", "must be a string");
  r.structure_type = st.get<std::string>();
  r.n_facade_indicators = get_count(doc, "n_facade_indicators");
  r.notes = get_notes(doc);
  r.facade_indicators = get_tokens(doc, "facade_indicators", canonical_token);
  if (!in_list(kStructureTypes, r.structure_type))
    throw Error(ErrorKind::UnknownToken, "structure_type: '" + r.structure_type + "'");
  check_count("n_facade_indicators", r.n_facade_indicators, r.facade_indicators.size());
  return r;
}

Prompt2Response validate_prompt2(std::string_view raw_json) {
  const auto doc = parse_object(raw_json);
  check_keys(doc, {"env_indicators", "n_env_indicators", "canopy_indicators", "n_canopy_indicators"}, {"notes"});
  Prompt2Response r;
  r.n_env_indicators = get_count(doc, "n_env_indicators");
  r.n_canopy_indicators = get_count(doc, "n_canopy_indicators");
  r.notes = get_notes(doc);
  r.env_indicators = get_tokens(doc, "env_indicators", [](const std::string& t) { return in_list(kEnvTokens, t); });
  r.canopy_indicators =
      get_tokens(doc, "canopy_indicators", [](const std::string& t) { return in_list(kCanopyTokens, t); });
  check_count("n_env_indicators", r.n_env_indicators, r.env_indicators.size());
  check_count("n_canopy_indicators", r.n_canopy_indicators, r.canopy_indicators.size());
  return r;
}

BandedEstimate validate_prompt3(std::string_view raw_json, const ChainContext& ctx) {
  const auto doc = parse_object(raw_json);
  check_keys(doc, {"canopy_band", "canopy_share_0_1"}, {"notes"});
  const std::string notes = get_notes(doc);
  std::optional<bool> zero_ok;
  if (ctx.prompt2) zero_ok = ctx.prompt2->n_canopy_indicators == 0;
  auto est = check_banded(doc, "canopy_band", "canopy_share_0_1", zero_ok);
  est.notes = notes;
  return est;
}

BandedEstimate validate_prompt4(std::string_view raw_json, const ChainContext& ctx) {
  const auto doc = parse_object(raw_json);
  check_keys(doc, {"poverty_band", "poverty_proxy_0_1", "evidence_counts"}, {"notes"});
  const std::string notes = get_notes(doc);
  const auto& ev = doc.at("evidence_counts");
  if (!ev.is_object()) schema("evidence_counts", "must be an object");
  check_keys(ev, {"n_facade_indicators", "n_env_indicators"}, {});
  const int n_facade = get_count(ev, "n_facade_indicators");
  const int n_env = get_count(ev, "n_env_indicators");
  if (ctx.prompt1 && ctx.prompt1->n_facade_indicators != n_facade)
    throw Error(ErrorKind::CountMismatch, "evidence_counts.n_facade_indicators differs from Prompt 1");
  if (ctx.prompt2 && ctx.prompt2->n_env_indicators != n_env)
    throw Error(ErrorKind::CountMismatch, "evidence_counts.n_env_indicators differs from Prompt 2");
  auto est = check_banded(doc, "poverty_band", "poverty_proxy_0_1", n_facade == 0 && n_env == 0);
  est.evidence_counts = {{"n_facade_indicators", n_facade}, {"n_env_indicators", n_env}};
  est.notes = notes;
  return est;
}

ValidatedResponse validate_response(int prompt_id, std::string_view raw_json, const ChainContext& ctx) {
  switch (prompt_id) {
    case 1: return validate_prompt1(raw_json);
    case 2: return validate_prompt2(raw_json);
    case 3: return validate_prompt3(raw_json, ctx);
    case 4: return validate_prompt4(raw_json, ctx);
    default: throw Error(ErrorKind::ConfigInvalid, "prompt_id must be 1..4");
  }
}

}  // namespace nbhd::elicit
