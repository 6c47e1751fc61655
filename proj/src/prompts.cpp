#include <nlohmann/json.hpp>

#include "nbhd/elicit.hpp"
#include "nbhd/error.hpp"

namespace nbhd::elicit {

namespace {

constexpr std::string_view kPreamble = R"P(You are an urban auditor producing an area-level proxy from a single street-level image. Use only visible, non-sensitive street-view features (e.g., structures, lots, roads, vegetation, street furniture, lighting). Do not infer characteristics of identifiable people. All numeric outputs must follow the stated ranges and be rounded to two decimals. Return only valid JSON matching the prompt's schema.
Each prompt must return only the JSON object described in its "Answer (JSON)" block (no extra text).
)P";

constexpr std::string_view kPrompt1 = R"P(
Prompt 1: Housing Structure and Facade Indicators
Task. Identify the primary residential structure type (if any) and facade-level maintenance indicators (non-sensitive, visual cues only).
Allowed structure types (choose one).
"single_family_detached","duplex","mobile_home","apartment",
"townhouse","mixed_use","other","unknown","none_visible"
Answer (JSON).
{
  "structure_type": "<one allowed value>",
  "facade_indicators": ["<zero or more canonical tokens>"],
  "n_facade_indicators": <integer >= 0>,
  "notes": "<<=100 chars, optional>"
}
)P";

constexpr std::string_view kPrompt2 = R"P(
Prompt 2: Environmental Deprivation Indicators
Task. Record neighborhood-scale environmental indicators associated with lower infrastructure quality or maintenance (non-sensitive, visual cues only). Also record whether overhead canopy elements are present.
Canonical environmental indicators (choose zero or more).
"dirt_lot","overgrowth","debris","landscaping_absent",
"vehicle_damaged","vehicle_abandoned","very_old_vehicle",
"driveway_broken","cracked_sidewalk","poor_lighting",
"potholes","window_bars","perimeter_fence","clutter_disrepair"
Canopy indicator tokens (choose zero or more).
"tree","palm","large_shrub"
Answer (JSON).
{
  "env_indicators": ["<zero or more canonical tokens from the list above>"],
  "n_env_indicators": <integer >= 0>,
  "canopy_indicators": ["<zero or more of: tree, palm, large_shrub>"],
  "n_canopy_indicators": <integer >= 0>,
  "notes": "<<=100 chars, optional>"
}
)P";

constexpr std::string_view kPrompt3 = R"P(
Prompt 3: Tree Canopy Coverage (Chained Estimation)
Task. Using the provided indicators, estimate the local-scene share of visible area covered by overhead canopy only (mature trees, palms, large shrubs). Exclude grass, small bushes, flowerbeds, and groundcover.
Calibration anchors (choose one band, then give a numeric).
very_low (0.00-0.20), low (0.20-0.40), moderate (0.40-0.60),
high (0.60-0.80), very_high (0.80-1.00), unknown
Critical numeric rule. The numeric estimate canopy_share_0_1 must be a continuous value inside the chosen band (e.g., if low, use 0.21-0.39). Do not return band cutpoints (0.20, 0.40, etc.) as placeholders. Use exact 0.00 only if the scene unambiguously shows no canopy ("n_canopy_indicators": 0).
Answer (JSON).
{
  "canopy_band": "very_low" | "low" | "moderate" | "high" | "very_high" | "unknown",
  "canopy_share_0_1": <float in [0.00, 1.00] or null>,
  "notes": "<<=100 chars, optional>"
}
Rounding. Report canopy_share_0_1 to two decimals. If information is insufficient, set "canopy_band":"unknown" and "canopy_share_0_1": null.
)P";

constexpr std::string_view kPrompt4 = R"P(
Prompt 4: Area-Level Poverty Prevalence Proxy (Chained Re-Estimation)
Task. Using the provided structure type and the facade/environmental indicators, produce a local-scene, area-level proxy for the share of households below U.S. federal poverty thresholds (2023). Use only visible built-environment cues; do not infer person-level attributes.
Calibration anchors (choose one band, then give a numeric).
very_low (0.00-0.20), low (0.20-0.40), moderate (0.40-0.60),
high (0.60-0.80), very_high (0.80-1.00), unknown
Critical numeric rule. The numeric estimate poverty_proxy_0_1 must be a continuous value inside the chosen band (e.g., if moderate, use 0.41-0.59). Do not return band midpoints or cutpoints as placeholders. Use exact 0.00 only if no facade or environmental indicators of deprivation are present ("n_facade_indicators": 0, "n_env_indicators": 0).
Answer (JSON).
{
  "poverty_band": "very_low" | "low" | "moderate" | "high" | "very_high" | "unknown",
  "poverty_proxy_0_1": <float in [0.00, 1.00] or null>,
  "evidence_counts": {
    "n_facade_indicators": <int>,
    "n_env_indicators": <int>
  },
  "notes": "<<=100 chars, optional>"
}
Rounding. Report poverty_proxy_0_1 to two decimals. If information is insufficient, set "poverty_band":"unknown" and "poverty_proxy_0_1": null.
)P";

std::string variables_block(const nlohmann::ordered_json& vars) {
  return "\nYou will be provided with (as variables):\n" + vars.dump(2) + "\n";
}

}  // namespace

std::string prompt_text(int prompt_id, const ChainContext& ctx) {
  std::string out(kPreamble);
  switch (prompt_id) {
    case 1:
      out += kPrompt1;
      break;
    case 2:
      out += kPrompt2;
      break;
    case 3: {
      if (!ctx.prompt2) throw Error(ErrorKind::ConfigInvalid, "Prompt 3 needs Prompt 2 variables");
      nlohmann::ordered_json vars;
      vars["canopy_indicators"] = ctx.prompt2->canopy_indicators;
      vars["n_canopy_indicators"] = ctx.prompt2->n_canopy_indicators;
      out += kPrompt3;
      out += variables_block(vars);
      break;
    }
    case 4: {
      if (!ctx.prompt1 || !ctx.prompt2) throw Error(ErrorKind::ConfigInvalid, "Prompt 4 needs Prompt 1 and 2 variables");
      nlohmann::ordered_json vars;
      vars["structure_type"] = ctx.prompt1->structure_type;
      vars["facade_indicators"] = ctx.prompt1->facade_indicators;
      vars["n_facade_indicators"] = ctx.prompt1->n_facade_indicators;
      vars["env_indicators"] = ctx.prompt2->env_indicators;
      vars["n_env_indicators"] = ctx.prompt2->n_env_indicators;
      out += kPrompt4;
      out += variables_block(vars);
      break;
    }
    default:
      throw Error(ErrorKind::ConfigInvalid, "prompt_id must be 1..4");
  }
  return out;
}

}  // namespace nbhd::elicit
