#include "nbhd/types.hpp"

#include "nbhd/error.hpp"

namespace nbhd {

std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::Authoritative: return "authoritative";
    case Approach::Mllm: return "mllm";
    case Approach::Segmentation: return "segmentation";
  }
  return "?";
}

std::string_view to_string(HolcGroup g) {
  switch (g) {
    case HolcGroup::Redlined: return "redlined";
    case HolcGroup::Ideal: return "ideal";
    case HolcGroup::StableDeclining: return "stable_declining";
    case HolcGroup::Unassigned: return "unassigned";
  }
  return "?";
}

std::string_view to_string(Comparison c) {
  switch (c) {
    case Comparison::VsIdeal: return "vs_ideal";
    case Comparison::VsStableDeclining: return "vs_stable_declining";
    case Comparison::All: return "all";
  }
  return "?";
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Poverty: return "poverty";
    case Outcome::Canopy: return "canopy";
    case Outcome::Si: return "si";
  }
  return "?";
}

Approach parse_approach(std::string_view s) {
  for (auto a : kApproaches)
    if (to_string(a) == s) return a;
  throw Error(ErrorKind::ConfigInvalid, "unknown approach '" + std::string(s) + "'");
}

HolcGroup parse_holc_group(std::string_view s) {
  // Accept the HOLC letter grades as aliases.
  if (s == "redlined" || s == "D") return HolcGroup::Redlined;
  if (s == "ideal" || s == "A") return HolcGroup::Ideal;
  if (s == "stable_declining" || s == "BC" || s == "B" || s == "C") return HolcGroup::StableDeclining;
  if (s == "unassigned" || s.empty()) return HolcGroup::Unassigned;
  throw Error(ErrorKind::MalformedRow, "unknown holc_group '" + std::string(s) + "'");
}

Comparison parse_comparison(std::string_view s) {
  for (auto c : {Comparison::VsIdeal, Comparison::VsStableDeclining, Comparison::All})
    if (to_string(c) == s) return c;
  throw Error(ErrorKind::ConfigInvalid, "unknown comparison '" + std::string(s) + "'");
}

Outcome parse_outcome(std::string_view s) {
  for (auto o : kOutcomes)
    if (to_string(o) == s) return o;
  throw Error(ErrorKind::ConfigInvalid, "unknown outcome '" + std::string(s) + "'");
}

bool in_comparison(HolcGroup g, Comparison c) {
  switch (c) {
    case Comparison::VsIdeal: return g == HolcGroup::Redlined || g == HolcGroup::Ideal;
    case Comparison::VsStableDeclining:
      return g == HolcGroup::Redlined || g == HolcGroup::StableDeclining;
    case Comparison::All: return true;
  }
  return false;
}

}  // namespace nbhd
