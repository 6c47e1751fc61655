#pragma once

#include <array>
#include <string>
#include <string_view>

namespace nbhd {

/// Measurement approach. Authoritative is the omitted category of the stacked
/// design; the enumerator order is the canonical layer order everywhere.
enum class Approach { Authoritative = 0, Mllm = 1, Segmentation = 2 };
inline constexpr std::array<Approach, 3> kApproaches{Approach::Authoritative, Approach::Mllm,
                                                     Approach::Segmentation};

enum class HolcGroup { Redlined, Ideal, StableDeclining, Unassigned };

/// Which reference group the redlined CBGs are contrasted with. `All` keeps
/// every CBG (used for explanatory-power comparisons).
enum class Comparison { VsIdeal, VsStableDeclining, All };

enum class Outcome { Poverty, Canopy, Si };
inline constexpr std::array<Outcome, 3> kOutcomes{Outcome::Poverty, Outcome::Canopy, Outcome::Si};

std::string_view to_string(Approach a);
std::string_view to_string(HolcGroup g);
std::string_view to_string(Comparison c);
std::string_view to_string(Outcome o);

Approach parse_approach(std::string_view s);
HolcGroup parse_holc_group(std::string_view s);
Comparison parse_comparison(std::string_view s);
Outcome parse_outcome(std::string_view s);

/// Whether a CBG of group `g` belongs to the analysis sample of `c`.
bool in_comparison(HolcGroup g, Comparison c);

}  // namespace nbhd
