#pragma once

// Structured elicitation of scene indicators from a vision-language endpoint.
//
// Each tile goes through a four-prompt chain per round:
//   1. housing structure and facade indicators
//   2. environmental deprivation and canopy indicators
//   3. canopy share, chained on the Prompt 2 canopy indicators
//   4. poverty proxy, chained on the Prompt 1/2 evidence
// Replies are validated against strict schemas (token whitelists, counts,
// calibration bands, two-decimal rounding) and the per-round numeric answers
// are averaged into a self-consistency consensus.

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nbhd/endpoint.hpp"
#include "nbhd/ingest.hpp"

namespace nbhd::elicit {

// ---------------------------------------------------------------------------
// Vocabularies

inline constexpr std::array<std::string_view, 9> kStructureTypes{
    "single_family_detached", "duplex", "mobile_home", "apartment", "townhouse",
    "mixed_use",              "other",  "unknown",     "none_visible"};

inline constexpr std::array<std::string_view, 14> kEnvTokens{
    "dirt_lot",         "overgrowth",        "debris",           "landscaping_absent",
    "vehicle_damaged",  "vehicle_abandoned", "very_old_vehicle", "driveway_broken",
    "cracked_sidewalk", "poor_lighting",     "potholes",         "window_bars",
    "perimeter_fence",  "clutter_disrepair"};

inline constexpr std::array<std::string_view, 3> kCanopyTokens{"tree", "palm", "large_shrub"};

inline constexpr std::size_t kMaxNotesChars = 100;

enum class Band { VeryLow, Low, Moderate, High, VeryHigh, Unknown };

std::string_view to_string(Band b);
/// Throws UnknownToken for anything outside the six band names.
Band parse_band(std::string_view s);
/// Open interval bounds in hundredths, e.g. Low -> {20, 40}.
std::pair<int, int> band_bounds_cents(Band b);

// ---------------------------------------------------------------------------
// Validated replies

struct Prompt1Response {
  std::string structure_type;
  std::vector<std::string> facade_indicators;
  int n_facade_indicators = 0;
  std::string notes;
  bool operator==(const Prompt1Response&) const = default;
};

struct Prompt2Response {
  std::vector<std::string> env_indicators;
  int n_env_indicators = 0;
  std::vector<std::string> canopy_indicators;
  int n_canopy_indicators = 0;
  std::string notes;
  bool operator==(const Prompt2Response&) const = default;
};

/// Prompt 3 (canopy) and Prompt 4 (poverty) answers. `evidence_counts` is
/// only populated for Prompt 4.
struct BandedEstimate {
  Band band = Band::Unknown;
  std::optional<double> value;
  std::map<std::string, int> evidence_counts;
  std::string notes;
  bool operator==(const BandedEstimate&) const = default;
};

using ValidatedResponse = std::variant<Prompt1Response, Prompt2Response, BandedEstimate>;

/// Chained variables injected into Prompts 3 and 4. When present they are
/// used to enforce the zero-evidence rule and evidence-count consistency.
struct ChainContext {
  std::optional<Prompt1Response> prompt1;
  std::optional<Prompt2Response> prompt2;
};

Prompt1Response validate_prompt1(std::string_view raw_json);
Prompt2Response validate_prompt2(std::string_view raw_json);
BandedEstimate validate_prompt3(std::string_view raw_json, const ChainContext& ctx = {});
BandedEstimate validate_prompt4(std::string_view raw_json, const ChainContext& ctx = {});

/// Dispatches on prompt_id (1..4). Throws nbhd::Error with one of NotJson,
/// SchemaViolation, UnknownToken, CountMismatch, BandCutpoint,
/// BandValueMismatch, IllegalZero.
ValidatedResponse validate_response(int prompt_id, std::string_view raw_json, const ChainContext& ctx = {});

// ---------------------------------------------------------------------------
// Prompt text

std::string prompt_text(int prompt_id, const ChainContext& ctx = {});
/// Appended to the prompt when a reply must be re-elicited.
inline constexpr std::string_view kCorrectiveReminder =
    "Reminder: your previous reply was rejected. Return only a single valid JSON object matching the "
    "schema above, with no extra text.";

// ---------------------------------------------------------------------------
// Chain execution

struct PromptChainConfig {
  int rounds = 5;
  int quorum = 3;
  std::string endpoint;
  std::string model_name = "gpt-4o";
  /// Decoding temperature is not published for the reference runs.
  double temperature = 0.0;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  std::filesystem::path cache_dir;  // empty: in-memory cache only
  std::size_t max_in_flight = 4;
  /// Name of the environment variable holding the endpoint credential.
  std::string credential_env;
};

/// Throws ConfigInvalid when an invariant (rounds >= 1, 1 <= quorum <= rounds,
/// max_retries >= 0, max_in_flight >= 1) fails.
void validate_config(const PromptChainConfig& cfg);

struct ElicitationResult {
  std::string pano_id;
  int tile_heading = 0;
  std::string image_ref;
  std::vector<std::optional<double>> round_values_poverty;
  std::vector<std::optional<double>> round_values_canopy;
  std::optional<double> consensus_poverty;
  std::optional<double> consensus_canopy;
  int n_valid_rounds_poverty = 0;
  int n_valid_rounds_canopy = 0;
  /// One entry per (prompt, round) that ended without a usable answer.
  std::vector<std::string> failures;
  bool operator==(const ElicitationResult&) const = default;
};

struct Consensus {
  std::optional<double> value;
  int n_valid = 0;
};

/// Mean over non-null rounds when at least `quorum` are present. Values are
/// summed in sorted order so the result does not depend on round order.
Consensus consensus(std::span<const std::optional<double>> rounds, int quorum);

/// Append-only JSON-lines record of every request/reply pair.
class PromptCache {
 public:
  struct Entry {
    std::string key;
    std::string request_hash;
    std::string reply;
    std::string verdict;
    std::string timestamp;
  };

  /// Loads existing records from `dir/prompt_cache.jsonl` (empty dir: memory only).
  explicit PromptCache(std::filesystem::path dir = {});

  std::optional<Entry> lookup(const std::string& key, const std::string& request_hash) const;
  void append(Entry entry);
  std::size_t size() const;
  std::filesystem::path file() const;

  static std::string make_key(std::string_view image_ref, int prompt_id, int round, int attempt);

 private:
  std::filesystem::path file_;
  mutable std::mutex mutex_;
  std::map<std::string, Entry> entries_;
};

struct ElicitStats {
  std::size_t endpoint_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t validation_failures = 0;
};

/// Runs the chain for tiles, sharing one cache. Thread-safe.
class Elicitor {
 public:
  Elicitor(PromptChainConfig cfg, EndpointClient& endpoint);

  ElicitationResult run_chain(const std::string& pano_id, const ingest::TileRecord& tile);

  /// All valid tiles of all panoramas, at most `max_in_flight` concurrently.
  /// Output order follows (pano_id, heading) regardless of scheduling.
  std::vector<ElicitationResult> run_all(const std::vector<ingest::PanoramaRecord>& panos);

  ElicitStats stats() const;
  const PromptCache& cache() const { return cache_; }

 private:
  template <class T, class Validate>
  std::optional<T> ask(const ingest::TileRecord& tile, int prompt_id, int round, const std::string& prompt,
                       Validate&& validate, std::vector<std::string>& failures);

  PromptChainConfig cfg_;
  EndpointClient& endpoint_;
  PromptCache cache_;
  mutable std::mutex stats_mutex_;
  ElicitStats stats_;
};

/// Convenience wrapper: one tile, fresh Elicitor.
ElicitationResult run_chain(const std::string& pano_id, const ingest::TileRecord& tile,
                            const PromptChainConfig& cfg, EndpointClient& endpoint);

/// CSV of tile-level results (one row per tile, one column per round).
std::string write_results(const std::vector<ElicitationResult>& results, int rounds);
std::vector<ElicitationResult> parse_results(std::string_view text);

}  // namespace nbhd::elicit
