#include <algorithm>
#include <ctime>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nbhd/csv.hpp"
#include "nbhd/elicit.hpp"
#include "nbhd/error.hpp"
#include "nbhd/util.hpp"

namespace nbhd::elicit {

void validate_config(const PromptChainConfig& cfg) {
  if (cfg.rounds < 1) throw Error(ErrorKind::ConfigInvalid, "rounds must be >= 1");
  if (cfg.quorum < 1 || cfg.quorum > cfg.rounds)
    throw Error(ErrorKind::ConfigInvalid, "quorum must lie in [1, rounds]");
  if (cfg.max_retries < 0) throw Error(ErrorKind::ConfigInvalid, "max_retries must be >= 0");
  if (cfg.max_in_flight < 1) throw Error(ErrorKind::ConfigInvalid, "max_in_flight must be >= 1");
}

Consensus consensus(std::span<const std::optional<double>> rounds, int quorum) {
  std::vector<double> values;
  for (const auto& v : rounds)
    if (v) values.push_back(*v);
  Consensus c;
  c.n_valid = static_cast<int>(values.size());
  if (c.n_valid < quorum || values.empty()) return c;
  std::sort(values.begin(), values.end());
  const double sum = std::accumulate(values.begin(), values.end(), 0.0);
  c.value = sum / static_cast<double>(values.size());
  return c;
}

// ---------------------------------------------------------------------------
// PromptCache

PromptCache::PromptCache(std::filesystem::path dir) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  file_ = dir / "prompt_cache.jsonl";
  std::ifstream in(file_);
  std::string line;
  std::size_t bad = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      Entry e{j.at("key"), j.at("request_hash"), j.at("reply"), j.at("verdict"), j.at("timestamp")};
      entries_[e.key] = std::move(e);
    } catch (const nlohmann::json::exception&) {
      ++bad;  // torn trailing write from an interrupted run
    }
  }
  if (bad) spdlog::warn("{}: skipped {} unreadable cache lines", file_.string(), bad);
}

std::string PromptCache::make_key(std::string_view image_ref, int prompt_id, int round, int attempt) {
  return std::string(image_ref) + "|p" + std::to_string(prompt_id) + "|r" + std::to_string(round) + "|a" +
         std::to_string(attempt);
}

std::optional<PromptCache::Entry> PromptCache::lookup(const std::string& key, const std::string& request_hash) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end() || it->second.request_hash != request_hash) return std::nullopt;
  return it->second;
}

void PromptCache::append(Entry entry) {
  std::lock_guard lock(mutex_);
  if (!file_.empty()) {
    nlohmann::json j{{"key", entry.key},
                     {"request_hash", entry.request_hash},
                     {"reply", entry.reply},
                     {"verdict", entry.verdict},
                     {"timestamp", entry.timestamp}};
    const std::string line = j.dump() + "\n";
    std::ofstream out(file_, std::ios::app | std::ios::binary);
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "cannot append to " + file_.string());
  }
  entries_[entry.key] = std::move(entry);
}

std::size_t PromptCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::filesystem::path PromptCache::file() const { return file_; }

// ---------------------------------------------------------------------------
// Elicitor

namespace {

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool retryable(ErrorKind k) { return k == ErrorKind::NotJson || k == ErrorKind::SchemaViolation; }

}  // namespace

Elicitor::Elicitor(PromptChainConfig cfg, EndpointClient& endpoint)
    : cfg_(std::move(cfg)), endpoint_(endpoint), cache_(cfg_.cache_dir) {
  validate_config(cfg_);
}

template <class T, class Validate>
std::optional<T> Elicitor::ask(const ingest::TileRecord& tile, int prompt_id, int round, const std::string& prompt,
                               Validate&& validate, std::vector<std::string>& failures) {
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    EndpointRequest req{cfg_.model_name, tile.image_ref, prompt_id, round, attempt, prompt, cfg_.temperature};
    if (attempt > 0) req.prompt += "\n" + std::string(kCorrectiveReminder);
    const std::string key = PromptCache::make_key(tile.image_ref, prompt_id, round, attempt);
    const std::string request_hash =
        sha256_hex(req.model_name + "\n" + format_exact(req.temperature) + "\n" + req.prompt);

    std::string reply;
    bool from_cache = false;
    if (auto hit = cache_.lookup(key, request_hash)) {
      reply = hit->reply;
      from_cache = true;
    } else {
      int transport_failures = 0;
      while (true) {
        try {
          {
            std::lock_guard lock(stats_mutex_);
            ++stats_.endpoint_calls;
          }
          reply = endpoint_.complete(req);
          break;
        } catch (const TransportError& e) {
          if (++transport_failures > cfg_.max_retries)
            throw Error(ErrorKind::EndpointUnavailable, key + ": " + e.what());
        }
      }
    }
    std::string verdict = "ok";
    std::optional<T> parsed;
    ErrorKind kind{};
    try {
      parsed = validate(reply);
    } catch (const Error& e) {
      verdict = e.what();
      kind = e.kind();
      last_error = e.what();
    }
    if (from_cache) {
      std::lock_guard lock(stats_mutex_);
      ++stats_.cache_hits;
    } else {
      cache_.append({key, request_hash, reply, verdict, utc_timestamp()});
    }
    if (parsed) return parsed;
    {
      std::lock_guard lock(stats_mutex_);
      ++stats_.validation_failures;
    }
    if (!retryable(kind)) {
      failures.push_back("prompt " + std::to_string(prompt_id) + " round " + std::to_string(round) + ": " +
                         last_error);
      return std::nullopt;
    }
  }
  failures.push_back(std::string(to_string(ErrorKind::ValidationFailedAllRetries)) + ": prompt " +
                     std::to_string(prompt_id) + " round " + std::to_string(round) + ": " + last_error);
  return std::nullopt;
}

ElicitationResult Elicitor::run_chain(const std::string& pano_id, const ingest::TileRecord& tile) {
  if (!tile.valid) throw Error(ErrorKind::ConfigInvalid, pano_id + ": run_chain requires a valid tile");
  ElicitationResult res;
  res.pano_id = pano_id;
  res.tile_heading = tile.heading;
  res.image_ref = tile.image_ref;
  res.round_values_poverty.assign(static_cast<std::size_t>(cfg_.rounds), std::nullopt);
  res.round_values_canopy.assign(static_cast<std::size_t>(cfg_.rounds), std::nullopt);

  for (int round = 1; round <= cfg_.rounds; ++round) {
    const auto slot = static_cast<std::size_t>(round - 1);
    auto p1 = ask<Prompt1Response>(tile, 1, round, prompt_text(1),
                                   [](const std::string& r) { return validate_prompt1(r); }, res.failures);
    auto p2 = ask<Prompt2Response>(tile, 2, round, prompt_text(2),
                                   [](const std::string& r) { return validate_prompt2(r); }, res.failures);
    if (!p2) continue;  // both chained estimates need the Prompt 2 variables
    ChainContext ctx{p1, p2};
    auto p3 = ask<BandedEstimate>(tile, 3, round, prompt_text(3, ctx),
                                  [&](const std::string& r) { return validate_prompt3(r, ctx); }, res.failures);
    if (p3) res.round_values_canopy[slot] = p3->value;
    if (!p1) continue;
    auto p4 = ask<BandedEstimate>(tile, 4, round, prompt_text(4, ctx),
                                  [&](const std::string& r) { return validate_prompt4(r, ctx); }, res.failures);
    if (p4) res.round_values_poverty[slot] = p4->value;
  }
  const auto pov = consensus(res.round_values_poverty, cfg_.quorum);
  const auto can = consensus(res.round_values_canopy, cfg_.quorum);
  res.consensus_poverty = pov.value;
  res.n_valid_rounds_poverty = pov.n_valid;
  res.consensus_canopy = can.value;
  res.n_valid_rounds_canopy = can.n_valid;
  return res;
}

std::vector<ElicitationResult> Elicitor::run_all(const std::vector<ingest::PanoramaRecord>& panos) {
  std::vector<std::pair<const ingest::PanoramaRecord*, const ingest::TileRecord*>> jobs;
  for (const auto& p : panos)
    for (const auto& t : p.tiles)
      if (t.valid) jobs.emplace_back(&p, &t);
  std::sort(jobs.begin(), jobs.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first->pano_id, a.second->heading) < std::tie(b.first->pano_id, b.second->heading);
  });
  std::vector<ElicitationResult> out(jobs.size());
  const std::size_t saved = worker_count();
  set_worker_count(cfg_.max_in_flight);
  try {
    parallel_for(jobs.size(), [&](std::size_t i) { out[i] = run_chain(jobs[i].first->pano_id, *jobs[i].second); });
  } catch (...) {
    set_worker_count(saved);
    throw;
  }
  set_worker_count(saved);
  return out;
}

ElicitStats Elicitor::stats() const {
  std::lock_guard lock(stats_mutex_);
  return stats_;
}

ElicitationResult run_chain(const std::string& pano_id, const ingest::TileRecord& tile, const PromptChainConfig& cfg,
                            EndpointClient& endpoint) {
  Elicitor e(cfg, endpoint);
  return e.run_chain(pano_id, tile);
}

// ---------------------------------------------------------------------------
// CSV

namespace {
std::string opt_cell(const std::optional<double>& v) { return v ? format_exact(*v) : ""; }
std::optional<double> opt_parse(const std::string& s) {
  if (trim(s).empty()) return std::nullopt;
  return parse_double(s);
}
}  // namespace

std::string write_results(const std::vector<ElicitationResult>& results, int rounds) {
  std::vector<std::string> header{"pano_id", "heading", "image_ref"};
  for (int r = 1; r <= rounds; ++r) header.push_back("poverty_r" + std::to_string(r));
  for (int r = 1; r <= rounds; ++r) header.push_back("canopy_r" + std::to_string(r));
  header.insert(header.end(), {"consensus_poverty", "consensus_canopy", "n_valid_poverty", "n_valid_canopy"});
  csv::Writer w(header);
  for (const auto& res : results) {
    std::vector<std::string> cells{res.pano_id, std::to_string(res.tile_heading), res.image_ref};
    for (int r = 0; r < rounds; ++r)
      cells.push_back(r < static_cast<int>(res.round_values_poverty.size()) ? opt_cell(res.round_values_poverty[r]) : "");
    for (int r = 0; r < rounds; ++r)
      cells.push_back(r < static_cast<int>(res.round_values_canopy.size()) ? opt_cell(res.round_values_canopy[r]) : "");
    cells.push_back(opt_cell(res.consensus_poverty));
    cells.push_back(opt_cell(res.consensus_canopy));
    cells.push_back(std::to_string(res.n_valid_rounds_poverty));
    cells.push_back(std::to_string(res.n_valid_rounds_canopy));
    w.add_row(cells);
  }
  return w.str();
}

std::vector<ElicitationResult> parse_results(std::string_view text) {
  const auto t = csv::Table::parse(text, "<elicitation>");
  int rounds = 0;
  while (t.has_column("poverty_r" + std::to_string(rounds + 1))) ++rounds;
  std::vector<ElicitationResult> out;
  for (const auto& row : t.rows()) {
    ElicitationResult r;
    r.pano_id = t.cell(row, "pano_id");
    r.tile_heading = static_cast<int>(parse_int(t.cell(row, "heading")));
    r.image_ref = t.cell(row, "image_ref");
    for (int k = 1; k <= rounds; ++k) {
      r.round_values_poverty.push_back(opt_parse(t.cell(row, "poverty_r" + std::to_string(k))));
      r.round_values_canopy.push_back(opt_parse(t.cell(row, "canopy_r" + std::to_string(k))));
    }
    r.consensus_poverty = opt_parse(t.cell(row, "consensus_poverty"));
    r.consensus_canopy = opt_parse(t.cell(row, "consensus_canopy"));
    r.n_valid_rounds_poverty = static_cast<int>(parse_int(t.cell(row, "n_valid_poverty")));
    r.n_valid_rounds_canopy = static_cast<int>(parse_int(t.cell(row, "n_valid_canopy")));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace nbhd::elicit
