#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "genrec/decoder.hpp"

namespace genrec {

struct CandidatePrefixSet {
  std::string user_id;
  std::set<std::pair<int, int>> prefixes;  // (level-1, level-2) codeword indices
  int paths = 0;        // T
  int beam_width = 0;   // m
  std::string model_id;
  std::int64_t created_at = 0;  // unix seconds

  bool operator==(const CandidatePrefixSet& o) const {
    return user_id == o.user_id && prefixes == o.prefixes && paths == o.paths &&
           beam_width == o.beam_width && model_id == o.model_id && created_at == o.created_at;
  }
};

// Samples T reasoning paths, beam-decodes the first two itemic positions of
// each with width m, and returns the union of prefixes. `user_ctx` is the
// history prompt without the think block.
CandidatePrefixSet precompute_candidates(const PolicyParameters& p_reason,
                                         const std::vector<int>& user_ctx,
                                         const std::string& user_id, int paths, int beam_width,
                                         const ItemTrie& trie, std::uint64_t seed,
                                         double temperature = 1.0, int m_max = 16,
                                         const std::string& model_id = "");

// Single-file append log of per-user prefix sets; one designated writer,
// any number of concurrent readers. Records carry a CRC so a reader never
// acts on a torn tail. Last writer wins per user.
class CacheStore {
 public:
  explicit CacheStore(std::string path);

  void put(const CandidatePrefixSet& set);
  // nullopt = cache miss (distinct from failure).
  std::optional<CandidatePrefixSet> load(const std::string& user_id) const;
  // Rewrites the log keeping only the latest record per user (tmp + rename).
  void compact();
  std::vector<std::string> user_ids() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct ServeResult {
  struct Ranked {
    std::string item_id;
    ItemTokenTuple tuple;
    double logprob = 0.0;
  };
  std::vector<Ranked> items;
  double stage2_latency_ms = 0.0;
  bool cache_hit = false;
};

// Online stage: prefix-constrained finalization with the lightweight policy.
// `user_ctx` must end with item_begin. Cache miss falls back to a plain
// trie-constrained beam.
ServeResult serve(const PolicyParameters& p_online, const std::vector<int>& user_ctx,
                  const CacheStore& store, const std::string& user_id, int top_k,
                  const ItemTrie& trie);

struct LatencyReport {
  double stage2_p50 = 0.0, stage2_p95 = 0.0, stage2_max = 0.0;
  double monolithic_p50 = 0.0, monolithic_p95 = 0.0, monolithic_max = 0.0;
  int runs = 0;
};

LatencyReport latency_report(const std::vector<ServeResult>& runs,
                             const std::vector<double>& full_pipeline_ms);

// Tab-separated with a header row.
void save_latency_report(const LatencyReport& report, const std::string& path);

}  // namespace genrec
