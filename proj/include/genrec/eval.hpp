#pragma once

#include <map>
#include <string>
#include <vector>

#include "genrec/alignment.hpp"
#include "genrec/codebook.hpp"
#include "genrec/corpus.hpp"
#include "genrec/decoder.hpp"
#include "genrec/policy.hpp"

namespace genrec {

struct EvalConfig {
  int beam_width = 10;
  std::vector<int> ks = {5, 10};
  int max_history = 50;
  bool reasoning = false;  // sample a rationale before decoding the target
  double temperature = 1.0;
  int m_max = 16;  // rationale length budget when reasoning
};

struct RankingMetrics {
  std::map<int, double> recall;  // K -> R@K
  std::map<int, double> ndcg;    // K -> N@K
  std::vector<int> ranks;        // per test pair, 1-based; 0 = miss
  int n_users = 0;
};

// Metrics from raw ranks; the ranking path feeds through here so fixtures
// can exercise the arithmetic directly.
RankingMetrics metrics_from_ranks(const std::vector<int>& ranks, const std::vector<int>& ks);

// Leave-one-out ranking: render each test pair's sequential prompt (with a
// sampled rationale when reasoning=true), run a trie-constrained beam, and
// score the held-out target's rank.
RankingMetrics evaluate_ranking(const PolicyParameters& p, const std::vector<EvalPair>& test,
                                const Codebook& cb, const Vocabulary& vocab, const ItemTrie& trie,
                                const EvalConfig& cfg, std::uint64_t seed);

struct ArmResult {
  std::string arm;  // Base | Base+IA | Base+IA+R
  std::vector<std::uint64_t> seeds;
  std::vector<RankingMetrics> per_seed;  // aligned with seeds

  double mean_recall(int k) const;
  double mean_ndcg(int k) const;
};

struct AblationTable {
  std::vector<ArmResult> arms;

  // Arms must be exactly Base, Base+IA, Base+IA+R in that order.
  void validate() const;
};

struct ReferenceRow {
  std::string arm;
  double r5, r10, n5, n10;
};

// Published full-scale Beauty numbers; context for the report only, never a
// target at this scale.
const std::vector<ReferenceRow>& reference_table();

// Tab-separated arm/seed table, the reference rows flagged as not
// reproduced, and a key=value summary block. Deterministic byte-for-byte for
// equal inputs.
void emit_report(const AblationTable& table, const std::string& path);

// Parse-back of every numeric cell, keyed "<arm>/<seed-or-tag>/<column>";
// summary lines land under "summary/<key>".
std::map<std::string, double> parse_report(const std::string& path);

}  // namespace genrec
