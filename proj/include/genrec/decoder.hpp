#pragma once

#include <set>
#include <vector>

#include "genrec/codebook.hpp"
#include "genrec/policy.hpp"

namespace genrec {

struct BeamCandidate {
  ItemTokenTuple tuple;
  double logprob = 0.0;
};

// Candidates sorted by descending logprob, lexicographic token tie-break.
struct BeamResult {
  std::vector<BeamCandidate> candidates;
  int width = 0;  // requested K
};

struct SampleOptions {
  double temperature = 1.0;
  int max_len = 64;
  std::set<int> stop_tokens;
  bool greedy = false;  // temperature -> 0 limit
};

// Ancestral sampling; the stop token, when hit, is included in the output.
std::vector<int> sample_sequence(const PolicyParameters& p, const std::vector<int>& context,
                                 const SampleOptions& opts, std::uint64_t seed);

// Fixed-length beam over `levels` itemic positions. The context must already
// end with the item_begin token per the prompt grammar. With a trie,
// expansions are restricted to children(prefix).
BeamResult beam_search(const PolicyParameters& p, const std::vector<int>& context, int beam_width,
                       int levels, const ItemTrie* trie);

enum class RewardKind {
  kPositionalMatch,  // sum of per-level indicator matches
  kPrefixMatch,      // longest-common-prefix credit (documented variant)
};

int rollout_beam_reward(const BeamResult& beam, const ItemTokenTuple& target,
                        RewardKind kind = RewardKind::kPositionalMatch);

struct Rollout {
  std::vector<int> rationale_tokens;
  BeamResult beam;
  int reward = 0;
};

// Beam search whose first two positions may only extend members of
// prefix_set (intersected with trie admissibility).
BeamResult prefix_constrained_beam(const PolicyParameters& p, const std::vector<int>& context,
                                   const std::set<std::pair<int, int>>& prefix_set,
                                   const ItemTrie& trie, int beam_width);

}  // namespace genrec
