#include "genrec/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace genrec {

std::vector<int> sample_sequence(const PolicyParameters& p, const std::vector<int>& context,
                                 const SampleOptions& opts, std::uint64_t seed) {
  if (!opts.greedy && opts.temperature <= 0.0)
    throw std::runtime_error("sample_sequence: temperature must be positive");
  if (opts.max_len < 1) throw std::runtime_error("sample_sequence: max_len must be >= 1");
  if (static_cast<int>(context.size()) >= p.cfg.p_max)
    throw std::runtime_error("sample_sequence: context exceeds context limit");

  Rng rng(seed);
  auto [state, lp] = prefill(p, context);
  std::vector<int> out;
  for (int step = 0; step < opts.max_len; ++step) {
    int token;
    if (opts.greedy) {
      Eigen::Index arg;
      lp.maxCoeff(&arg);  // first occurrence on ties
      token = static_cast<int>(arg);
    } else {
      Vec probs = (lp.array() / opts.temperature).exp();
      probs /= probs.sum();
      double r = rng.uniform();
      double acc = 0.0;
      token = static_cast<int>(probs.size()) - 1;
      for (Eigen::Index i = 0; i < probs.size(); ++i) {
        acc += probs(i);
        if (r < acc) {
          token = static_cast<int>(i);
          break;
        }
      }
    }
    out.push_back(token);
    if (opts.stop_tokens.count(token)) break;
    if (state.len >= p.cfg.p_max) break;
    lp = decode_step(p, state, token);
  }
  return out;
}

namespace {

struct Beam {
  DecodeState state;
  Vec lp;  // log-probs for the next position
  ItemTokenTuple tuple;
  double score = 0.0;
};

bool candidate_less(const BeamCandidate& a, const BeamCandidate& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.tuple.tokens < b.tuple.tokens;
}

// Beam search with a per-step admissible-index callback.
template <typename AllowedFn>
BeamResult beam_search_impl(const PolicyParameters& p, const std::vector<int>& context,
                            int beam_width, int levels, AllowedFn allowed_for) {
  if (beam_width < 1) throw std::runtime_error("beam_search: beam width must be >= 1");
  if (levels < 1 || levels > p.vocab.levels())
    throw std::runtime_error("beam_search: levels out of range");

  auto [state, lp] = prefill(p, context);
  std::vector<Beam> beams;
  beams.push_back({std::move(state), std::move(lp), {}, 0.0});

  for (int level = 0; level < levels; ++level) {
    struct Expansion {
      int parent;
      int index;  // level-local codeword index
      double score;
      ItemTokenTuple tuple;
    };
    std::vector<Expansion> expansions;
    for (std::size_t bi = 0; bi < beams.size(); ++bi) {
      std::vector<int> allowed = allowed_for(level, beams[bi].tuple.tokens);
      for (int idx : allowed) {
        int tok = p.vocab.itemic(level, idx);
        ItemTokenTuple t = beams[bi].tuple;
        t.tokens.push_back(idx);
        expansions.push_back({static_cast<int>(bi), idx, beams[bi].score + beams[bi].lp(tok),
                              std::move(t)});
      }
    }
    if (expansions.empty())
      throw std::runtime_error("beam_search: no admissible expansion at level " +
                               std::to_string(level + 1));
    std::sort(expansions.begin(), expansions.end(), [](const Expansion& a, const Expansion& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.tuple.tokens < b.tuple.tokens;
    });
    if (static_cast<int>(expansions.size()) > beam_width) expansions.resize(beam_width);

    std::vector<Beam> next;
    next.reserve(expansions.size());
    bool last = (level == levels - 1);
    for (const auto& ex : expansions) {
      Beam nb;
      nb.tuple = ex.tuple;
      nb.score = ex.score;
      if (!last) {
        nb.state = beams[ex.parent].state;  // fork
        nb.lp = decode_step(p, nb.state, p.vocab.itemic(level, ex.index));
      }
      next.push_back(std::move(nb));
    }
    beams = std::move(next);
  }

  BeamResult result;
  result.width = beam_width;
  for (const auto& b : beams) result.candidates.push_back({b.tuple, b.score});
  std::sort(result.candidates.begin(), result.candidates.end(), candidate_less);
  return result;
}

std::vector<int> all_indices(int k) {
  std::vector<int> out(k);
  for (int i = 0; i < k; ++i) out[i] = i;
  return out;
}

}  // namespace

BeamResult beam_search(const PolicyParameters& p, const std::vector<int>& context, int beam_width,
                       int levels, const ItemTrie* trie) {
  if (trie && trie->leaf_count() == 0) throw std::runtime_error("beam_search: empty trie");
  return beam_search_impl(p, context, beam_width, levels,
                          [&](int level, const std::vector<int>& prefix) {
                            if (trie) return trie->children(prefix);
                            return all_indices(p.vocab.k_per_level[level]);
                          });
}

int rollout_beam_reward(const BeamResult& beam, const ItemTokenTuple& target, RewardKind kind) {
  if (beam.candidates.empty()) throw std::runtime_error("rollout_beam_reward: empty beam");
  int best = 0;
  for (const auto& cand : beam.candidates) {
    if (cand.tuple.levels() != target.levels())
      throw std::runtime_error("rollout_beam_reward: tuple level mismatch");
    int score = 0;
    if (kind == RewardKind::kPositionalMatch) {
      for (int l = 0; l < target.levels(); ++l)
        if (cand.tuple.tokens[l] == target.tokens[l]) ++score;
    } else {
      for (int l = 0; l < target.levels(); ++l) {
        if (cand.tuple.tokens[l] != target.tokens[l]) break;
        ++score;
      }
    }
    best = std::max(best, score);
  }
  return best;
}

BeamResult prefix_constrained_beam(const PolicyParameters& p, const std::vector<int>& context,
                                   const std::set<std::pair<int, int>>& prefix_set,
                                   const ItemTrie& trie, int beam_width) {
  if (prefix_set.empty()) throw std::runtime_error("prefix_constrained_beam: empty prefix set");
  if (trie.leaf_count() == 0) throw std::runtime_error("prefix_constrained_beam: empty trie");
  if (trie.levels() < 2)
    throw std::runtime_error("prefix_constrained_beam: codebook needs at least two levels");

  // Detect a stale cache: no cached prefix corresponds to a real item.
  bool any_live = false;
  for (const auto& [s1, s2] : prefix_set)
    if (trie.has_prefix({s1, s2})) {
      any_live = true;
      break;
    }
  if (!any_live)
    throw std::runtime_error(
        "prefix_constrained_beam: stale cache; no cached prefix matches a catalog item");

  return beam_search_impl(
      p, context, beam_width, trie.levels(), [&](int level, const std::vector<int>& prefix) {
        std::vector<int> kids = trie.children(prefix);
        if (level == 0) {
          std::vector<int> out;
          for (int s1 : kids) {
            auto it = prefix_set.lower_bound({s1, 0});
            if (it != prefix_set.end() && it->first == s1) out.push_back(s1);
          }
          return out;
        }
        if (level == 1) {
          std::vector<int> out;
          for (int s2 : kids)
            if (prefix_set.count({prefix[0], s2})) out.push_back(s2);
          return out;
        }
        return kids;
      });
}

}  // namespace genrec
