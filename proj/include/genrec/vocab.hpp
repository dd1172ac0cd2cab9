#pragma once

#include <numeric>
#include <stdexcept>
#include <vector>

#include "genrec/codebook.hpp"

namespace genrec {

// Unified token space: [0, n_text) text/rationale tokens, then one
// contiguous range per codebook level, then seven specials at the top.
struct Vocabulary {
  int n_text = 0;
  std::vector<int> k_per_level;

  int levels() const { return static_cast<int>(k_per_level.size()); }
  int itemic_total() const { return std::accumulate(k_per_level.begin(), k_per_level.end(), 0); }
  int size() const { return n_text + itemic_total() + 7; }

  int level_offset(int level) const {
    int off = n_text;
    for (int l = 0; l < level; ++l) off += k_per_level[l];
    return off;
  }
  int itemic(int level, int index) const {
    if (index < 0 || index >= k_per_level[level])
      throw std::runtime_error("itemic index out of range");
    return level_offset(level) + index;
  }
  // inverse of itemic(); returns false if the id is not itemic at that level
  bool itemic_index(int level, int id, int* index) const {
    int off = level_offset(level);
    if (id < off || id >= off + k_per_level[level]) return false;
    *index = id - off;
    return true;
  }

  int itemic_begin() const { return n_text; }
  int itemic_end() const { return n_text + itemic_total(); }

  int pad() const { return size() - 7; }
  int bos() const { return size() - 6; }
  int eos() const { return size() - 5; }
  int item_begin() const { return size() - 4; }
  int item_end() const { return size() - 3; }
  int think_begin() const { return size() - 2; }
  int think_end() const { return size() - 1; }

  std::vector<int> tuple_tokens(const ItemTokenTuple& tuple) const {
    std::vector<int> out;
    out.reserve(tuple.tokens.size());
    for (int l = 0; l < tuple.levels(); ++l) out.push_back(itemic(l, tuple.tokens[l]));
    return out;
  }

  static Vocabulary make(int n_text, const std::vector<int>& k_per_level) {
    Vocabulary v;
    v.n_text = n_text;
    v.k_per_level = k_per_level;
    return v;
  }
};

}  // namespace genrec
