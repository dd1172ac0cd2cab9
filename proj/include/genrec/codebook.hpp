#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "genrec/corpus.hpp"

namespace genrec {

// Hierarchical token identity of one item: L codeword indices, level l
// index in [0, K_l).
struct ItemTokenTuple {
  std::vector<int> tokens;

  int levels() const { return static_cast<int>(tokens.size()); }
  bool operator==(const ItemTokenTuple& o) const { return tokens == o.tokens; }
  bool operator<(const ItemTokenTuple& o) const { return tokens < o.tokens; }
};

struct Codebook {
  int levels = 0;
  int dim = 0;
  std::vector<int> k_per_level;
  // centroids[l] is K_l rows of dim doubles, row-major.
  std::vector<std::vector<double>> centroids;
  std::map<std::string, ItemTokenTuple> assignment;  // ordered for determinism
  std::vector<std::pair<ItemTokenTuple, std::vector<std::string>>> collision_report;

  const double* centroid(int level, int index) const {
    return centroids[level].data() + static_cast<std::size_t>(index) * dim;
  }
};

// Prefix tree over assigned tuples; every root-to-leaf path has length L and
// each leaf carries exactly one item_id.
class ItemTrie {
 public:
  ItemTrie() = default;

  // children of a (possibly empty) prefix, sorted ascending; empty if the
  // prefix is not present.
  std::vector<int> children(const std::vector<int>& prefix) const;
  bool has_prefix(const std::vector<int>& prefix) const;
  // item at a complete tuple, or empty string.
  std::string item_at(const ItemTokenTuple& tuple) const;
  std::size_t leaf_count() const { return leaves_; }
  int levels() const { return levels_; }
  // all complete tuples, lexicographic order.
  std::vector<ItemTokenTuple> enumerate() const;

  static ItemTrie build(const Codebook& cb);

 private:
  struct Node {
    std::map<int, int> children;  // token -> node index
    int item = -1;                // leaf payload, index into items_
  };
  const Node* find(const std::vector<int>& prefix) const;
  std::vector<Node> nodes_;
  std::vector<std::string> items_;
  std::size_t leaves_ = 0;
  int levels_ = 0;
};

Codebook fit_codebook(const ItemCatalog& catalog, int levels, const std::vector<int>& k_per_level,
                      std::uint64_t seed, int max_iters = 50);

ItemTokenTuple encode_item(const Codebook& cb, const std::vector<double>& embedding);

// Reassigns all but the best item of each colliding tuple at the last level
// until the assignment is injective.
Codebook resolve_collisions(Codebook cb, const ItemCatalog& catalog);

ItemTrie build_trie(const Codebook& cb);

void save_codebook(const Codebook& cb, const std::string& path);
Codebook load_codebook(const std::string& path);

// Mean squared residual norm after each level, recomputed from centroids;
// used by tests as an independent check.
std::vector<double> residual_profile(const Codebook& cb, const ItemCatalog& catalog);

}  // namespace genrec
