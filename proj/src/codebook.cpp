#include "genrec/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <stdexcept>

namespace genrec {

namespace {

constexpr char kMagic[] = "GRCODEBK";
constexpr std::uint32_t kVersion = 1;

double sq_dist(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

double sq_norm(const double* a, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += a[i] * a[i];
  return s;
}

// Lloyd's algorithm with farthest-point initialization. Ties in assignment
// break toward the lowest centroid index; the whole routine is deterministic.
std::vector<double> kmeans(const std::vector<double>& points, int n, int d, int k, int max_iters) {
  // Distinct points for seeding.
  std::vector<int> distinct;
  {
    std::set<std::vector<double>> seen;
    for (int i = 0; i < n; ++i) {
      std::vector<double> p(points.begin() + static_cast<std::size_t>(i) * d,
                            points.begin() + static_cast<std::size_t>(i + 1) * d);
      if (seen.insert(std::move(p)).second) distinct.push_back(i);
    }
  }
  if (static_cast<int>(distinct.size()) < k)
    std::cerr << "warning: k=" << k << " exceeds " << distinct.size()
              << " distinct residual vectors; surplus centroids duplicated\n";

  std::vector<int> seeds;
  std::vector<double> min_dist(distinct.size(), std::numeric_limits<double>::infinity());
  // First seed: the max-norm point, lowest index on ties.
  int first = distinct[0];
  double best = -1.0;
  for (int idx : distinct) {
    double nn = sq_norm(points.data() + static_cast<std::size_t>(idx) * d, d);
    if (nn > best) {
      best = nn;
      first = idx;
    }
  }
  seeds.push_back(first);
  while (static_cast<int>(seeds.size()) < k) {
    int chosen = -1;
    double far = -1.0;
    for (std::size_t j = 0; j < distinct.size(); ++j) {
      const double* p = points.data() + static_cast<std::size_t>(distinct[j]) * d;
      double dd = sq_dist(p, points.data() + static_cast<std::size_t>(seeds.back()) * d, d);
      if (dd < min_dist[j]) min_dist[j] = dd;
      if (min_dist[j] > far) {
        far = min_dist[j];
        chosen = static_cast<int>(j);
      }
    }
    // All remaining points coincide with seeds: duplicate.
    seeds.push_back(far > 0.0 ? distinct[chosen] : seeds.back());
  }

  std::vector<double> centroids(static_cast<std::size_t>(k) * d);
  for (int c = 0; c < k; ++c)
    std::copy_n(points.data() + static_cast<std::size_t>(seeds[c]) * d, d,
                centroids.data() + static_cast<std::size_t>(c) * d);

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const double* p = points.data() + static_cast<std::size_t>(i) * d;
      int bc = 0;
      double bd = sq_dist(p, centroids.data(), d);
      for (int c = 1; c < k; ++c) {
        double dd = sq_dist(p, centroids.data() + static_cast<std::size_t>(c) * d, d);
        if (dd < bd) {
          bd = dd;
          bc = c;
        }
      }
      if (assign[i] != bc) {
        assign[i] = bc;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sums(static_cast<std::size_t>(k) * d, 0.0);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      const double* p = points.data() + static_cast<std::size_t>(i) * d;
      double* s = sums.data() + static_cast<std::size_t>(assign[i]) * d;
      for (int j = 0; j < d; ++j) s[j] += p[j];
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      double* cc = centroids.data() + static_cast<std::size_t>(c) * d;
      for (int j = 0; j < d; ++j) cc[j] = sums[static_cast<std::size_t>(c) * d + j] / counts[c];
    }
  }
  return centroids;
}

int nearest_centroid(const Codebook& cb, int level, const double* p) {
  int best = 0;
  double bd = sq_dist(p, cb.centroid(level, 0), cb.dim);
  for (int c = 1; c < cb.k_per_level[level]; ++c) {
    double dd = sq_dist(p, cb.centroid(level, c), cb.dim);
    if (dd < bd) {
      bd = dd;
      best = c;
    }
  }
  return best;
}

}  // namespace

Codebook fit_codebook(const ItemCatalog& catalog, int levels, const std::vector<int>& k_per_level,
                      std::uint64_t seed, int max_iters) {
  (void)seed;  // initialization is farthest-point, already deterministic
  if (levels < 1) throw std::runtime_error("fit_codebook: levels must be >= 1");
  if (static_cast<int>(k_per_level.size()) != levels)
    throw std::runtime_error("fit_codebook: k_per_level size must equal levels");
  for (int k : k_per_level)
    if (k < 1) throw std::runtime_error("fit_codebook: every K must be >= 1");
  if (catalog.size() == 0) throw std::runtime_error("fit_codebook: empty catalog");

  Codebook cb;
  cb.levels = levels;
  cb.dim = catalog.embedding_dim();
  cb.k_per_level = k_per_level;

  int n = static_cast<int>(catalog.size());
  std::vector<double> residuals(static_cast<std::size_t>(n) * cb.dim);
  for (int i = 0; i < n; ++i)
    std::copy(catalog.items[i].embedding.begin(), catalog.items[i].embedding.end(),
              residuals.begin() + static_cast<std::size_t>(i) * cb.dim);

  std::vector<ItemTokenTuple> tuples(n);
  for (int l = 0; l < levels; ++l) {
    cb.centroids.push_back(kmeans(residuals, n, cb.dim, k_per_level[l], max_iters));
    for (int i = 0; i < n; ++i) {
      double* r = residuals.data() + static_cast<std::size_t>(i) * cb.dim;
      int c = nearest_centroid(cb, l, r);
      tuples[i].tokens.push_back(c);
      const double* cc = cb.centroid(l, c);
      for (int j = 0; j < cb.dim; ++j) r[j] -= cc[j];
    }
  }
  for (int i = 0; i < n; ++i) cb.assignment[catalog.items[i].item_id] = tuples[i];
  return cb;
}

ItemTokenTuple encode_item(const Codebook& cb, const std::vector<double>& embedding) {
  if (static_cast<int>(embedding.size()) != cb.dim)
    throw std::runtime_error("encode_item: embedding dimension mismatch");
  std::vector<double> r = embedding;
  ItemTokenTuple tuple;
  for (int l = 0; l < cb.levels; ++l) {
    int c = nearest_centroid(cb, l, r.data());
    tuple.tokens.push_back(c);
    const double* cc = cb.centroid(l, c);
    for (int j = 0; j < cb.dim; ++j) r[j] -= cc[j];
  }
  return tuple;
}

Codebook resolve_collisions(Codebook cb, const ItemCatalog& catalog) {
  // Group items by tuple.
  std::map<ItemTokenTuple, std::vector<std::string>> groups;
  for (const auto& [id, tuple] : cb.assignment) groups[tuple].push_back(id);

  // Residual entering the last level plus the final quantization error, for
  // ranking colliding items and choosing replacement codewords.
  auto last_residual = [&](const std::string& id) {
    const auto& tuple = cb.assignment.at(id);
    std::vector<double> r = catalog.at(id).embedding;
    for (int l = 0; l + 1 < cb.levels; ++l) {
      const double* cc = cb.centroid(l, tuple.tokens[l]);
      for (int j = 0; j < cb.dim; ++j) r[j] -= cc[j];
    }
    return r;
  };

  // Every original tuple stays taken: singletons keep theirs, and each
  // collision group keeps its best-fitting item in place.
  std::set<ItemTokenTuple> occupied;
  for (const auto& [tuple, ids] : groups) occupied.insert(tuple);

  cb.collision_report.clear();
  int last = cb.levels - 1;
  for (auto& [tuple, ids] : groups) {
    if (ids.size() == 1) continue;
    cb.collision_report.emplace_back(tuple, ids);
    // Keep the item closest to its reconstruction; move the rest.
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& id : ids) {
      auto r = last_residual(id);
      const double* cc = cb.centroid(last, tuple.tokens[last]);
      ranked.emplace_back(sq_dist(r.data(), cc, cb.dim), id);
    }
    std::sort(ranked.begin(), ranked.end());
    for (std::size_t i = 1; i < ranked.size(); ++i) {
      const std::string& id = ranked[i].second;
      auto r = last_residual(id);
      // Next-nearest unused last-level codeword under the same prefix.
      std::vector<std::pair<double, int>> order;
      for (int c = 0; c < cb.k_per_level[last]; ++c)
        order.emplace_back(sq_dist(r.data(), cb.centroid(last, c), cb.dim), c);
      std::sort(order.begin(), order.end());
      bool placed = false;
      for (const auto& [dist, c] : order) {
        ItemTokenTuple cand = tuple;
        cand.tokens[last] = c;
        if (!occupied.count(cand)) {
          occupied.insert(cand);
          cb.assignment[id] = cand;
          placed = true;
          break;
        }
      }
      if (!placed)
        throw std::runtime_error(
            "resolve_collisions: no free last-level codeword for item " + id +
            "; increase the last-level K");
    }
  }
  return cb;
}

std::vector<int> ItemTrie::children(const std::vector<int>& prefix) const {
  const Node* node = find(prefix);
  std::vector<int> out;
  if (!node) return out;
  out.reserve(node->children.size());
  for (const auto& [tok, idx] : node->children) out.push_back(tok);
  return out;
}

bool ItemTrie::has_prefix(const std::vector<int>& prefix) const { return find(prefix) != nullptr; }

std::string ItemTrie::item_at(const ItemTokenTuple& tuple) const {
  const Node* node = find(tuple.tokens);
  if (!node || node->item < 0) return {};
  return items_[node->item];
}

const ItemTrie::Node* ItemTrie::find(const std::vector<int>& prefix) const {
  if (nodes_.empty()) return nullptr;
  int cur = 0;
  for (int tok : prefix) {
    auto it = nodes_[cur].children.find(tok);
    if (it == nodes_[cur].children.end()) return nullptr;
    cur = it->second;
  }
  return &nodes_[cur];
}

std::vector<ItemTokenTuple> ItemTrie::enumerate() const {
  std::vector<ItemTokenTuple> out;
  if (nodes_.empty()) return out;
  std::vector<int> path;
  // Iterative DFS keeping lexicographic order.
  struct Frame {
    int node;
    std::map<int, int>::const_iterator it;
  };
  std::vector<Frame> stack{{0, nodes_[0].children.begin()}};
  while (!stack.empty()) {
    auto& fr = stack.back();
    if (nodes_[fr.node].item >= 0) {
      out.push_back(ItemTokenTuple{path});
      stack.pop_back();
      if (!path.empty()) path.pop_back();
      continue;
    }
    if (fr.it == nodes_[fr.node].children.end()) {
      stack.pop_back();
      if (!path.empty()) path.pop_back();
      continue;
    }
    int child = fr.it->second;
    path.push_back(fr.it->first);
    ++fr.it;
    stack.push_back({child, nodes_[child].children.begin()});
  }
  return out;
}

ItemTrie ItemTrie::build(const Codebook& cb) {
  std::set<ItemTokenTuple> seen;
  for (const auto& [id, tuple] : cb.assignment)
    if (!seen.insert(tuple).second)
      throw std::runtime_error("build_trie: assignment is not injective; resolve collisions first");

  ItemTrie trie;
  trie.levels_ = cb.levels;
  trie.nodes_.push_back({});
  for (const auto& [id, tuple] : cb.assignment) {
    int cur = 0;
    for (int tok : tuple.tokens) {
      auto it = trie.nodes_[cur].children.find(tok);
      if (it == trie.nodes_[cur].children.end()) {
        trie.nodes_[cur].children.emplace(tok, static_cast<int>(trie.nodes_.size()));
        cur = static_cast<int>(trie.nodes_.size());
        trie.nodes_.push_back({});
      } else {
        cur = it->second;
      }
    }
    trie.nodes_[cur].item = static_cast<int>(trie.items_.size());
    trie.items_.push_back(id);
    ++trie.leaves_;
  }
  return trie;
}

ItemTrie build_trie(const Codebook& cb) { return ItemTrie::build(cb); }

void save_codebook(const Codebook& cb, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write codebook file: " + path);
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(cb.levels));
  for (int k : cb.k_per_level) write_u32(out, static_cast<std::uint32_t>(k));
  write_u32(out, static_cast<std::uint32_t>(cb.dim));
  for (int l = 0; l < cb.levels; ++l)
    for (double v : cb.centroids[l]) write_f64(out, v);
  write_u32(out, static_cast<std::uint32_t>(cb.assignment.size()));
  for (const auto& [id, tuple] : cb.assignment) {
    write_string(out, id);
    for (int tok : tuple.tokens) write_u32(out, static_cast<std::uint32_t>(tok));
  }
  if (!out) throw std::runtime_error("failed writing codebook file: " + path);
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open codebook file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != kMagic)
    throw std::runtime_error("not a codebook file: " + path);
  std::uint32_t version = read_u32(in);
  if (version != kVersion) throw std::runtime_error("unsupported codebook version");
  Codebook cb;
  cb.levels = static_cast<int>(read_u32(in));
  cb.k_per_level.resize(cb.levels);
  for (int& k : cb.k_per_level) k = static_cast<int>(read_u32(in));
  cb.dim = static_cast<int>(read_u32(in));
  for (int l = 0; l < cb.levels; ++l) {
    std::vector<double> c(static_cast<std::size_t>(cb.k_per_level[l]) * cb.dim);
    for (double& v : c) v = read_f64(in);
    cb.centroids.push_back(std::move(c));
  }
  std::uint32_t n = read_u32(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string id = read_string(in);
    ItemTokenTuple tuple;
    for (int l = 0; l < cb.levels; ++l) tuple.tokens.push_back(static_cast<int>(read_u32(in)));
    cb.assignment.emplace(std::move(id), std::move(tuple));
  }
  return cb;
}

std::vector<double> residual_profile(const Codebook& cb, const ItemCatalog& catalog) {
  std::vector<double> sums(cb.levels + 1, 0.0);
  for (const auto& [id, tuple] : cb.assignment) {
    std::vector<double> r = catalog.at(id).embedding;
    sums[0] += sq_norm(r.data(), cb.dim);
    for (int l = 0; l < cb.levels; ++l) {
      const double* cc = cb.centroid(l, tuple.tokens[l]);
      for (int j = 0; j < cb.dim; ++j) r[j] -= cc[j];
      sums[l + 1] += sq_norm(r.data(), cb.dim);
    }
  }
  for (double& s : sums) s /= static_cast<double>(cb.assignment.size());
  return sums;
}

}  // namespace genrec
