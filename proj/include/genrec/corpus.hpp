#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "genrec/common.hpp"

namespace genrec {

struct ItemRecord {
  std::string item_id;
  std::vector<double> embedding;
  int concept_id = -1;  // cluster label, synthetic worlds only; -1 = unknown
  std::vector<int> text_tokens;
};

struct ItemCatalog {
  std::vector<ItemRecord> items;
  std::unordered_map<std::string, std::size_t> index;  // item_id -> position

  std::size_t size() const { return items.size(); }
  const ItemRecord& at(const std::string& id) const;
  bool contains(const std::string& id) const { return index.count(id) > 0; }
  void add(ItemRecord rec);
  int embedding_dim() const { return items.empty() ? 0 : static_cast<int>(items[0].embedding.size()); }
};

struct Persona {
  std::vector<int> attribute_tokens;
  std::vector<int> interest_tokens;  // concept text tokens, strongest first
};

struct InteractionSequence {
  std::string user_id;
  std::vector<std::string> items;  // chronological
  std::optional<Persona> persona;
};

// Oracle record of how the synthetic world was generated. Per-interaction
// concepts hold the sampled interest concept, or -1 for a noise draw.
struct WorldTruth {
  std::vector<std::vector<double>> concept_centers;       // n_concepts x d_item
  std::vector<std::vector<double>> user_interest_mixtures;  // per user, sums to 1
  std::vector<std::vector<int>> interaction_concepts;     // per user, per step
  double transition_noise = 0.0;
};

struct EvalPair {
  std::string user_id;
  std::vector<std::string> history;
  std::string target;
};

struct SplitDataset {
  std::vector<InteractionSequence> train;  // per-user sequence minus last two items
  std::vector<EvalPair> valid;
  std::vector<EvalPair> test;
  int skipped = 0;  // sequences shorter than 3
};

struct SynthConfig {
  int n_concepts = 4;
  int items_per_concept = 50;
  int n_users = 1000;
  int d_item = 16;
  int seq_len_min = 8;
  int seq_len_max = 24;
  double transition_noise = 0.3;
  double concept_scale = 4.0;   // spread of concept centers
  double item_std = 1.0;        // item scatter around its center
  double mixture_alpha = 0.3;   // Dirichlet concentration of user interests
  int n_text = 32;              // text vocabulary size; concepts use ids [0, n_concepts)
  int caption_len = 4;
  int min_interactions = 3;     // set to 5 to mimic the sparse-user filter
};

ItemCatalog load_catalog(const std::string& path);
void save_catalog(const ItemCatalog& catalog, const std::string& path);

std::vector<InteractionSequence> load_interactions(const std::string& path);
void save_interactions(const std::vector<InteractionSequence>& seqs, const std::string& path);

void save_world_truth(const WorldTruth& world, const std::string& path);
WorldTruth load_world_truth(const std::string& path);

struct SyntheticWorld {
  ItemCatalog catalog;
  std::vector<InteractionSequence> sequences;
  WorldTruth truth;
};

SyntheticWorld synthesize_world(const SynthConfig& config, std::uint64_t seed);

SplitDataset leave_one_out_split(const std::vector<InteractionSequence>& seqs);

InteractionSequence truncate_history(const InteractionSequence& seq, int max_len);
std::vector<std::string> truncate_history(const std::vector<std::string>& items, int max_len);

}  // namespace genrec
