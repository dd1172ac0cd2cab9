#pragma once

// Shared fixtures: a small synthetic world wired up with codebook, trie,
// vocabulary, and a small randomly initialized policy.

#include <string>

#include "genrec/alignment.hpp"
#include "genrec/codebook.hpp"
#include "genrec/corpus.hpp"
#include "genrec/policy.hpp"
#include "genrec/vocab.hpp"

namespace testing {

struct Rig {
  genrec::SyntheticWorld world;
  genrec::SplitDataset split;
  genrec::Codebook codebook;
  genrec::ItemTrie trie;
  genrec::Vocabulary vocab;
  genrec::ModelConfig model;
  genrec::PolicyParameters policy;
};

inline genrec::SynthConfig small_world_config() {
  genrec::SynthConfig cfg;
  cfg.n_concepts = 3;
  cfg.items_per_concept = 8;
  cfg.n_users = 40;
  cfg.d_item = 6;
  cfg.seq_len_min = 5;
  cfg.seq_len_max = 9;
  cfg.n_text = 12;
  cfg.caption_len = 3;
  return cfg;
}

inline Rig make_rig(std::uint64_t seed = 7, std::vector<int> k = {4, 4, 8},
                    genrec::SynthConfig world_cfg = small_world_config()) {
  Rig rig;
  rig.world = genrec::synthesize_world(world_cfg, seed);
  rig.split = genrec::leave_one_out_split(rig.world.sequences);
  rig.codebook = genrec::resolve_collisions(
      genrec::fit_codebook(rig.world.catalog, static_cast<int>(k.size()), k, seed), rig.world.catalog);
  rig.trie = genrec::build_trie(rig.codebook);
  rig.vocab = genrec::Vocabulary::make(world_cfg.n_text, k);
  rig.model.dim = 16;
  rig.model.n_layers = 1;
  rig.model.n_heads = 2;
  rig.model.p_max = 128;
  rig.model.ff_mult = 2;
  rig.policy = genrec::init_policy(rig.model, rig.vocab, genrec::derive_seed(seed, 99));
  return rig;
}

inline std::string tmp_path(const std::string& name) { return "/tmp/genrec_test_" + name; }

}  // namespace testing
