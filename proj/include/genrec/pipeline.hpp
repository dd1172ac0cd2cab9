#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "genrec/alignment.hpp"
#include "genrec/codebook.hpp"
#include "genrec/config.hpp"
#include "genrec/corpus.hpp"
#include "genrec/eval.hpp"
#include "genrec/reasoning.hpp"
#include "genrec/think_ahead.hpp"

namespace genrec {

// Everything the training stages share: data, split, codebook, trie, vocab,
// and the model/stream settings resolved from the run config.
struct StageContext {
  ItemCatalog catalog;
  std::vector<InteractionSequence> sequences;
  WorldTruth truth;
  bool have_truth = false;  // synthetic worlds only
  SplitDataset split;
  Codebook codebook;
  ItemTrie trie;
  Vocabulary vocab;
  ModelConfig model;
  StreamConfig stream;
  MixtureSpec mixture;
};

StageContext build_context(const RunConfig& cfg, std::uint64_t seed);

// Arm trainers. Base = sequential-only next-item training. IA adds the
// token warm-up substage and the full multi-task mixture.
PolicyParameters train_base(const StageContext& ctx, const RunConfig& cfg, std::uint64_t seed);
PolicyParameters train_ia(const StageContext& ctx, const RunConfig& cfg, std::uint64_t seed);

// Rationale distillation over sampled training cut points. `model_teacher`
// non-null switches from the oracle teacher to self-distillation.
std::vector<RationaleSample> distill_rationales(const StageContext& ctx, const RunConfig& cfg,
                                                const PolicyParameters* model_teacher,
                                                std::uint64_t seed);

TrainResult train_sft(PolicyParameters& p, const StageContext& ctx, const RunConfig& cfg,
                      const std::vector<RationaleSample>& samples, std::uint64_t seed);

std::vector<GrpoPrompt> build_grpo_prompts(const StageContext& ctx, const RunConfig& cfg,
                                           std::uint64_t seed);

// GRPO against a frozen copy of `p` taken at entry.
std::vector<GrpoUpdateStats> train_rl(PolicyParameters& p, const StageContext& ctx,
                                      const RunConfig& cfg, std::uint64_t seed);

RankingMetrics eval_model(const StageContext& ctx, const RunConfig& cfg,
                          const PolicyParameters& p, bool reasoning, std::uint64_t seed);

// Trains and evaluates all three arms per seed; one world per seed.
AblationTable run_ablation(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                           std::ostream* log = nullptr);

struct ServeSimOutcome {
  LatencyReport latency;
  int cache_hits = 0;
  int serves = 0;
  double target_prefix_coverage = 0.0;  // fraction of users whose target 2-prefix was cached
};

// Precomputes candidate prefixes for the first serve.users test users with
// p_reason, then serves each with p_online, timing the monolithic
// reason-then-decode path on the same contexts for comparison.
ServeSimOutcome serve_sim(const StageContext& ctx, const RunConfig& cfg,
                          const PolicyParameters& p_reason, const PolicyParameters& p_online,
                          const std::string& cache_path, std::uint64_t seed);

// Chains the full run — data, codebook, three stages, per-arm evaluation,
// serve simulation — writing artifacts under out_dir. report.tsv carries no
// timings, so equal seeds reproduce it byte for byte.
void run_full_pipeline(const RunConfig& cfg, const std::string& out_dir,
                       std::ostream* log = nullptr);

}  // namespace genrec
