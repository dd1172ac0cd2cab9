#pragma once

#include <functional>
#include <string>
#include <vector>

#include "genrec/alignment.hpp"
#include "genrec/codebook.hpp"
#include "genrec/corpus.hpp"
#include "genrec/decoder.hpp"
#include "genrec/policy.hpp"

namespace genrec {

// Top-k history items by cosine similarity to the target embedding.
// Ties break toward recency (later position wins), then item_id.
std::vector<std::string> retrieve_topk(const std::vector<std::string>& history,
                                       const std::string& target, int k,
                                       const ItemCatalog& catalog);

enum class TeacherKind { kOracle, kModel };

struct RationaleTeacher {
  TeacherKind kind = TeacherKind::kOracle;
  const WorldTruth* world = nullptr;         // oracle teacher
  const PolicyParameters* policy = nullptr;  // model teacher (post-alignment)
  int m_max = 24;
  double temperature = 1.0;
};

// Rationale token sequence (no think delimiters). The oracle teacher emits
// the target's concept token followed by the pruned evidence items' concept
// tokens; the model teacher samples from the aligned policy.
std::vector<int> generate_rationale(const RationaleTeacher& teacher,
                                    const std::vector<std::string>& pruned,
                                    const std::string& target, const ItemCatalog& catalog,
                                    const Vocabulary& vocab, const Codebook& cb,
                                    std::uint64_t seed);

struct RationaleSample {
  std::vector<std::string> history;  // raw noisy history, already truncated
  std::vector<std::string> pruned;   // top-k evidence (context for the teacher only)
  std::vector<int> rationale;
  std::string target;
};

// Joint rationale + next-item NLL over the raw history.
TrainResult sft_reasoning(PolicyParameters& p, const std::vector<RationaleSample>& samples,
                          int steps, double lr, int batch_size, const Vocabulary& vocab,
                          const Codebook& cb, int p_max, std::uint64_t seed,
                          double clip_norm = 1.0);

// Group-normalized advantages: (R - mean) / max(std, floor); all-equal
// groups yield exact zeros.
std::vector<double> group_advantages(const std::vector<double>& rewards, double std_floor);

struct GrpoConfig {
  int group_size = 16;       // |G|
  int beam_width = 32;       // K
  double lr = 1e-5;
  double kl_coeff = 0.001;   // beta
  double clip_ratio = 0.2;   // epsilon
  int epochs = 2;
  double temperature = 1.0;
  double std_floor = 1e-6;
  int m_max = 16;            // rationale length budget
  int prompts_per_update = 16;
  int minibatch_prompts = 4;
  double clip_norm = 1.0;
  RewardKind reward = RewardKind::kPositionalMatch;

  void validate() const;
};

struct GrpoPrompt {
  std::vector<int> context;  // history prompt ending with think_begin
  ItemTokenTuple target;
};

// One sampled rollout prepared for the surrogate update.
struct GrpoRollout {
  std::vector<int> seq;          // context + sampled rationale tokens
  int action_begin = 0;          // index of the first sampled token in seq
  std::vector<double> old_logprobs;  // one per action token, under the sampling policy
  std::vector<Vec> ref_rows;     // reference log-prob rows, one per action token
  Rollout rollout;               // rationale + beam + reward
};

struct RolloutGroup {
  int prompt_index = 0;
  std::vector<GrpoRollout> rollouts;
  std::vector<double> advantages;
  bool degenerate = false;
};

struct GrpoTokenStats {
  double kl_sum = 0.0;
  long tokens = 0;
  long clipped = 0;
};

// Accumulates the gradient of -(clipped surrogate) + beta*KL for one rollout,
// scaled by `weight` per action token. Exposed for direct verification.
GrpoTokenStats grpo_accumulate_gradient(const PolicyParameters& p, const GrpoRollout& rollout,
                                        double advantage, const GrpoConfig& cfg, double weight,
                                        Gradients& grads);

struct GrpoUpdateStats {
  int update = 0;
  double mean_reward = 0.0;
  double mean_abs_advantage = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  int degenerate_groups = 0;
};

using GrpoObserver = std::function<void(const GrpoUpdateStats&, const std::vector<RolloutGroup>&)>;

// GRPO over the Rollout-Beam reward. `ref` is the frozen post-SFT policy the
// KL penalty anchors to. One update = collect rollouts for a batch of
// prompts with the current policy, then `epochs` passes of minibatched
// surrogate steps.
std::vector<GrpoUpdateStats> grpo_train(PolicyParameters& p, const PolicyParameters& ref,
                                        const std::vector<GrpoPrompt>& prompts,
                                        const GrpoConfig& cfg, const ItemTrie& trie,
                                        int n_updates, std::uint64_t seed,
                                        const GrpoObserver& observer = nullptr);

// Tab-separated run log: step, mean reward, mean |advantage|, KL, clip fraction.
void save_grpo_log(const std::vector<GrpoUpdateStats>& stats, const std::string& path);

}  // namespace genrec
