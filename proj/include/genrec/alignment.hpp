#pragma once

#include <optional>
#include <string>
#include <vector>

#include "genrec/codebook.hpp"
#include "genrec/corpus.hpp"
#include "genrec/policy.hpp"
#include "genrec/vocab.hpp"

namespace genrec {

enum class TaskKind { kPersonaGrounding, kSequential, kCaptioning, kGeneralLm };

const char* task_name(TaskKind kind);

struct TaskSample {
  TaskKind kind = TaskKind::kSequential;
  std::vector<std::string> history;  // sequential / persona
  std::string target;                // sequential / captioning item
  std::optional<Persona> persona;    // persona grounding
  std::vector<int> text;             // captioning caption / general_lm text
};

struct RenderedSample {
  std::vector<int> tokens;
  std::vector<bool> loss_mask;  // true at supervised target positions
};

RenderedSample render_template(const TaskSample& sample, const ItemCatalog& catalog,
                               const Vocabulary& vocab, const Codebook& cb, int p_max);

// [bos] + one item_begin/tuple/item_end group per history item; the shared
// prefix of every prompt grammar.
std::vector<int> render_history_context(const std::vector<std::string>& history,
                                        const Vocabulary& vocab, const Codebook& cb);

// History prompt + wrapped rationale + wrapped target item. Loss covers the
// rationale tokens, think_end, the target tuple and the closing item_end.
RenderedSample render_reasoning_sample(const std::vector<std::string>& history,
                                       const std::vector<int>& rationale,
                                       const std::string& target, const Vocabulary& vocab,
                                       const Codebook& cb, int p_max);

struct MixtureSpec {
  double persona = 0.2430;
  double sequential = 0.6573;
  double captioning = 0.0494;
  double general_lm = 0.0503;

  void validate() const;
  double ratio(TaskKind kind) const;
};

struct StreamConfig {
  int max_history = 50;        // truncation for sequential prompts
  int persona_max_items = 8;   // items interleaved in persona samples
  int general_len = 16;        // synthetic text length
  int p_max = 512;
};

// Draws a task per sample i.i.d. from the mixture, then a sample from that
// task's data, rendered and ready to train on.
class SampleStream {
 public:
  SampleStream(const ItemCatalog& catalog, const SplitDataset& split, const Codebook& cb,
               const Vocabulary& vocab, const MixtureSpec& spec, const StreamConfig& cfg,
               std::uint64_t seed);

  RenderedSample next();                 // mixture-selected task
  RenderedSample next(TaskKind kind);    // forced task
  TaskKind last_kind() const { return last_kind_; }

 private:
  TaskSample draw(TaskKind kind);
  const ItemCatalog* catalog_;
  const SplitDataset* split_;
  const Codebook* cb_;
  const Vocabulary* vocab_;
  MixtureSpec spec_;
  StreamConfig cfg_;
  Rng rng_;
  TaskKind last_kind_ = TaskKind::kSequential;
};

struct TrainResult {
  std::vector<double> losses;  // one entry per step
  double final_loss() const { return losses.empty() ? 0.0 : losses.back(); }
};

// Trains only the itemic token embedding rows on persona grounding samples.
TrainResult token_warmup(PolicyParameters& p, SampleStream& stream, int steps, double lr,
                         int batch_size, double clip_norm = 1.0);

// Full-parameter training on the mixed stream.
TrainResult multitask_integrate(PolicyParameters& p, SampleStream& stream, int steps, double lr,
                                int batch_size, double clip_norm = 1.0);

}  // namespace genrec
