#include "genrec/alignment.hpp"

#include <cmath>
#include <stdexcept>

namespace genrec {

const char* task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kPersonaGrounding: return "persona_grounding";
    case TaskKind::kSequential: return "sequential";
    case TaskKind::kCaptioning: return "captioning";
    case TaskKind::kGeneralLm: return "general_lm";
  }
  return "?";
}

namespace {

void append_item(std::vector<int>& tokens, std::vector<bool>& mask, const Vocabulary& vocab,
                 const Codebook& cb, const std::string& item_id, bool supervised) {
  auto it = cb.assignment.find(item_id);
  if (it == cb.assignment.end())
    throw std::runtime_error("render: unknown item id: " + item_id);
  tokens.push_back(vocab.item_begin());
  mask.push_back(false);
  for (int tok : vocab.tuple_tokens(it->second)) {
    tokens.push_back(tok);
    mask.push_back(supervised);
  }
  tokens.push_back(vocab.item_end());
  mask.push_back(supervised);
}

void check_length(const RenderedSample& r, int p_max, const std::string& what) {
  if (static_cast<int>(r.tokens.size()) > p_max)
    throw std::runtime_error("render: sample too long (" + std::to_string(r.tokens.size()) +
                             " tokens) for " + what);
}

}  // namespace

std::vector<int> render_history_context(const std::vector<std::string>& history,
                                        const Vocabulary& vocab, const Codebook& cb) {
  std::vector<int> tokens{vocab.bos()};
  std::vector<bool> mask{false};
  for (const auto& id : history) append_item(tokens, mask, vocab, cb, id, false);
  return tokens;
}

RenderedSample render_template(const TaskSample& sample, const ItemCatalog& catalog,
                               const Vocabulary& vocab, const Codebook& cb, int p_max) {
  RenderedSample r;
  r.tokens.push_back(vocab.bos());
  r.loss_mask.push_back(false);
  switch (sample.kind) {
    case TaskKind::kSequential: {
      for (const auto& id : sample.history)
        append_item(r.tokens, r.loss_mask, vocab, cb, id, false);
      append_item(r.tokens, r.loss_mask, vocab, cb, sample.target, true);
      check_length(r, p_max, "sequential target " + sample.target);
      break;
    }
    case TaskKind::kPersonaGrounding: {
      if (!sample.persona)
        throw std::runtime_error("render: persona sample carries no persona record");
      // Persona text, then each item interleaved with its concept token.
      for (int tok : sample.persona->attribute_tokens) {
        r.tokens.push_back(tok);
        r.loss_mask.push_back(true);
      }
      for (int tok : sample.persona->interest_tokens) {
        r.tokens.push_back(tok);
        r.loss_mask.push_back(true);
      }
      for (const auto& id : sample.history) {
        append_item(r.tokens, r.loss_mask, vocab, cb, id, true);
        const ItemRecord& rec = catalog.at(id);
        if (!rec.text_tokens.empty()) {
          r.tokens.push_back(rec.text_tokens.front());
          r.loss_mask.push_back(true);
        }
      }
      // Pre-training framing: every position after bos is supervised.
      for (std::size_t j = 1; j < r.loss_mask.size(); ++j) r.loss_mask[j] = true;
      check_length(r, p_max, "persona grounding");
      break;
    }
    case TaskKind::kCaptioning: {
      append_item(r.tokens, r.loss_mask, vocab, cb, sample.target, false);
      for (int tok : sample.text) {
        r.tokens.push_back(tok);
        r.loss_mask.push_back(true);
      }
      r.tokens.push_back(vocab.eos());
      r.loss_mask.push_back(false);
      check_length(r, p_max, "captioning target " + sample.target);
      break;
    }
    case TaskKind::kGeneralLm: {
      for (int tok : sample.text) {
        r.tokens.push_back(tok);
        r.loss_mask.push_back(true);
      }
      r.tokens.push_back(vocab.eos());
      r.loss_mask.push_back(true);
      check_length(r, p_max, "general_lm");
      break;
    }
  }
  return r;
}

RenderedSample render_reasoning_sample(const std::vector<std::string>& history,
                                       const std::vector<int>& rationale,
                                       const std::string& target, const Vocabulary& vocab,
                                       const Codebook& cb, int p_max) {
  RenderedSample r;
  r.tokens.push_back(vocab.bos());
  r.loss_mask.push_back(false);
  for (const auto& id : history) append_item(r.tokens, r.loss_mask, vocab, cb, id, false);
  r.tokens.push_back(vocab.think_begin());
  r.loss_mask.push_back(false);
  for (int tok : rationale) {
    r.tokens.push_back(tok);
    r.loss_mask.push_back(true);
  }
  r.tokens.push_back(vocab.think_end());
  r.loss_mask.push_back(true);
  append_item(r.tokens, r.loss_mask, vocab, cb, target, true);
  check_length(r, p_max, "reasoning target " + target);
  return r;
}

void MixtureSpec::validate() const {
  if (persona < 0 || sequential < 0 || captioning < 0 || general_lm < 0)
    throw std::runtime_error("MixtureSpec: ratios must be non-negative");
  double sum = persona + sequential + captioning + general_lm;
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::runtime_error("MixtureSpec: ratios must sum to 1");
}

double MixtureSpec::ratio(TaskKind kind) const {
  switch (kind) {
    case TaskKind::kPersonaGrounding: return persona;
    case TaskKind::kSequential: return sequential;
    case TaskKind::kCaptioning: return captioning;
    case TaskKind::kGeneralLm: return general_lm;
  }
  return 0.0;
}

SampleStream::SampleStream(const ItemCatalog& catalog, const SplitDataset& split,
                           const Codebook& cb, const Vocabulary& vocab, const MixtureSpec& spec,
                           const StreamConfig& cfg, std::uint64_t seed)
    : catalog_(&catalog),
      split_(&split),
      cb_(&cb),
      vocab_(&vocab),
      spec_(spec),
      cfg_(cfg),
      rng_(seed) {
  spec_.validate();
  bool have_persona = false;
  for (const auto& seq : split.train)
    if (seq.persona) have_persona = true;
  if (spec_.sequential > 0 && split.train.empty())
    throw std::runtime_error("SampleStream: sequential ratio > 0 but no training sequences");
  if (spec_.persona > 0 && !have_persona)
    throw std::runtime_error("SampleStream: persona ratio > 0 but no personas in the data");
  if (spec_.captioning > 0 && catalog.size() == 0)
    throw std::runtime_error("SampleStream: captioning ratio > 0 but the catalog is empty");
}

TaskSample SampleStream::draw(TaskKind kind) {
  TaskSample s;
  s.kind = kind;
  switch (kind) {
    case TaskKind::kSequential: {
      // A training sequence and a cut point: predict item j from what precedes it.
      const auto& seq = split_->train[rng_.uniform_int(split_->train.size())];
      std::size_t j = 1 + rng_.uniform_int(seq.items.size() - 1);
      std::vector<std::string> history(seq.items.begin(), seq.items.begin() + j);
      s.history = truncate_history(history, cfg_.max_history);
      s.target = seq.items[j];
      break;
    }
    case TaskKind::kPersonaGrounding: {
      const InteractionSequence* seq = nullptr;
      do {
        seq = &split_->train[rng_.uniform_int(split_->train.size())];
      } while (!seq->persona);
      s.persona = seq->persona;
      s.history = truncate_history(seq->items, cfg_.persona_max_items);
      break;
    }
    case TaskKind::kCaptioning: {
      const auto& rec = catalog_->items[rng_.uniform_int(catalog_->size())];
      s.target = rec.item_id;
      s.text = rec.text_tokens;
      break;
    }
    case TaskKind::kGeneralLm: {
      // Fixed-order Markov chain over the text vocabulary; stands in for a
      // real text corpus.
      int n = vocab_->n_text;
      int cur = static_cast<int>(rng_.uniform_int(n));
      for (int i = 0; i < cfg_.general_len; ++i) {
        s.text.push_back(cur);
        cur = static_cast<int>((cur * 5 + 1 + rng_.uniform_int(3)) % n);
      }
      break;
    }
  }
  return s;
}

RenderedSample SampleStream::next(TaskKind kind) {
  last_kind_ = kind;
  return render_template(draw(kind), *catalog_, *vocab_, *cb_, cfg_.p_max);
}

RenderedSample SampleStream::next() {
  double r = rng_.uniform();
  TaskKind kind;
  if (r < spec_.persona)
    kind = TaskKind::kPersonaGrounding;
  else if (r < spec_.persona + spec_.sequential)
    kind = TaskKind::kSequential;
  else if (r < spec_.persona + spec_.sequential + spec_.captioning)
    kind = TaskKind::kCaptioning;
  else
    kind = TaskKind::kGeneralLm;
  return next(kind);
}

namespace {

TrainResult train_loop(PolicyParameters& p, SampleStream& stream, int steps, double lr,
                       int batch_size, double clip_norm, const FreezeMask& mask,
                       std::optional<TaskKind> forced) {
  TrainResult result;
  OptimizerState opt = OptimizerState::make(p);
  for (int step = 0; step < steps; ++step) {
    std::vector<TrainingExample> batch;
    batch.reserve(batch_size);
    for (int b = 0; b < batch_size; ++b) {
      RenderedSample s = forced ? stream.next(*forced) : stream.next();
      batch.push_back({std::move(s.tokens), std::move(s.loss_mask)});
    }
    auto [loss, grads] = backward(p, batch);
    apply_update(p, grads, opt, lr, clip_norm, mask);
    result.losses.push_back(loss);
  }
  return result;
}

}  // namespace

TrainResult token_warmup(PolicyParameters& p, SampleStream& stream, int steps, double lr,
                         int batch_size, double clip_norm) {
  return train_loop(p, stream, steps, lr, batch_size, clip_norm,
                    FreezeMask::itemic_embedding_rows(p), TaskKind::kPersonaGrounding);
}

TrainResult multitask_integrate(PolicyParameters& p, SampleStream& stream, int steps, double lr,
                                int batch_size, double clip_norm) {
  return train_loop(p, stream, steps, lr, batch_size, clip_norm, FreezeMask::all(p), std::nullopt);
}

}  // namespace genrec
