#include "genrec/reasoning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace genrec {

std::vector<std::string> retrieve_topk(const std::vector<std::string>& history,
                                       const std::string& target, int k,
                                       const ItemCatalog& catalog) {
  if (k < 1) throw std::runtime_error("retrieve_topk: k must be >= 1");
  if (history.empty()) throw std::runtime_error("retrieve_topk: empty history");
  const auto& tgt = catalog.at(target).embedding;
  double tgt_norm = std::sqrt(std::inner_product(tgt.begin(), tgt.end(), tgt.begin(), 0.0));

  struct Scored {
    double sim;
    std::size_t pos;
    std::string id;
  };
  // Latest occurrence of each distinct item.
  std::map<std::string, std::size_t> latest;
  for (std::size_t i = 0; i < history.size(); ++i) latest[history[i]] = i;

  std::vector<Scored> scored;
  for (const auto& [id, pos] : latest) {
    const auto& emb = catalog.at(id).embedding;
    double dot = std::inner_product(emb.begin(), emb.end(), tgt.begin(), 0.0);
    double norm = std::sqrt(std::inner_product(emb.begin(), emb.end(), emb.begin(), 0.0));
    double sim = (norm > 0.0 && tgt_norm > 0.0) ? dot / (norm * tgt_norm) : 0.0;
    scored.push_back({sim, pos, id});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    if (a.pos != b.pos) return a.pos > b.pos;  // recency: later wins
    return a.id < b.id;
  });
  std::vector<std::string> out;
  for (const auto& s : scored) {
    out.push_back(s.id);
    if (static_cast<int>(out.size()) == k) break;
  }
  return out;
}

std::vector<int> generate_rationale(const RationaleTeacher& teacher,
                                    const std::vector<std::string>& pruned,
                                    const std::string& target, const ItemCatalog& catalog,
                                    const Vocabulary& vocab, const Codebook& cb,
                                    std::uint64_t seed) {
  if (teacher.kind == TeacherKind::kOracle) {
    if (!teacher.world)
      throw std::runtime_error("generate_rationale: oracle teacher needs WorldTruth");
    std::vector<int> out;
    int tgt_concept = catalog.at(target).concept_id;
    if (tgt_concept < 0)
      throw std::runtime_error("generate_rationale: target has no concept label: " + target);
    out.push_back(tgt_concept);
    for (const auto& id : pruned) {
      if (static_cast<int>(out.size()) >= teacher.m_max) break;
      int c = catalog.at(id).concept_id;
      if (c >= 0) out.push_back(c);
    }
    if (static_cast<int>(out.size()) > teacher.m_max) out.resize(teacher.m_max);
    return out;
  }

  if (!teacher.policy)
    throw std::runtime_error("generate_rationale: model teacher needs an aligned policy");
  // Prompt: evidence items, the target item, then an open think block.
  std::vector<int> ctx = render_history_context(pruned, vocab, cb);
  {
    auto tail = render_history_context({target}, vocab, cb);
    ctx.insert(ctx.end(), tail.begin() + 1, tail.end());  // skip its bos
  }
  ctx.push_back(vocab.think_begin());
  SampleOptions opts;
  opts.temperature = teacher.temperature;
  opts.greedy = teacher.temperature <= 0.0;
  opts.max_len = teacher.m_max + 1;  // room for think_end
  opts.stop_tokens = {vocab.think_end()};
  std::vector<int> sampled = sample_sequence(*teacher.policy, ctx, opts, seed);
  if (!sampled.empty() && sampled.back() == vocab.think_end()) sampled.pop_back();
  if (static_cast<int>(sampled.size()) > teacher.m_max) sampled.resize(teacher.m_max);
  return sampled;
}

TrainResult sft_reasoning(PolicyParameters& p, const std::vector<RationaleSample>& samples,
                          int steps, double lr, int batch_size, const Vocabulary& vocab,
                          const Codebook& cb, int p_max, std::uint64_t seed, double clip_norm) {
  if (samples.empty()) throw std::runtime_error("sft_reasoning: no samples");
  std::vector<RenderedSample> rendered;
  rendered.reserve(samples.size());
  for (const auto& s : samples)
    rendered.push_back(render_reasoning_sample(s.history, s.rationale, s.target, vocab, cb, p_max));

  TrainResult result;
  OptimizerState opt = OptimizerState::make(p);
  Rng rng(seed);
  FreezeMask mask = FreezeMask::all(p);
  for (int step = 0; step < steps; ++step) {
    std::vector<TrainingExample> batch;
    for (int b = 0; b < batch_size; ++b) {
      const auto& r = rendered[rng.uniform_int(rendered.size())];
      batch.push_back({r.tokens, r.loss_mask});
    }
    auto [loss, grads] = backward(p, batch);
    apply_update(p, grads, opt, lr, clip_norm, mask);
    result.losses.push_back(loss);
  }
  return result;
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double std_floor) {
  if (rewards.size() < 2) throw std::runtime_error("group_advantages: need a group of >= 2");
  double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / rewards.size();
  bool all_equal = std::all_of(rewards.begin(), rewards.end(),
                               [&](double r) { return r == rewards.front(); });
  if (all_equal) return std::vector<double>(rewards.size(), 0.0);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= rewards.size();
  double denom = std::max(std::sqrt(var), std_floor);
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / denom);
  return out;
}

void GrpoConfig::validate() const {
  if (group_size < 2) throw std::runtime_error("GrpoConfig: group_size must be >= 2");
  if (beam_width < 1) throw std::runtime_error("GrpoConfig: beam_width must be >= 1");
  if (lr <= 0) throw std::runtime_error("GrpoConfig: lr must be positive");
  if (kl_coeff < 0 || clip_ratio < 0)
    throw std::runtime_error("GrpoConfig: kl_coeff and clip_ratio must be non-negative");
  if (epochs < 1) throw std::runtime_error("GrpoConfig: epochs must be >= 1");
  if (temperature <= 0) throw std::runtime_error("GrpoConfig: temperature must be positive");
}

GrpoTokenStats grpo_accumulate_gradient(const PolicyParameters& p, const GrpoRollout& rollout,
                                        double advantage, const GrpoConfig& cfg, double weight,
                                        Gradients& grads) {
  GrpoTokenStats stats;
  int n_actions = static_cast<int>(rollout.old_logprobs.size());
  if (n_actions == 0) return stats;
  ForwardCache fc = forward_full(p, rollout.seq);
  const int T = static_cast<int>(rollout.seq.size());
  Mat dlogits = Mat::Zero(T, p.vocab.size());

  for (int j = 0; j < n_actions; ++j) {
    int a_pos = rollout.action_begin + j;
    int t = a_pos - 1;
    int a = rollout.seq[a_pos];
    double lp_new = fc.logprobs(t, a);
    double ratio = std::exp(lp_new - rollout.old_logprobs[j]);
    if (!std::isfinite(ratio))
      throw std::runtime_error("grpo: non-finite importance ratio");
    bool clipped = (advantage > 0 && ratio > 1.0 + cfg.clip_ratio) ||
                   (advantage < 0 && ratio < 1.0 - cfg.clip_ratio);
    double coef = clipped ? 0.0 : ratio * advantage;
    if (clipped) ++stats.clipped;
    ++stats.tokens;

    Vec probs = fc.logprobs.row(t).array().exp();
    // d(-surrogate)/dlogits = coef * (p - onehot)
    dlogits.row(t) += (coef * weight) * probs.transpose();
    dlogits(t, a) -= coef * weight;

    // Exact categorical KL(pi_new || pi_ref) and its gradient.
    const Vec& ref = rollout.ref_rows[j];
    double kl = 0.0;
    for (Eigen::Index v = 0; v < probs.size(); ++v)
      kl += probs(v) * (fc.logprobs(t, v) - ref(v));
    stats.kl_sum += kl;
    if (cfg.kl_coeff > 0.0) {
      for (Eigen::Index v = 0; v < probs.size(); ++v)
        dlogits(t, v) += cfg.kl_coeff * weight * probs(v) * ((fc.logprobs(t, v) - ref(v)) - kl);
    }
  }
  backward_logits(p, fc, dlogits, grads);
  return stats;
}

std::vector<GrpoUpdateStats> grpo_train(PolicyParameters& p, const PolicyParameters& ref,
                                        const std::vector<GrpoPrompt>& prompts,
                                        const GrpoConfig& cfg, const ItemTrie& trie,
                                        int n_updates, std::uint64_t seed,
                                        const GrpoObserver& observer) {
  cfg.validate();
  if (prompts.empty()) throw std::runtime_error("grpo_train: no prompts");
  const Vocabulary& vocab = p.vocab;
  OptimizerState opt = OptimizerState::make(p);
  std::vector<GrpoUpdateStats> history;

  for (int update = 0; update < n_updates; ++update) {
    Rng rng(derive_seed(seed, update));
    int n_prompts = std::min<int>(cfg.prompts_per_update, static_cast<int>(prompts.size()));
    std::vector<int> chosen;
    for (int i = 0; i < n_prompts; ++i)
      chosen.push_back(static_cast<int>(rng.uniform_int(prompts.size())));

    GrpoUpdateStats stats;
    stats.update = update;
    double reward_sum = 0.0, abs_adv_sum = 0.0;
    long reward_count = 0, adv_count = 0;

    std::vector<RolloutGroup> groups;
    for (int pi = 0; pi < n_prompts; ++pi) {
      const GrpoPrompt& prompt = prompts[chosen[pi]];
      RolloutGroup group;
      group.prompt_index = chosen[pi];
      std::vector<double> rewards;
      for (int g = 0; g < cfg.group_size; ++g) {
        SampleOptions opts;
        opts.temperature = cfg.temperature;
        opts.max_len = cfg.m_max + 1;
        opts.stop_tokens = {vocab.think_end()};
        std::uint64_t rseed = derive_seed(seed, (static_cast<std::uint64_t>(update) << 20) | pi, g);
        std::vector<int> tau = sample_sequence(p, prompt.context, opts, rseed);

        std::vector<int> beam_ctx = prompt.context;
        beam_ctx.insert(beam_ctx.end(), tau.begin(), tau.end());
        if (tau.empty() || tau.back() != vocab.think_end()) beam_ctx.push_back(vocab.think_end());
        beam_ctx.push_back(vocab.item_begin());

        GrpoRollout r;
        r.rollout.rationale_tokens = tau;
        r.rollout.beam = beam_search(p, beam_ctx, cfg.beam_width, prompt.target.levels(), &trie);
        r.rollout.reward = rollout_beam_reward(r.rollout.beam, prompt.target, cfg.reward);
        r.seq = prompt.context;
        r.seq.insert(r.seq.end(), tau.begin(), tau.end());
        r.action_begin = static_cast<int>(prompt.context.size());
        rewards.push_back(static_cast<double>(r.rollout.reward));
        reward_sum += r.rollout.reward;
        ++reward_count;
        group.rollouts.push_back(std::move(r));
      }
      group.advantages = group_advantages(rewards, cfg.std_floor);
      group.degenerate = std::all_of(group.advantages.begin(), group.advantages.end(),
                                     [](double a) { return a == 0.0; });
      if (!group.degenerate) {
        for (double a : group.advantages) {
          abs_adv_sum += std::abs(a);
          ++adv_count;
        }
        // Old log-probs under the collection policy and reference rows.
        for (auto& r : group.rollouts) {
          ForwardCache fc_old = forward_full(p, r.seq);
          ForwardCache fc_ref = forward_full(ref, r.seq);
          for (std::size_t a_pos = r.action_begin; a_pos < r.seq.size(); ++a_pos) {
            int t = static_cast<int>(a_pos) - 1;
            r.old_logprobs.push_back(fc_old.logprobs(t, r.seq[a_pos]));
            r.ref_rows.push_back(fc_ref.logprobs.row(t).transpose());
          }
        }
      } else {
        ++stats.degenerate_groups;
      }
      groups.push_back(std::move(group));
    }

    std::vector<int> live;
    for (std::size_t gi = 0; gi < groups.size(); ++gi)
      if (!groups[gi].degenerate) live.push_back(static_cast<int>(gi));

    double kl_sum = 0.0;
    long kl_tokens = 0, clip_count = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      // Seeded shuffle of live groups.
      std::vector<int> order = live;
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_int(i)]);
      for (std::size_t begin = 0; begin < order.size();
           begin += static_cast<std::size_t>(cfg.minibatch_prompts)) {
        std::size_t end = std::min(order.size(), begin + cfg.minibatch_prompts);
        long tokens = 0;
        for (std::size_t i = begin; i < end; ++i)
          for (const auto& r : groups[order[i]].rollouts) tokens += r.old_logprobs.size();
        if (tokens == 0) continue;
        double weight = 1.0 / static_cast<double>(tokens);
        Gradients grads;
        grads.data.assign(p.size(), 0.0);
        for (std::size_t i = begin; i < end; ++i) {
          RolloutGroup& group = groups[order[i]];
          for (std::size_t g = 0; g < group.rollouts.size(); ++g) {
            auto ts = grpo_accumulate_gradient(p, group.rollouts[g], group.advantages[g], cfg,
                                               weight, grads);
            kl_sum += ts.kl_sum;
            kl_tokens += ts.tokens;
            clip_count += ts.clipped;
          }
        }
        apply_update(p, grads, opt, cfg.lr, cfg.clip_norm, FreezeMask::all(p));
      }
    }

    stats.mean_reward = reward_count ? reward_sum / reward_count : 0.0;
    stats.mean_abs_advantage = adv_count ? abs_adv_sum / adv_count : 0.0;
    stats.mean_kl = kl_tokens ? kl_sum / kl_tokens : 0.0;
    stats.clip_fraction = kl_tokens ? static_cast<double>(clip_count) / kl_tokens : 0.0;
    history.push_back(stats);
    if (observer) observer(stats, groups);
  }
  return history;
}

void save_grpo_log(const std::vector<GrpoUpdateStats>& stats, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write grpo log: " + path);
  out << "step\tmean_reward\tmean_abs_advantage\tkl\tclip_fraction\n";
  out.precision(10);
  for (const auto& s : stats)
    out << s.update << '\t' << s.mean_reward << '\t' << s.mean_abs_advantage << '\t' << s.mean_kl
        << '\t' << s.clip_fraction << '\n';
}

}  // namespace genrec
