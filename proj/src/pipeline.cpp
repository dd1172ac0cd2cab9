#include "genrec/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <stdexcept>

namespace genrec {

namespace {

// Fixed substream tags so stages draw from independent, reproducible streams.
enum : std::uint64_t {
  kSeedWorld = 101,
  kSeedCodebook = 102,
  kSeedInit = 1,
  kSeedWarmup = 2,
  kSeedIntegrate = 3,
  kSeedDistill = 4,
  kSeedSft = 5,
  kSeedPromptPool = 6,
  kSeedRl = 7,
  kSeedEval = 8,
  kSeedPrecompute = 9,
};

SynthConfig synth_config(const RunConfig& cfg) {
  SynthConfig s;
  s.n_concepts = cfg.get_int("world.n_concepts");
  s.items_per_concept = cfg.get_int("world.items_per_concept");
  s.n_users = cfg.get_int("world.n_users");
  s.d_item = cfg.get_int("world.d_item");
  s.seq_len_min = cfg.get_int("world.seq_len_min");
  s.seq_len_max = cfg.get_int("world.seq_len_max");
  s.transition_noise = cfg.get_double("world.noise");
  s.concept_scale = cfg.get_double("world.concept_scale");
  s.item_std = cfg.get_double("world.item_std");
  s.mixture_alpha = cfg.get_double("world.mixture_alpha");
  s.n_text = cfg.get_int("world.n_text");
  s.caption_len = cfg.get_int("world.caption_len");
  s.min_interactions = cfg.get_int("world.min_interactions");
  return s;
}

struct CutPoint {
  std::vector<std::string> history;
  std::string target;
};

CutPoint draw_cut(const SplitDataset& split, int max_history, Rng& rng) {
  const auto& seq = split.train[rng.uniform_int(split.train.size())];
  if (seq.items.size() < 2) throw std::runtime_error("pipeline: training sequence too short");
  std::size_t j = 1 + rng.uniform_int(seq.items.size() - 1);
  CutPoint cut;
  cut.history = truncate_history(
      std::vector<std::string>(seq.items.begin(), seq.items.begin() + j), max_history);
  cut.target = seq.items[j];
  return cut;
}

}  // namespace

StageContext build_context(const RunConfig& cfg, std::uint64_t seed) {
  StageContext ctx;
  const std::string& catalog_path = cfg.get("data.catalog");
  const std::string& inter_path = cfg.get("data.interactions");
  if (!catalog_path.empty() || !inter_path.empty()) {
    if (catalog_path.empty() || inter_path.empty())
      throw std::runtime_error("pipeline: data.catalog and data.interactions must be set together");
    ctx.catalog = load_catalog(catalog_path);
    ctx.sequences = load_interactions(inter_path);
    ctx.have_truth = false;
  } else {
    SyntheticWorld world = synthesize_world(synth_config(cfg), derive_seed(seed, kSeedWorld));
    ctx.catalog = std::move(world.catalog);
    ctx.sequences = std::move(world.sequences);
    ctx.truth = std::move(world.truth);
    ctx.have_truth = true;
  }
  ctx.split = leave_one_out_split(ctx.sequences);
  if (ctx.split.train.empty()) throw std::runtime_error("pipeline: no usable training sequences");

  std::vector<int> k = cfg.get_int_list("codebook.k");
  int levels = cfg.get_int("codebook.levels");
  if (static_cast<int>(k.size()) != levels)
    throw std::runtime_error("pipeline: codebook.k must list exactly codebook.levels entries");
  ctx.codebook = resolve_collisions(
      fit_codebook(ctx.catalog, levels, k, derive_seed(seed, kSeedCodebook),
                   cfg.get_int("codebook.max_iters")),
      ctx.catalog);
  ctx.trie = build_trie(ctx.codebook);
  ctx.vocab = Vocabulary::make(cfg.get_int("world.n_text"), k);

  ctx.model.dim = cfg.get_int("model.d");
  ctx.model.n_layers = cfg.get_int("model.layers");
  ctx.model.n_heads = cfg.get_int("model.heads");
  ctx.model.p_max = cfg.get_int("model.p_max");
  ctx.model.ff_mult = cfg.get_int("model.ff_mult");

  ctx.stream.max_history = cfg.get_int("align.max_history");
  ctx.stream.persona_max_items = cfg.get_int("align.persona_max_items");
  ctx.stream.general_len = cfg.get_int("align.general_len");
  ctx.stream.p_max = ctx.model.p_max;

  ctx.mixture.persona = cfg.get_double("align.persona");
  ctx.mixture.sequential = cfg.get_double("align.sequential");
  ctx.mixture.captioning = cfg.get_double("align.captioning");
  ctx.mixture.general_lm = cfg.get_double("align.general_lm");
  ctx.mixture.validate();
  return ctx;
}

PolicyParameters train_base(const StageContext& ctx, const RunConfig& cfg, std::uint64_t seed) {
  PolicyParameters p = init_policy(ctx.model, ctx.vocab, derive_seed(seed, kSeedInit));
  MixtureSpec seq_only{0.0, 1.0, 0.0, 0.0};
  SampleStream stream(ctx.catalog, ctx.split, ctx.codebook, ctx.vocab, seq_only, ctx.stream,
                      derive_seed(seed, kSeedIntegrate));
  multitask_integrate(p, stream, cfg.get_int("train.integrate_steps"),
                      cfg.get_double("train.integrate_lr"), cfg.get_int("train.batch_size"),
                      cfg.get_double("train.clip_norm"));
  return p;
}

PolicyParameters train_ia(const StageContext& ctx, const RunConfig& cfg, std::uint64_t seed) {
  PolicyParameters p = init_policy(ctx.model, ctx.vocab, derive_seed(seed, kSeedInit));
  {
    SampleStream warm(ctx.catalog, ctx.split, ctx.codebook, ctx.vocab, ctx.mixture, ctx.stream,
                      derive_seed(seed, kSeedWarmup));
    token_warmup(p, warm, cfg.get_int("train.warmup_steps"), cfg.get_double("train.warmup_lr"),
                 cfg.get_int("train.batch_size"), cfg.get_double("train.clip_norm"));
  }
  SampleStream stream(ctx.catalog, ctx.split, ctx.codebook, ctx.vocab, ctx.mixture, ctx.stream,
                      derive_seed(seed, kSeedIntegrate));
  multitask_integrate(p, stream, cfg.get_int("train.integrate_steps"),
                      cfg.get_double("train.integrate_lr"), cfg.get_int("train.batch_size"),
                      cfg.get_double("train.clip_norm"));
  return p;
}

std::vector<RationaleSample> distill_rationales(const StageContext& ctx, const RunConfig& cfg,
                                                const PolicyParameters* model_teacher,
                                                std::uint64_t seed) {
  RationaleTeacher teacher;
  const std::string& kind = cfg.get("sft.teacher");
  if (kind == "oracle") {
    if (!ctx.have_truth)
      throw std::runtime_error(
          "distill_rationales: oracle teacher needs a synthetic world; set sft.teacher = model "
          "for loaded data");
    teacher.kind = TeacherKind::kOracle;
    teacher.world = &ctx.truth;
  } else if (kind == "model") {
    if (!model_teacher)
      throw std::runtime_error("distill_rationales: sft.teacher = model but no teacher policy");
    teacher.kind = TeacherKind::kModel;
    teacher.policy = model_teacher;
  } else {
    throw std::runtime_error("distill_rationales: sft.teacher must be oracle or model, got " +
                             kind);
  }
  teacher.m_max = cfg.get_int("sft.m_max");

  int n = cfg.get_int("sft.samples");
  int retrieve_k = cfg.get_int("sft.retrieve_k");
  int max_history = cfg.get_int("align.max_history");
  Rng rng(derive_seed(seed, kSeedDistill));
  std::vector<RationaleSample> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    CutPoint cut = draw_cut(ctx.split, max_history, rng);
    RationaleSample s;
    s.history = cut.history;
    s.target = cut.target;
    s.pruned = retrieve_topk(cut.history, cut.target, retrieve_k, ctx.catalog);
    s.rationale = generate_rationale(teacher, s.pruned, s.target, ctx.catalog, ctx.vocab,
                                     ctx.codebook, derive_seed(seed, kSeedDistill, i));
    samples.push_back(std::move(s));
  }
  return samples;
}

TrainResult train_sft(PolicyParameters& p, const StageContext& ctx, const RunConfig& cfg,
                      const std::vector<RationaleSample>& samples, std::uint64_t seed) {
  return sft_reasoning(p, samples, cfg.get_int("sft.steps"), cfg.get_double("sft.lr"),
                       cfg.get_int("sft.batch_size"), ctx.vocab, ctx.codebook, ctx.model.p_max,
                       derive_seed(seed, kSeedSft), cfg.get_double("train.clip_norm"));
}

std::vector<GrpoPrompt> build_grpo_prompts(const StageContext& ctx, const RunConfig& cfg,
                                           std::uint64_t seed) {
  int pool = cfg.get_int("rl.prompt_pool");
  int max_history = cfg.get_int("align.max_history");
  Rng rng(derive_seed(seed, kSeedPromptPool));
  std::vector<GrpoPrompt> prompts;
  prompts.reserve(pool);
  for (int i = 0; i < pool; ++i) {
    CutPoint cut = draw_cut(ctx.split, max_history, rng);
    GrpoPrompt prompt;
    prompt.context = render_history_context(cut.history, ctx.vocab, ctx.codebook);
    prompt.context.push_back(ctx.vocab.think_begin());
    prompt.target = ctx.codebook.assignment.at(cut.target);
    prompts.push_back(std::move(prompt));
  }
  return prompts;
}

std::vector<GrpoUpdateStats> train_rl(PolicyParameters& p, const StageContext& ctx,
                                      const RunConfig& cfg, std::uint64_t seed) {
  GrpoConfig gcfg;
  gcfg.group_size = cfg.get_int("rl.group_size");
  gcfg.beam_width = cfg.get_int("rl.beam_width");
  gcfg.lr = cfg.get_double("rl.lr");
  gcfg.kl_coeff = cfg.get_double("rl.kl_coeff");
  gcfg.clip_ratio = cfg.get_double("rl.clip_ratio");
  gcfg.epochs = cfg.get_int("rl.epochs");
  gcfg.temperature = cfg.get_double("rl.temperature");
  gcfg.m_max = cfg.get_int("rl.m_max");
  gcfg.prompts_per_update = cfg.get_int("rl.prompts_per_update");
  gcfg.minibatch_prompts = cfg.get_int("rl.minibatch_prompts");
  gcfg.clip_norm = cfg.get_double("train.clip_norm");

  std::vector<GrpoPrompt> prompts = build_grpo_prompts(ctx, cfg, seed);
  PolicyParameters ref = p;  // frozen reference for the KL anchor
  return grpo_train(p, ref, prompts, gcfg, ctx.trie, cfg.get_int("rl.updates"),
                    derive_seed(seed, kSeedRl));
}

RankingMetrics eval_model(const StageContext& ctx, const RunConfig& cfg,
                          const PolicyParameters& p, bool reasoning, std::uint64_t seed) {
  EvalConfig ecfg;
  ecfg.beam_width = cfg.get_int("eval.beam_width");
  ecfg.max_history = cfg.get_int("eval.max_history");
  ecfg.reasoning = reasoning;
  ecfg.m_max = cfg.get_int("sft.m_max");
  return evaluate_ranking(p, ctx.split.test, ctx.codebook, ctx.vocab, ctx.trie, ecfg,
                          derive_seed(seed, kSeedEval));
}

AblationTable run_ablation(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                           std::ostream* log) {
  if (seeds.empty()) throw std::runtime_error("run_ablation: need at least one seed");
  AblationTable table;
  table.arms = {{"Base", {}, {}}, {"Base+IA", {}, {}}, {"Base+IA+R", {}, {}}};
  for (std::uint64_t seed : seeds) {
    if (log) *log << "[ablate] seed " << seed << ": building world\n";
    StageContext ctx = build_context(cfg, seed);

    if (log) *log << "[ablate] seed " << seed << ": Base\n";
    PolicyParameters base = train_base(ctx, cfg, seed);
    RankingMetrics m_base = eval_model(ctx, cfg, base, false, seed);

    if (log) *log << "[ablate] seed " << seed << ": Base+IA\n";
    PolicyParameters ia = train_ia(ctx, cfg, seed);
    RankingMetrics m_ia = eval_model(ctx, cfg, ia, false, seed);

    if (log) *log << "[ablate] seed " << seed << ": Base+IA+R\n";
    PolicyParameters iar = ia;
    auto samples = distill_rationales(ctx, cfg, &ia, seed);
    train_sft(iar, ctx, cfg, samples, seed);
    train_rl(iar, ctx, cfg, seed);
    RankingMetrics m_iar = eval_model(ctx, cfg, iar, true, seed);

    table.arms[0].seeds.push_back(seed);
    table.arms[0].per_seed.push_back(std::move(m_base));
    table.arms[1].seeds.push_back(seed);
    table.arms[1].per_seed.push_back(std::move(m_ia));
    table.arms[2].seeds.push_back(seed);
    table.arms[2].per_seed.push_back(std::move(m_iar));
    if (log)
      *log << "[ablate] seed " << seed << ": R@10 " << table.arms[0].per_seed.back().recall.at(10)
           << " / " << table.arms[1].per_seed.back().recall.at(10) << " / "
           << table.arms[2].per_seed.back().recall.at(10) << "\n";
  }
  table.validate();
  return table;
}

ServeSimOutcome serve_sim(const StageContext& ctx, const RunConfig& cfg,
                          const PolicyParameters& p_reason, const PolicyParameters& p_online,
                          const std::string& cache_path, std::uint64_t seed) {
  int n_users = std::min<int>(cfg.get_int("serve.users"), static_cast<int>(ctx.split.test.size()));
  if (n_users < 1) throw std::runtime_error("serve_sim: no test users to serve");
  int paths = cfg.get_int("serve.paths");
  int beam_width = cfg.get_int("serve.beam_width");
  int top_k = cfg.get_int("serve.top_k");
  int max_history = cfg.get_int("eval.max_history");
  int m_max = cfg.get_int("sft.m_max");

  std::filesystem::remove(cache_path);
  CacheStore store(cache_path);

  ServeSimOutcome outcome;
  int covered = 0;
  std::vector<std::vector<int>> contexts(n_users);
  for (int u = 0; u < n_users; ++u) {
    const EvalPair& pair = ctx.split.test[u];
    std::vector<std::string> history = truncate_history(pair.history, max_history);
    contexts[u] = render_history_context(history, ctx.vocab, ctx.codebook);
    CandidatePrefixSet set =
        precompute_candidates(p_reason, contexts[u], pair.user_id, paths, beam_width, ctx.trie,
                              derive_seed(seed, kSeedPrecompute, u), 1.0, m_max);
    store.put(set);
    const ItemTokenTuple& tgt = ctx.codebook.assignment.at(pair.target);
    if (set.prefixes.count({tgt.tokens[0], tgt.tokens[1]})) ++covered;
  }
  outcome.target_prefix_coverage = static_cast<double>(covered) / n_users;

  std::vector<ServeResult> results;
  std::vector<double> mono_ms;
  for (int u = 0; u < n_users; ++u) {
    std::vector<int> serve_ctx = contexts[u];
    serve_ctx.push_back(ctx.vocab.item_begin());
    ServeResult res = serve(p_online, serve_ctx, store, ctx.split.test[u].user_id, top_k, ctx.trie);
    if (res.cache_hit) ++outcome.cache_hits;
    results.push_back(std::move(res));

    // Monolithic comparison: reason and decode in one pass on the same context.
    auto t0 = std::chrono::steady_clock::now();
    std::vector<int> mono_ctx = contexts[u];
    mono_ctx.push_back(ctx.vocab.think_begin());
    SampleOptions opts;
    opts.max_len = m_max + 1;
    opts.stop_tokens = {ctx.vocab.think_end()};
    std::vector<int> tau =
        sample_sequence(p_reason, mono_ctx, opts, derive_seed(seed, kSeedPrecompute, u));
    mono_ctx.insert(mono_ctx.end(), tau.begin(), tau.end());
    if (tau.empty() || tau.back() != ctx.vocab.think_end())
      mono_ctx.push_back(ctx.vocab.think_end());
    mono_ctx.push_back(ctx.vocab.item_begin());
    beam_search(p_reason, mono_ctx, top_k, ctx.codebook.levels, &ctx.trie);
    auto t1 = std::chrono::steady_clock::now();
    mono_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  outcome.serves = n_users;
  outcome.latency = latency_report(results, mono_ms);
  return outcome;
}

void run_full_pipeline(const RunConfig& cfg, const std::string& out_dir, std::ostream* log) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::uint64_t seed = cfg.get_u64("seed");
  cfg.write_resolved(out_dir + "/config.resolved");

  if (log) *log << "[pipeline] building data and codebook\n";
  StageContext ctx = build_context(cfg, seed);
  if (ctx.have_truth) {
    save_catalog(ctx.catalog, out_dir + "/catalog.tsv");
    save_interactions(ctx.sequences, out_dir + "/interactions.tsv");
    save_world_truth(ctx.truth, out_dir + "/world_truth.tsv");
  }
  save_codebook(ctx.codebook, out_dir + "/codebook.bin");

  if (log) *log << "[pipeline] training Base\n";
  PolicyParameters base = train_base(ctx, cfg, seed);
  save_checkpoint(base, out_dir + "/ckpt_base.bin");
  RankingMetrics m_base = eval_model(ctx, cfg, base, false, seed);

  if (log) *log << "[pipeline] training Base+IA\n";
  PolicyParameters ia = train_ia(ctx, cfg, seed);
  save_checkpoint(ia, out_dir + "/ckpt_ia.bin");
  RankingMetrics m_ia = eval_model(ctx, cfg, ia, false, seed);

  if (log) *log << "[pipeline] reasoning SFT\n";
  PolicyParameters iar = ia;
  auto samples = distill_rationales(ctx, cfg, &ia, seed);
  train_sft(iar, ctx, cfg, samples, seed);
  save_checkpoint(iar, out_dir + "/ckpt_sft.bin");

  if (log) *log << "[pipeline] GRPO\n";
  auto rl_stats = train_rl(iar, ctx, cfg, seed);
  save_checkpoint(iar, out_dir + "/ckpt_rl.bin");
  save_grpo_log(rl_stats, out_dir + "/grpo_log.tsv");
  RankingMetrics m_iar = eval_model(ctx, cfg, iar, true, seed);

  AblationTable table;
  table.arms = {{"Base", {seed}, {m_base}},
                {"Base+IA", {seed}, {m_ia}},
                {"Base+IA+R", {seed}, {m_iar}}};
  emit_report(table, out_dir + "/report.tsv");

  if (log) *log << "[pipeline] serve simulation\n";
  ServeSimOutcome sim = serve_sim(ctx, cfg, iar, ia, out_dir + "/cache.kv", seed);
  save_latency_report(sim.latency, out_dir + "/latency.tsv");
  if (log)
    *log << "[pipeline] done; cache hits " << sim.cache_hits << "/" << sim.serves
         << ", target-prefix coverage " << sim.target_prefix_coverage << "\n";
}

}  // namespace genrec
