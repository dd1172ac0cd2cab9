// Command-line front end: every stage of the pipeline, driven by a flat
// key=value config. Data goes to files under the run directory; logs go to
// stderr.

#include <CLI11.hpp>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "genrec/pipeline.hpp"

namespace {

genrec::RunConfig load_config(const std::string& path, int seed_override) {
  genrec::RunConfig cfg =
      path.empty() ? genrec::RunConfig::make_default() : genrec::RunConfig::load(path);
  if (seed_override >= 0) cfg.set("seed", std::to_string(seed_override));
  return cfg;
}

std::string default_out_dir(const genrec::RunConfig& cfg) {
  std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::localtime(&now));
  return std::string("runs/") + stamp + "_" + cfg.get("seed");
}

void write_metrics(const genrec::RankingMetrics& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(10);
  for (const auto& [k, v] : m.recall) out << "recall@" << k << "=" << v << '\n';
  for (const auto& [k, v] : m.ndcg) out << "ndcg@" << k << "=" << v << '\n';
  out << "users=" << m.n_users << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale reasoning-augmented generative recommender"};
  app.require_subcommand(1);
  app.fallthrough();  // shared options may follow the subcommand name

  std::string config_path, out_dir;
  int seed_override = -1;
  app.add_option("--config", config_path, "key=value config file (defaults used if omitted)");
  app.add_option("--seed", seed_override, "override the config seed");
  app.add_option("--out", out_dir, "run directory (default runs/<timestamp>_<seed>)");

  std::string ckpt_path, ckpt_online_path;
  bool eval_reasoning = false;

  auto* c_synth = app.add_subcommand("synth", "synthesize a world and write its TSVs");
  auto* c_fit = app.add_subcommand("fit-codebook", "fit the residual k-means codebook");
  auto* c_pre = app.add_subcommand("pretrain", "train the Base and +IA checkpoints");
  auto* c_sft = app.add_subcommand("sft", "reasoning activation fine-tune of --ckpt");
  c_sft->add_option("--ckpt", ckpt_path, "input checkpoint (post-alignment)")->required();
  auto* c_rl = app.add_subcommand("rl", "GRPO reasoning enhancement of --ckpt");
  c_rl->add_option("--ckpt", ckpt_path, "input checkpoint (post-SFT)")->required();
  auto* c_eval = app.add_subcommand("eval", "leave-one-out ranking metrics for --ckpt");
  c_eval->add_option("--ckpt", ckpt_path, "checkpoint to evaluate")->required();
  c_eval->add_flag("--reasoning", eval_reasoning, "sample a rationale before decoding");
  auto* c_abl = app.add_subcommand("ablate", "three-arm ablation over ablate.seeds");
  auto* c_prec = app.add_subcommand("precompute", "materialize per-user candidate prefixes");
  c_prec->add_option("--ckpt", ckpt_path, "reasoning checkpoint")->required();
  auto* c_serve = app.add_subcommand("serve-sim", "two-stage serving simulation with latency");
  c_serve->add_option("--ckpt", ckpt_path, "reasoning checkpoint (offline stage)")->required();
  c_serve->add_option("--ckpt-online", ckpt_online_path, "lightweight online checkpoint")
      ->required();
  auto* c_pipe = app.add_subcommand("pipeline", "run every stage end to end");

  CLI11_PARSE(app, argc, argv);

  try {
    genrec::RunConfig cfg = load_config(config_path, seed_override);
    std::uint64_t seed = cfg.get_u64("seed");
    if (out_dir.empty()) out_dir = default_out_dir(cfg);
    std::filesystem::create_directories(out_dir);
    cfg.write_resolved(out_dir + "/config.resolved");
    std::ostream& log = std::cerr;

    if (*c_pipe) {
      genrec::run_full_pipeline(cfg, out_dir, &log);
      return 0;
    }

    if (*c_synth) {
      genrec::StageContext ctx = genrec::build_context(cfg, seed);
      if (!ctx.have_truth)
        throw std::runtime_error("synth: data.catalog is set; nothing to synthesize");
      genrec::save_catalog(ctx.catalog, out_dir + "/catalog.tsv");
      genrec::save_interactions(ctx.sequences, out_dir + "/interactions.tsv");
      genrec::save_world_truth(ctx.truth, out_dir + "/world_truth.tsv");
      log << "[synth] " << ctx.catalog.size() << " items, " << ctx.sequences.size()
          << " users -> " << out_dir << "\n";
      return 0;
    }

    genrec::StageContext ctx = genrec::build_context(cfg, seed);

    if (*c_fit) {
      genrec::save_codebook(ctx.codebook, out_dir + "/codebook.bin");
      log << "[fit-codebook] " << ctx.codebook.assignment.size() << " items -> " << out_dir
          << "/codebook.bin\n";
    } else if (*c_pre) {
      genrec::save_codebook(ctx.codebook, out_dir + "/codebook.bin");
      log << "[pretrain] Base\n";
      genrec::PolicyParameters base = genrec::train_base(ctx, cfg, seed);
      genrec::save_checkpoint(base, out_dir + "/ckpt_base.bin");
      log << "[pretrain] Base+IA\n";
      genrec::PolicyParameters ia = genrec::train_ia(ctx, cfg, seed);
      genrec::save_checkpoint(ia, out_dir + "/ckpt_ia.bin");
    } else if (*c_sft) {
      genrec::PolicyParameters p = genrec::load_checkpoint(ckpt_path);
      auto samples = genrec::distill_rationales(ctx, cfg, &p, seed);
      genrec::TrainResult r = genrec::train_sft(p, ctx, cfg, samples, seed);
      genrec::save_checkpoint(p, out_dir + "/ckpt_sft.bin");
      log << "[sft] final loss " << r.final_loss() << "\n";
    } else if (*c_rl) {
      genrec::PolicyParameters p = genrec::load_checkpoint(ckpt_path);
      auto stats = genrec::train_rl(p, ctx, cfg, seed);
      genrec::save_checkpoint(p, out_dir + "/ckpt_rl.bin");
      genrec::save_grpo_log(stats, out_dir + "/grpo_log.tsv");
      if (!stats.empty())
        log << "[rl] mean reward " << stats.front().mean_reward << " -> "
            << stats.back().mean_reward << "\n";
    } else if (*c_eval) {
      genrec::PolicyParameters p = genrec::load_checkpoint(ckpt_path);
      genrec::RankingMetrics m = genrec::eval_model(ctx, cfg, p, eval_reasoning, seed);
      write_metrics(m, out_dir + "/eval.tsv");
      log << "[eval] R@10 " << m.recall.at(10) << ", N@10 " << m.ndcg.at(10) << " over "
          << m.n_users << " users\n";
    } else if (*c_abl) {
      genrec::AblationTable table = genrec::run_ablation(cfg, cfg.get_u64_list("ablate.seeds"), &log);
      genrec::emit_report(table, out_dir + "/report.tsv");
      log << "[ablate] report -> " << out_dir << "/report.tsv\n";
    } else if (*c_prec) {
      genrec::PolicyParameters p = genrec::load_checkpoint(ckpt_path);
      int n = std::min<int>(cfg.get_int("serve.users"), static_cast<int>(ctx.split.test.size()));
      std::filesystem::remove(out_dir + "/cache.kv");
      genrec::CacheStore store(out_dir + "/cache.kv");
      for (int u = 0; u < n; ++u) {
        const genrec::EvalPair& pair = ctx.split.test[u];
        auto hist = genrec::truncate_history(pair.history, cfg.get_int("eval.max_history"));
        auto user_ctx = genrec::render_history_context(hist, ctx.vocab, ctx.codebook);
        store.put(genrec::precompute_candidates(
            p, user_ctx, pair.user_id, cfg.get_int("serve.paths"),
            cfg.get_int("serve.beam_width"), ctx.trie, genrec::derive_seed(seed, 9, u), 1.0,
            cfg.get_int("sft.m_max")));
      }
      log << "[precompute] " << n << " users -> " << out_dir << "/cache.kv\n";
    } else if (*c_serve) {
      genrec::PolicyParameters p_reason = genrec::load_checkpoint(ckpt_path);
      genrec::PolicyParameters p_online = genrec::load_checkpoint(ckpt_online_path);
      genrec::ServeSimOutcome sim =
          genrec::serve_sim(ctx, cfg, p_reason, p_online, out_dir + "/cache.kv", seed);
      genrec::save_latency_report(sim.latency, out_dir + "/latency.tsv");
      log << "[serve-sim] " << sim.cache_hits << "/" << sim.serves
          << " cache hits, target-prefix coverage " << sim.target_prefix_coverage << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
