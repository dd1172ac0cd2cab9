#include "genrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace genrec {

RankingMetrics metrics_from_ranks(const std::vector<int>& ranks, const std::vector<int>& ks) {
  if (ranks.empty()) throw std::runtime_error("metrics_from_ranks: no ranks");
  RankingMetrics m;
  m.ranks = ranks;
  m.n_users = static_cast<int>(ranks.size());
  for (int k : ks) {
    double hits = 0.0, gain = 0.0;
    for (int r : ranks) {
      if (r >= 1 && r <= k) {
        hits += 1.0;
        gain += 1.0 / std::log2(static_cast<double>(r) + 1.0);
      }
    }
    m.recall[k] = hits / m.n_users;
    m.ndcg[k] = gain / m.n_users;
  }
  return m;
}

RankingMetrics evaluate_ranking(const PolicyParameters& p, const std::vector<EvalPair>& test,
                                const Codebook& cb, const Vocabulary& vocab, const ItemTrie& trie,
                                const EvalConfig& cfg, std::uint64_t seed) {
  if (test.empty()) throw std::runtime_error("evaluate_ranking: empty test set");
  int max_k = *std::max_element(cfg.ks.begin(), cfg.ks.end());
  if (cfg.beam_width < max_k)
    throw std::runtime_error("evaluate_ranking: beam width " + std::to_string(cfg.beam_width) +
                             " < reported K " + std::to_string(max_k));

  std::vector<int> ranks;
  ranks.reserve(test.size());
  for (std::size_t u = 0; u < test.size(); ++u) {
    const EvalPair& pair = test[u];
    auto tgt = cb.assignment.find(pair.target);
    if (tgt == cb.assignment.end())
      throw std::runtime_error("evaluate_ranking: target not in codebook: " + pair.target);

    std::vector<std::string> history = truncate_history(pair.history, cfg.max_history);
    std::vector<int> ctx = render_history_context(history, vocab, cb);
    if (cfg.reasoning) {
      ctx.push_back(vocab.think_begin());
      SampleOptions opts;
      opts.temperature = cfg.temperature;
      opts.max_len = cfg.m_max + 1;
      opts.stop_tokens = {vocab.think_end()};
      std::vector<int> tau = sample_sequence(p, ctx, opts, derive_seed(seed, u));
      ctx.insert(ctx.end(), tau.begin(), tau.end());
      if (tau.empty() || tau.back() != vocab.think_end()) ctx.push_back(vocab.think_end());
    }
    ctx.push_back(vocab.item_begin());

    BeamResult beam = beam_search(p, ctx, cfg.beam_width, cb.levels, &trie);
    int rank = 0;
    for (std::size_t i = 0; i < beam.candidates.size(); ++i) {
      if (beam.candidates[i].tuple == tgt->second) {
        rank = static_cast<int>(i) + 1;
        break;
      }
    }
    ranks.push_back(rank);
  }
  return metrics_from_ranks(ranks, cfg.ks);
}

double ArmResult::mean_recall(int k) const {
  if (per_seed.empty()) throw std::runtime_error("ArmResult: no runs for arm " + arm);
  double s = 0.0;
  for (const auto& m : per_seed) s += m.recall.at(k);
  return s / per_seed.size();
}

double ArmResult::mean_ndcg(int k) const {
  if (per_seed.empty()) throw std::runtime_error("ArmResult: no runs for arm " + arm);
  double s = 0.0;
  for (const auto& m : per_seed) s += m.ndcg.at(k);
  return s / per_seed.size();
}

void AblationTable::validate() const {
  static const char* expected[] = {"Base", "Base+IA", "Base+IA+R"};
  if (arms.size() != 3) throw std::runtime_error("AblationTable: expected 3 arms");
  for (int i = 0; i < 3; ++i)
    if (arms[i].arm != expected[i])
      throw std::runtime_error("AblationTable: arm " + std::to_string(i) + " must be " +
                               expected[i] + ", got " + arms[i].arm);
  for (const auto& a : arms) {
    if (a.per_seed.empty()) throw std::runtime_error("AblationTable: arm " + a.arm + " has no runs");
    if (a.per_seed.size() != a.seeds.size())
      throw std::runtime_error("AblationTable: seed/run count mismatch in arm " + a.arm);
  }
}

const std::vector<ReferenceRow>& reference_table() {
  static const std::vector<ReferenceRow> rows = {
      {"Base", 0.0460, 0.0654, 0.0314, 0.0377},
      {"Base+IA", 0.0532, 0.0735, 0.0342, 0.0402},
      {"Base+IA+R", 0.0563, 0.0791, 0.0398, 0.0471},
  };
  return rows;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void emit_report(const AblationTable& table, const std::string& path) {
  table.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_report: cannot write " + path);

  out << "arm\tseed\tsource\tR@5\tR@10\tN@5\tN@10\n";
  for (const auto& a : table.arms) {
    for (std::size_t i = 0; i < a.per_seed.size(); ++i) {
      const RankingMetrics& m = a.per_seed[i];
      out << a.arm << '\t' << a.seeds[i] << "\tmeasured\t" << fmt(m.recall.at(5)) << '\t'
          << fmt(m.recall.at(10)) << '\t' << fmt(m.ndcg.at(5)) << '\t' << fmt(m.ndcg.at(10))
          << '\n';
    }
    out << a.arm << "\tmean\tmeasured\t" << fmt(a.mean_recall(5)) << '\t' << fmt(a.mean_recall(10))
        << '\t' << fmt(a.mean_ndcg(5)) << '\t' << fmt(a.mean_ndcg(10)) << '\n';
  }
  // Full-scale published numbers; context only, not reproduced at this scale.
  for (const auto& r : reference_table()) {
    out << r.arm << "\treference\treference_not_reproduced\t" << fmt(r.r5) << '\t' << fmt(r.r10) << '\t'
        << fmt(r.n5) << '\t' << fmt(r.n10) << '\n';
  }

  out << '\n';
  out << "n_arms=" << table.arms.size() << '\n';
  out << "n_seeds=" << table.arms[0].seeds.size() << '\n';
  out << "r10_base=" << fmt(table.arms[0].mean_recall(10)) << '\n';
  out << "r10_ia=" << fmt(table.arms[1].mean_recall(10)) << '\n';
  out << "r10_iar=" << fmt(table.arms[2].mean_recall(10)) << '\n';
  out << "r10_gain=" << fmt(table.arms[2].mean_recall(10) - table.arms[0].mean_recall(10)) << '\n';
  if (!out) throw std::runtime_error("emit_report: write failed for " + path);
}

std::map<std::string, double> parse_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("parse_report: cannot open " + path);
  std::map<std::string, double> cells;
  std::string line;
  std::vector<std::string> columns;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.find('=') != std::string::npos && line.find('\t') == std::string::npos) {
      auto eq = line.find('=');
      cells["summary/" + line.substr(0, eq)] = std::stod(line.substr(eq + 1));
      continue;
    }
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (!header_done) {
      columns = fields;
      header_done = true;
      continue;
    }
    if (fields.size() != columns.size())
      throw std::runtime_error("parse_report: ragged row in " + path);
    for (std::size_t c = 3; c < fields.size(); ++c)
      cells[fields[0] + "/" + fields[1] + "/" + columns[c]] = std::stod(fields[c]);
  }
  if (!header_done) throw std::runtime_error("parse_report: no table in " + path);
  return cells;
}

}  // namespace genrec
