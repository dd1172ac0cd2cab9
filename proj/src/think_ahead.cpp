#include "genrec/think_ahead.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace genrec {

namespace {

constexpr char kMagic[] = "GRCACHE1";
constexpr std::uint32_t kVersion = 1;

std::string encode_record(const CandidatePrefixSet& set) {
  std::ostringstream payload;
  write_string(payload, set.user_id);
  write_u32(payload, static_cast<std::uint32_t>(set.prefixes.size()));
  for (const auto& [s1, s2] : set.prefixes) {
    write_u32(payload, static_cast<std::uint32_t>(s1));
    write_u32(payload, static_cast<std::uint32_t>(s2));
  }
  write_u32(payload, static_cast<std::uint32_t>(set.paths));
  write_u32(payload, static_cast<std::uint32_t>(set.beam_width));
  write_string(payload, set.model_id);
  write_u64(payload, static_cast<std::uint64_t>(set.created_at));
  std::string body = payload.str();

  std::ostringstream rec;
  write_u32(rec, static_cast<std::uint32_t>(body.size()));
  rec.write(body.data(), static_cast<std::streamsize>(body.size()));
  write_u32(rec, crc32(reinterpret_cast<const unsigned char*>(body.data()), body.size()));
  return rec.str();
}

CandidatePrefixSet decode_record(const std::string& body) {
  std::istringstream in(body);
  CandidatePrefixSet set;
  set.user_id = read_string(in);
  std::uint32_t n = read_u32(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    int s1 = static_cast<int>(read_u32(in));
    int s2 = static_cast<int>(read_u32(in));
    set.prefixes.emplace(s1, s2);
  }
  set.paths = static_cast<int>(read_u32(in));
  set.beam_width = static_cast<int>(read_u32(in));
  set.model_id = read_string(in);
  set.created_at = static_cast<std::int64_t>(read_u64(in));
  return set;
}

// Scans the log; invalid or torn tail records terminate the scan.
void scan_log(const std::string& path, const std::function<void(CandidatePrefixSet)>& visit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open cache file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != kMagic) throw std::runtime_error("not a cache file: " + path);
  if (read_u32(in) != kVersion) throw std::runtime_error("unsupported cache version");
  while (true) {
    std::uint32_t len;
    try {
      len = read_u32(in);
    } catch (const std::exception&) {
      break;  // clean end of log
    }
    std::string body(len, '\0');
    in.read(body.data(), len);
    if (!in) break;  // torn record
    std::uint32_t crc;
    try {
      crc = read_u32(in);
    } catch (const std::exception&) {
      break;
    }
    if (crc != crc32(reinterpret_cast<const unsigned char*>(body.data()), body.size())) break;
    visit(decode_record(body));
  }
}

}  // namespace

CandidatePrefixSet precompute_candidates(const PolicyParameters& p_reason,
                                         const std::vector<int>& user_ctx,
                                         const std::string& user_id, int paths, int beam_width,
                                         const ItemTrie& trie, std::uint64_t seed,
                                         double temperature, int m_max,
                                         const std::string& model_id) {
  if (paths < 1 || beam_width < 1)
    throw std::runtime_error("precompute_candidates: T and m must be >= 1");
  const Vocabulary& vocab = p_reason.vocab;

  CandidatePrefixSet set;
  set.user_id = user_id;
  set.paths = paths;
  set.beam_width = beam_width;
  set.model_id = model_id;
  set.created_at = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();

  int failures = 0;
  std::string last_error;
  for (int i = 0; i < paths; ++i) {
    try {
      std::vector<int> ctx = user_ctx;
      ctx.push_back(vocab.think_begin());
      SampleOptions opts;
      opts.temperature = temperature;
      opts.greedy = temperature <= 0.0;  // temperature-0 limit collapses the paths
      opts.max_len = m_max + 1;
      opts.stop_tokens = {vocab.think_end()};
      std::vector<int> tau = sample_sequence(p_reason, ctx, opts, derive_seed(seed, i));
      ctx.insert(ctx.end(), tau.begin(), tau.end());
      if (tau.empty() || tau.back() != vocab.think_end()) ctx.push_back(vocab.think_end());
      ctx.push_back(vocab.item_begin());
      BeamResult beam = beam_search(p_reason, ctx, beam_width, 2, &trie);
      for (const auto& cand : beam.candidates)
        set.prefixes.emplace(cand.tuple.tokens[0], cand.tuple.tokens[1]);
    } catch (const std::exception& e) {
      ++failures;
      last_error = e.what();
    }
  }
  if (failures == paths)
    throw std::runtime_error("precompute_candidates: every reasoning path failed to decode: " +
                             last_error);
  return set;
}

CacheStore::CacheStore(std::string path) : path_(std::move(path)) {
  std::ifstream probe(path_, std::ios::binary);
  if (!probe) {
    std::ofstream out(path_, std::ios::binary);
    if (!out) throw std::runtime_error("cannot create cache file: " + path_);
    out.write(kMagic, 8);
    write_u32(out, kVersion);
  }
}

void CacheStore::put(const CandidatePrefixSet& set) {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot open cache file for writing: " + path_);
  std::string rec = encode_record(set);
  out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  out.flush();
  if (!out) throw std::runtime_error("failed writing cache record to " + path_);
}

std::optional<CandidatePrefixSet> CacheStore::load(const std::string& user_id) const {
  std::optional<CandidatePrefixSet> found;
  scan_log(path_, [&](CandidatePrefixSet set) {
    if (set.user_id == user_id) found = std::move(set);  // last writer wins
  });
  return found;
}

std::vector<std::string> CacheStore::user_ids() const {
  std::set<std::string> ids;
  scan_log(path_, [&](CandidatePrefixSet set) { ids.insert(set.user_id); });
  return {ids.begin(), ids.end()};
}

void CacheStore::compact() {
  std::map<std::string, CandidatePrefixSet> latest;
  scan_log(path_, [&](CandidatePrefixSet set) { latest[set.user_id] = std::move(set); });
  std::string tmp = path_ + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write cache tmp file: " + tmp);
    out.write(kMagic, 8);
    write_u32(out, kVersion);
    for (const auto& [id, set] : latest) {
      std::string rec = encode_record(set);
      out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    }
    out.flush();
    if (!out) throw std::runtime_error("failed writing cache tmp file: " + tmp);
  }
  std::filesystem::rename(tmp, path_);
}

ServeResult serve(const PolicyParameters& p_online, const std::vector<int>& user_ctx,
                  const CacheStore& store, const std::string& user_id, int top_k,
                  const ItemTrie& trie) {
  auto t0 = std::chrono::steady_clock::now();
  std::optional<CandidatePrefixSet> cache = store.load(user_id);

  BeamResult beam;
  ServeResult result;
  if (cache && !cache->prefixes.empty()) {
    beam = prefix_constrained_beam(p_online, user_ctx, cache->prefixes, trie, top_k);
    result.cache_hit = true;
  } else {
    // Graceful degradation: plain trie-constrained decoding.
    beam = beam_search(p_online, user_ctx, top_k, trie.levels(), &trie);
    result.cache_hit = false;
  }

  for (const auto& cand : beam.candidates) {
    if (static_cast<int>(result.items.size()) == top_k) break;
    result.items.push_back({trie.item_at(cand.tuple), cand.tuple, cand.logprob});
  }
  auto t1 = std::chrono::steady_clock::now();
  result.stage2_latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return result;
}

namespace {

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  // nearest-rank
  std::size_t idx = static_cast<std::size_t>(std::ceil(q * v.size()));
  if (idx > 0) --idx;
  return v[std::min(idx, v.size() - 1)];
}

}  // namespace

LatencyReport latency_report(const std::vector<ServeResult>& runs,
                             const std::vector<double>& full_pipeline_ms) {
  if (runs.empty()) throw std::runtime_error("latency_report: need at least one run");
  LatencyReport report;
  report.runs = static_cast<int>(runs.size());
  std::vector<double> stage2;
  for (const auto& r : runs) stage2.push_back(r.stage2_latency_ms);
  report.stage2_p50 = percentile(stage2, 0.5);
  report.stage2_p95 = percentile(stage2, 0.95);
  report.stage2_max = *std::max_element(stage2.begin(), stage2.end());
  if (!full_pipeline_ms.empty()) {
    report.monolithic_p50 = percentile(full_pipeline_ms, 0.5);
    report.monolithic_p95 = percentile(full_pipeline_ms, 0.95);
    report.monolithic_max = *std::max_element(full_pipeline_ms.begin(), full_pipeline_ms.end());
  }
  return report;
}

void save_latency_report(const LatencyReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write latency report: " + path);
  out.precision(6);
  out << "metric\tstage2_ms\tmonolithic_ms\n";
  out << "p50\t" << report.stage2_p50 << '\t' << report.monolithic_p50 << '\n';
  out << "p95\t" << report.stage2_p95 << '\t' << report.monolithic_p95 << '\n';
  out << "max\t" << report.stage2_max << '\t' << report.monolithic_max << '\n';
  out << "runs\t" << report.runs << '\t' << report.runs << '\n';
}

}  // namespace genrec
