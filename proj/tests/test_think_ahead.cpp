#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "genrec/think_ahead.hpp"
#include "helpers.hpp"

using namespace genrec;

namespace {

CandidatePrefixSet sample_set(const std::string& user, int salt) {
  CandidatePrefixSet s;
  s.user_id = user;
  s.prefixes = {{salt % 5, (salt * 3) % 7}, {salt % 2, salt % 3}};
  s.paths = 4;
  s.beam_width = 8;
  s.model_id = "ckpt_" + std::to_string(salt);
  s.created_at = 1700000000 + salt;
  return s;
}

}  // namespace

TEST_SUITE("think_ahead") {

TEST_CASE("cache round-trips a record and misses unknown users") {
  std::string path = testing::tmp_path("cache_rt.kv");
  std::remove(path.c_str());
  CacheStore store(path);
  CHECK(!store.load("nobody").has_value());

  CandidatePrefixSet s = sample_set("user_42", 9);
  store.put(s);
  auto got = store.load("user_42");
  REQUIRE(got.has_value());
  CHECK(*got == s);
  CHECK(!store.load("user_43").has_value());
  std::remove(path.c_str());
}

TEST_CASE("last writer wins per user") {
  std::string path = testing::tmp_path("cache_lww.kv");
  std::remove(path.c_str());
  CacheStore store(path);
  store.put(sample_set("u", 1));
  CandidatePrefixSet newer = sample_set("u", 2);
  store.put(newer);
  auto got = store.load("u");
  REQUIRE(got.has_value());
  CHECK(*got == newer);
  CHECK(store.user_ids() == std::vector<std::string>{"u"});
  std::remove(path.c_str());
}

TEST_CASE("a fresh reader sees records written by another handle") {
  std::string path = testing::tmp_path("cache_reader.kv");
  std::remove(path.c_str());
  CacheStore writer(path);
  writer.put(sample_set("shared", 3));
  CacheStore reader(path);
  auto got = reader.load("shared");
  REQUIRE(got.has_value());
  CHECK(*got == sample_set("shared", 3));
  std::remove(path.c_str());
}

TEST_CASE("compact keeps only the latest record per user") {
  std::string path = testing::tmp_path("cache_compact.kv");
  std::remove(path.c_str());
  CacheStore store(path);
  for (int i = 0; i < 6; ++i) store.put(sample_set("a", i));
  store.put(sample_set("b", 100));
  auto size_before = std::ifstream(path, std::ios::ate | std::ios::binary).tellg();
  store.compact();
  auto size_after = std::ifstream(path, std::ios::ate | std::ios::binary).tellg();
  CHECK(size_after < size_before);
  auto a = store.load("a");
  REQUIRE(a.has_value());
  CHECK(*a == sample_set("a", 5));
  REQUIRE(store.load("b").has_value());
  CHECK(store.user_ids().size() == 2);
  std::remove(path.c_str());
}

TEST_CASE("a torn tail is ignored, earlier records stay readable") {
  std::string path = testing::tmp_path("cache_torn.kv");
  std::remove(path.c_str());
  {
    CacheStore store(path);
    store.put(sample_set("ok", 7));
  }
  {
    // Simulate a crash mid-append: length prefix promises more bytes than exist.
    std::ofstream out(path, std::ios::binary | std::ios::app);
    const char garbage[] = "\xff\xff\x00\x00partial";
    out.write(garbage, sizeof(garbage) - 1);
  }
  CacheStore store(path);
  auto got = store.load("ok");
  REQUIRE(got.has_value());
  CHECK(*got == sample_set("ok", 7));
  CHECK(!store.load("phantom").has_value());
  std::remove(path.c_str());
}

TEST_CASE("a corrupted record body fails its checksum and is dropped") {
  std::string path = testing::tmp_path("cache_crc.kv");
  std::remove(path.c_str());
  {
    CacheStore store(path);
    store.put(sample_set("first", 1));
    store.put(sample_set("second", 2));
  }
  // Flip a byte near the end of the file (inside the last record's body).
  std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
  f.seekg(0, std::ios::end);
  auto end = f.tellg();
  f.seekp(static_cast<std::streamoff>(end) - 6);
  char b;
  f.seekg(static_cast<std::streamoff>(end) - 6);
  f.read(&b, 1);
  b = static_cast<char>(b ^ 0x5a);
  f.seekp(static_cast<std::streamoff>(end) - 6);
  f.write(&b, 1);
  f.close();

  CacheStore store(path);
  REQUIRE(store.load("first").has_value());  // untouched record survives
  CHECK(!store.load("second").has_value());  // corrupted one is dropped
  std::remove(path.c_str());
}

TEST_CASE("many-user round-trip preserves every field") {
  std::string path = testing::tmp_path("cache_many.kv");
  std::remove(path.c_str());
  CacheStore store(path);
  for (int i = 0; i < 50; ++i) store.put(sample_set("user_" + std::to_string(i), i));
  CHECK(store.user_ids().size() == 50);
  for (int i = 0; i < 50; i += 7) {
    auto got = store.load("user_" + std::to_string(i));
    REQUIRE(got.has_value());
    CandidatePrefixSet want = sample_set("user_" + std::to_string(i), i);
    CHECK(got->user_id == want.user_id);
    CHECK(got->prefixes == want.prefixes);
    CHECK(got->paths == want.paths);
    CHECK(got->beam_width == want.beam_width);
    CHECK(got->model_id == want.model_id);
    CHECK(got->created_at == want.created_at);
  }
  std::remove(path.c_str());
}

TEST_CASE("precompute bounds, determinism, and singleton case") {
  auto rig = testing::make_rig(121);
  std::vector<int> ctx{rig.vocab.bos(), rig.vocab.think_begin()};

  CandidatePrefixSet one = precompute_candidates(rig.policy, ctx, "u", 1, 1, rig.trie, 5, 1.0, 6);
  CHECK(one.prefixes.size() == 1);
  CHECK(one.paths == 1);
  CHECK(one.beam_width == 1);

  CandidatePrefixSet a = precompute_candidates(rig.policy, ctx, "u", 4, 3, rig.trie, 5, 1.0, 6);
  CandidatePrefixSet b = precompute_candidates(rig.policy, ctx, "u", 4, 3, rig.trie, 5, 1.0, 6);
  CHECK(a.prefixes == b.prefixes);
  CHECK(a.prefixes.size() <= 4u * 3u);
  for (const auto& [c1, c2] : a.prefixes)
    CHECK(!rig.trie.children({c1, c2}).empty());  // every prefix is occupied
}

TEST_CASE("greedy precompute with a saturating beam covers all occupied prefixes") {
  // Tiny world: every occupied (c1, c2) prefix must appear once m is wide
  // enough, because the single greedy rationale collapses all paths to one.
  SynthConfig cfg = testing::small_world_config();
  cfg.n_concepts = 2;
  cfg.items_per_concept = 5;
  cfg.n_users = 20;
  auto rig = testing::make_rig(122, {3, 3, 3}, cfg);

  std::set<std::pair<int, int>> occupied;
  for (const auto& [id, tuple] : rig.codebook.assignment)
    occupied.emplace(tuple.tokens[0], tuple.tokens[1]);

  std::vector<int> ctx{rig.vocab.bos(), rig.vocab.think_begin()};
  CandidatePrefixSet full = precompute_candidates(rig.policy, ctx, "u", 1,
                                                  static_cast<int>(occupied.size()), rig.trie, 1,
                                                  /*temperature=*/0.0, 6);
  CHECK(full.prefixes == occupied);

  // Saturation: widening the beam further cannot add prefixes.
  CandidatePrefixSet wider = precompute_candidates(rig.policy, ctx, "u", 1,
                                                   static_cast<int>(occupied.size()) + 10, rig.trie,
                                                   1, 0.0, 6);
  CHECK(wider.prefixes == full.prefixes);
}

TEST_CASE("serving returns cached-prefix items on a hit and falls back on a miss") {
  auto rig = testing::make_rig(123);
  std::string path = testing::tmp_path("cache_serve.kv");
  std::remove(path.c_str());
  CacheStore store(path);

  std::vector<int> think_ctx{rig.vocab.bos(), rig.vocab.think_begin()};
  CandidatePrefixSet set =
      precompute_candidates(rig.policy, think_ctx, "hit_user", 4, 4, rig.trie, 7, 1.0, 6);
  store.put(set);

  std::vector<int> serve_ctx{rig.vocab.bos(), rig.vocab.item_begin()};
  ServeResult hit = serve(rig.policy, serve_ctx, store, "hit_user", 5, rig.trie);
  CHECK(hit.cache_hit);
  REQUIRE(!hit.items.empty());
  for (const auto& item : hit.items) {
    CHECK(set.prefixes.count({item.tuple.tokens[0], item.tuple.tokens[1]}) == 1);
    CHECK(rig.trie.item_at(item.tuple) == item.item_id);
  }

  ServeResult miss = serve(rig.policy, serve_ctx, store, "cold_user", 5, rig.trie);
  CHECK(!miss.cache_hit);
  CHECK(!miss.items.empty());
  std::remove(path.c_str());
}

TEST_CASE("a saturated cache serves the same ranking as an unconstrained beam") {
  auto rig = testing::make_rig(124);
  std::string path = testing::tmp_path("cache_sat.kv");
  std::remove(path.c_str());
  CacheStore store(path);

  CandidatePrefixSet all;
  all.user_id = "sat_user";
  for (const auto& [id, tuple] : rig.codebook.assignment)
    all.prefixes.emplace(tuple.tokens[0], tuple.tokens[1]);
  all.paths = 1;
  all.beam_width = static_cast<int>(all.prefixes.size());
  store.put(all);

  std::vector<int> ctx{rig.vocab.bos(), rig.vocab.item_begin()};
  ServeResult cached = serve(rig.policy, ctx, store, "sat_user", 8, rig.trie);
  ServeResult plain = serve(rig.policy, ctx, store, "no_such_user", 8, rig.trie);
  CHECK(cached.cache_hit);
  CHECK(!plain.cache_hit);
  REQUIRE(cached.items.size() == plain.items.size());
  for (std::size_t i = 0; i < cached.items.size(); ++i) {
    CHECK(cached.items[i].item_id == plain.items[i].item_id);
    CHECK(cached.items[i].logprob == doctest::Approx(plain.items[i].logprob).epsilon(1e-12));
  }
  std::remove(path.c_str());
}

TEST_CASE("latency percentiles use the nearest-rank rule") {
  std::vector<ServeResult> runs(1);
  runs[0].stage2_latency_ms = 2.5;
  LatencyReport single = latency_report(runs, {7.0});
  CHECK(single.stage2_p50 == 2.5);
  CHECK(single.stage2_p95 == 2.5);
  CHECK(single.stage2_max == 2.5);
  CHECK(single.monolithic_p50 == 7.0);
  CHECK(single.runs == 1);

  std::vector<ServeResult> ten(10);
  std::vector<double> mono;
  for (int i = 0; i < 10; ++i) {
    ten[i].stage2_latency_ms = i + 1;  // 1..10
    mono.push_back(10.0 * (i + 1));
  }
  LatencyReport rep = latency_report(ten, mono);
  CHECK(rep.stage2_p50 == 5.0);   // ceil(0.5*10) = 5th smallest
  CHECK(rep.stage2_p95 == 10.0);  // ceil(0.95*10) = 10th
  CHECK(rep.stage2_max == 10.0);
  CHECK(rep.monolithic_p50 == 50.0);
}

TEST_CASE("latency report file carries the expected header and rows") {
  LatencyReport rep;
  rep.stage2_p50 = 1.0;
  rep.monolithic_p50 = 2.0;
  rep.runs = 3;
  std::string path = testing::tmp_path("latency.tsv");
  save_latency_report(rep, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "metric\tstage2_ms\tmonolithic_ms");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);  // p50, p95, max, runs
  std::remove(path.c_str());
}

}  // TEST_SUITE
