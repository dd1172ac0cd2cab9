#include <doctest.h>

#include <set>
#include <sstream>

#include "genrec/common.hpp"

using namespace genrec;

TEST_SUITE("common") {

TEST_CASE("rng is deterministic for a fixed seed") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform lies in [0,1) and uniform_int respects its bound") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.uniform_int(7) < 7);
  }
}

TEST_CASE("categorical follows its weights") {
  Rng rng(3);
  std::vector<double> w{1.0, 3.0};
  int ones = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i)
    if (rng.categorical(w) == 1) ++ones;
  CHECK(std::abs(ones / static_cast<double>(n) - 0.75) < 0.02);
}

TEST_CASE("gaussian has roughly standard moments") {
  Rng rng(5);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = rng.gaussian();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("derive_seed separates substreams") {
  std::set<std::uint64_t> seen;
  for (int a = 0; a < 20; ++a)
    for (int b = 0; b < 20; ++b) seen.insert(derive_seed(123, a, b));
  CHECK(seen.size() == 400);
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
}

TEST_CASE("little-endian io round-trips") {
  std::stringstream ss;
  write_u32(ss, 0xdeadbeefu);
  write_u64(ss, 0x0123456789abcdefULL);
  write_f64(ss, -3.14159265358979);
  write_string(ss, "hello\tworld");
  CHECK(read_u32(ss) == 0xdeadbeefu);
  CHECK(read_u64(ss) == 0x0123456789abcdefULL);
  CHECK(read_f64(ss) == -3.14159265358979);
  CHECK(read_string(ss) == "hello\tworld");
}

TEST_CASE("read past end throws") {
  std::stringstream ss;
  write_u32(ss, 1);
  read_u32(ss);
  CHECK_THROWS(read_u32(ss));
}

TEST_CASE("crc32 matches the standard check value") {
  const unsigned char data[] = "123456789";
  CHECK(crc32(data, 9) == 0xCBF43926u);
  CHECK(crc32(data, 9) != crc32(data, 8));
}

}  // TEST_SUITE
