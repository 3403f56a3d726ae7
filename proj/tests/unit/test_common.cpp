#include <fstream>
#include <set>

#include "doctest.h"
#include "lankgc/common.hpp"
#include "support.hpp"

using namespace lankgc;

TEST_CASE("uniform_index stays in range and reaches every value") {
  Rng rng(3);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = uniform_index(rng, 7);
    REQUIRE(v < 7);
    ++seen[v];
  }
  for (int count : seen) CHECK(count > 800);
  CHECK_THROWS_AS(uniform_index(rng, 0), Error);
}

TEST_CASE("uniform_unit is in [0, 1)") {
  Rng rng(5);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform_unit(rng);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("shuffle permutes") {
  Rng rng(11);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto w = v;
  shuffle(std::span<int>(w), rng);
  CHECK(w != v);
  std::sort(w.begin(), w.end());
  CHECK(w == v);
}

TEST_CASE("mix_seed separates nearby inputs") {
  std::set<std::uint64_t> out;
  for (std::uint64_t a = 0; a < 10; ++a) {
    for (std::uint64_t b = 0; b < 10; ++b) out.insert(mix_seed(a, b));
  }
  CHECK(out.size() == 100);
}

TEST_CASE("fnv1a matches the published test vectors") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("key-value files") {
  const auto dir = testing::temp_dir("kv");
  {
    std::ofstream out(dir / "a.kv");
    out << "# comment\n\n  alpha = 1 \nbeta=two words\r\n";
  }
  const auto kv = read_key_values(dir / "a.kv");
  CHECK(kv.size() == 2);
  CHECK(kv.at("alpha") == "1");
  CHECK(kv.at("beta") == "two words");

  write_key_values(dir / "b.kv", kv);
  CHECK(read_key_values(dir / "b.kv") == kv);

  {
    std::ofstream out(dir / "bad.kv");
    out << "alpha = 1\nno equals sign\n";
  }
  try {
    read_key_values(dir / "bad.kv");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  CHECK_THROWS_AS(read_key_values(dir / "missing.kv"), Error);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}
