#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "reasonloop/errors.hpp"
#include "reasonloop/scoring.hpp"

using namespace reasonloop;

TEST_CASE("vie_overall geometric mean") {
  CHECK(vie_overall(0, 10) == doctest::Approx(0.0));
  CHECK(vie_overall(10, 10) == doctest::Approx(10.0));
  CHECK(vie_overall(9, 4) == doctest::Approx(6.0));
  CHECK_THROWS_AS(vie_overall(-0.1, 5), ValidationError);
  CHECK_THROWS_AS(vie_overall(5, 10.1), ValidationError);
}

TEST_CASE("vie_overall strictly increasing in each argument") {
  for (double base = 0.5; base <= 9.5; base += 0.5) {
    CHECK(vie_overall(base + 0.5, 7.0) > vie_overall(base, 7.0));
    CHECK(vie_overall(7.0, base + 0.5) > vie_overall(7.0, base));
  }
}

TEST_CASE("imgedit cap rule") {
  CHECK(imgedit_sample_score(5, 5, 5) == doctest::Approx(5.0));
  CHECK(imgedit_sample_score(2, 5, 5) == doctest::Approx(2.0));
  CHECK(imgedit_sample_score(3, 4, 2) == doctest::Approx(8.0 / 3.0));
  CHECK_THROWS_AS(imgedit_sample_score(0.5, 3, 3), ValidationError);
}

TEST_CASE("imgedit score never exceeds adherence") {
  for (double a = 1; a <= 5; a += 0.5)
    for (double q = 1; q <= 5; q += 1)
      for (double p = 1; p <= 5; p += 1)
        CHECK(imgedit_sample_score(a, q, p) <= a + 1e-12);
}

TEST_CASE("kris rescale") {
  CHECK(kris_sample_score(5, 5, 5, 5) == doctest::Approx(100.0));
  CHECK(kris_sample_score(1, 1, 1, 1) == doctest::Approx(0.0));
  CHECK(kris_sample_score(5, 5, 1, 1) == doctest::Approx(50.0));
  CHECK_THROWS_AS(kris_sample_score(6, 5, 5, 5), ValidationError);
}

TEST_CASE("aggregate means and standard errors") {
  JudgeRecord a;
  a.benchmark = Benchmark::gedit;
  a.dims = {{"sq", 6.0}, {"pq", 8.0}};
  a.sample_score = 6.0;
  JudgeRecord b = a;
  b.dims = {{"sq", 8.0}, {"pq", 6.0}};
  b.sample_score = 8.0;

  AggregateReport r = aggregate({a, b});
  CHECK(r.n == 2);
  CHECK(r.overall.mean == doctest::Approx(7.0));
  // sample stddev of {6,8} is sqrt(2); stderr = sqrt(2)/sqrt(2) = 1
  CHECK(r.overall.stderr_ == doctest::Approx(1.0));
  CHECK(r.dims.at("sq").mean == doctest::Approx(7.0));

  AggregateReport single = aggregate({a});
  CHECK(single.overall.mean == doctest::Approx(6.0));
  CHECK(single.overall.stderr_ == doctest::Approx(0.0));
}

TEST_CASE("aggregate rejects empty and mixed input") {
  CHECK_THROWS_AS(aggregate({}), ValidationError);
  JudgeRecord g;
  g.benchmark = Benchmark::gedit;
  g.dims = {{"sq", 5.0}};
  JudgeRecord k = g;
  k.benchmark = Benchmark::kris;
  CHECK_THROWS_AS(aggregate({g, k}), ValidationError);
}

TEST_CASE("aggregate range-checks dims per scale") {
  JudgeRecord r;
  r.benchmark = Benchmark::imgedit;
  r.scale = JudgeScale::one_to_five;
  r.dims = {{"adherence", 7.0}};  // valid on 0-10, not on 1-5
  r.sample_score = 3.0;
  CHECK_THROWS_AS(aggregate({r}), ValidationError);
}

TEST_CASE("report json is deterministic and ordered") {
  JudgeRecord a;
  a.benchmark = Benchmark::kris;
  a.scale = JudgeScale::one_to_five;
  a.dims = {{"visual_quality", 4.0}, {"instruction_following", 3.0}};
  a.sample_score = 62.5;
  std::string j1 = aggregate({a}).to_json();
  std::string j2 = aggregate({a}).to_json();
  CHECK(j1 == j2);
  CHECK(j1.find("\"benchmark\": \"kris\"") != std::string::npos);
  CHECK(j1.find("instruction_following") < j1.find("visual_quality"));
}
