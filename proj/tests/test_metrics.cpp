#include <doctest.h>

#include "mmbeam/metrics.hpp"
#include "oracles.hpp"

using namespace mmbeam;

namespace {

BeamPrediction pred(int a, int b, int c) {
  BeamPrediction p;
  p.topk = {a, b, c};
  return p;
}

double score_one(int truth, int a, int b, int c) {
  const std::vector<BeamLabel> t{BeamLabel(truth)};
  const std::vector<BeamPrediction> p{pred(a, b, c)};
  const std::vector<int> s{32};
  return metrics::dba_score(t, p, s).overall;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("hand cases") {
    CHECK(score_one(10, 10, 20, 30) == 1.0);
    CHECK(score_one(10, 40, 50, 60) == 0.0);
    CHECK(score_one(10, 12, 10, 40) == doctest::Approx(2.6 / 3.0).epsilon(1e-15));
    // Distance exactly 5 saturates at zero credit.
    CHECK(score_one(10, 15, 5, 60) == 0.0);
  }

  TEST_CASE("matches the naive oracle on random data") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> beam(1, kNumBeams), scen(31, 34);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 1 + trial * 7;
      std::vector<int> truth;
      std::vector<std::array<int, 3>> top;
      std::vector<BeamLabel> t;
      std::vector<BeamPrediction> p;
      std::vector<int> s;
      for (int i = 0; i < n; ++i) {
        truth.push_back(beam(rng));
        top.push_back(test::random_top3(rng));
        t.emplace_back(truth.back());
        p.push_back(pred(top.back()[0], top.back()[1], top.back()[2]));
        s.push_back(scen(rng));
      }
      const auto rep = metrics::dba_score(t, p, s);
      CHECK(std::abs(rep.overall - test::naive_dba(truth, top)) < 1e-12);
      CHECK(rep.n_samples == n);
      // Per-scenario scores equal the oracle on each subset.
      for (const auto& [id, v] : rep.per_scenario) {
        std::vector<int> tt;
        std::vector<std::array<int, 3>> pp;
        for (int i = 0; i < n; ++i)
          if (s[i] == id) {
            tt.push_back(truth[i]);
            pp.push_back(top[i]);
          }
        CHECK(std::abs(v - test::naive_dba(tt, pp)) < 1e-12);
        CHECK(rep.per_scenario_count.at(id) == static_cast<int>(tt.size()));
      }
    }
  }

  TEST_CASE("score components are monotone in K") {
    std::mt19937_64 rng(5);
    std::vector<BeamLabel> t;
    std::vector<BeamPrediction> p;
    std::vector<int> s;
    for (int i = 0; i < 200; ++i) {
      t.emplace_back(std::uniform_int_distribution<int>(1, 64)(rng));
      const auto top = test::random_top3(rng);
      p.push_back(pred(top[0], top[1], top[2]));
      s.push_back(32);
    }
    const auto rep = metrics::dba_score(t, p, s);
    CHECK(rep.y1 <= rep.y2);
    CHECK(rep.y2 <= rep.y3);
    CHECK(rep.overall == doctest::Approx((rep.y1 + rep.y2 + rep.y3) / 3.0).epsilon(1e-15));
  }

  TEST_CASE("top-k accuracy") {
    const std::vector<BeamLabel> t{BeamLabel(1), BeamLabel(2), BeamLabel(3)};
    const std::vector<BeamPrediction> p{pred(1, 5, 6), pred(5, 2, 6), pred(5, 6, 7)};
    CHECK(metrics::topk_accuracy(t, p, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(metrics::topk_accuracy(t, p, 2) == doctest::Approx(2.0 / 3.0));
    CHECK(metrics::topk_accuracy(t, p, 3) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(metrics::topk_accuracy(t, p, 4), ArgumentError);
  }

  TEST_CASE("input validation") {
    CHECK_THROWS_AS(BeamLabel(0), ArgumentError);
    CHECK_THROWS_AS(BeamLabel(65), ArgumentError);
    CHECK_THROWS_AS(pred(1, 1, 2).validate(), ArgumentError);
    CHECK_THROWS_AS(pred(0, 1, 2).validate(), ArgumentError);
    BeamPrediction up = pred(1, 2, 3);
    up.scores = {0.1, 0.5, 0.0};
    CHECK_THROWS_AS(up.validate(), ArgumentError);
    const std::vector<BeamLabel> t{BeamLabel(3)};
    const std::vector<BeamPrediction> p{};
    const std::vector<int> s{1};
    CHECK_THROWS_AS(metrics::dba_score(t, p, s), ArgumentError);
    CHECK_THROWS_AS(metrics::dba_score({}, {}, {}), ArgumentError);
  }

  TEST_CASE("report serialisation") {
    const std::vector<BeamLabel> t{BeamLabel(10), BeamLabel(20)};
    const std::vector<BeamPrediction> p{pred(10, 11, 12), pred(40, 41, 42)};
    const std::vector<int> s{31, 32};
    const auto rep = metrics::dba_score(t, p, s);
    const auto kv = metrics::to_key_value(rep);
    CHECK(kv.find("overall=0.5") != std::string::npos);
    CHECK(kv.find("scenario_31=1") != std::string::npos);
    CHECK(kv.find("scenario_32=0") != std::string::npos);
    const auto csv = metrics::to_csv(rep);
    CHECK(csv.rfind("scope,dba,y1,y2,y3,n_samples\n", 0) == 0);
  }
}
