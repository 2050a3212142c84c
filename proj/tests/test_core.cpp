#include <algorithm>
#include <set>
#include <vector>

#include "doctest.h"
#include "odgr/core.hpp"
#include "odgr/util.hpp"

using namespace odgr;

static Goal g(double x, double y) { return Goal{{x, y}}; }

TEST_CASE("discrete space membership") {
  SpaceDesc s = DiscreteSpace{{4}};
  CHECK(contains(s, std::vector<double>{2.0}));
  CHECK(contains(s, std::vector<double>{0.0}));
  CHECK(contains(s, std::vector<double>{3.0}));
  CHECK_FALSE(contains(s, std::vector<double>{4.0}));
  CHECK_FALSE(contains(s, std::vector<double>{-1.0}));
  CHECK_FALSE(contains(s, std::vector<double>{1.5}));
  CHECK_THROWS_AS(contains(s, std::vector<double>{1.0, 2.0}), Error);
}

TEST_CASE("box membership uses closed bounds") {
  SpaceDesc s = BoxSpace{{0.0, 0.0}, {1.0, 1.0}};
  CHECK_FALSE(contains(s, std::vector<double>{0.5, 1.5}));
  CHECK(contains(s, std::vector<double>{0.0, 0.0}));
  CHECK(contains(s, std::vector<double>{1.0, 1.0}));
  CHECK(contains(s, std::vector<double>{0.25, 0.75}));
  CHECK_THROWS_AS(contains(s, std::vector<double>{0.5}), Error);
}

TEST_CASE("argmax picks the best score") {
  std::vector<ScoredGoal> scores{{g(1, 1), 0.2}, {g(2, 2), 0.9}};
  CHECK(argmax_with_tiebreak(scores) == g(2, 2));
}

TEST_CASE("argmax ties go to the earlier goal") {
  std::vector<ScoredGoal> scores{{g(1, 1), 0.5}, {g(2, 2), 0.5}};
  CHECK(argmax_with_tiebreak(scores) == g(1, 1));
}

TEST_CASE("argmax on a singleton") {
  std::vector<ScoredGoal> scores{{g(1, 1), -3.7}};
  CHECK(argmax_with_tiebreak(scores) == g(1, 1));
  CHECK_THROWS_AS(argmax_with_tiebreak({}), Error);
}

TEST_CASE("rank of the true goal") {
  std::vector<ScoredGoal> scores{{g(1, 1), 0.9}, {g(2, 2), 0.1}};
  CHECK(rank_of(scores, g(2, 2)) == 2);
  CHECK(rank_of(scores, g(1, 1)) == 1);
  CHECK_THROWS_AS(rank_of(scores, g(3, 3)), Error);
}

TEST_CASE("equal scores rank by goal-set order") {
  std::vector<ScoredGoal> scores{{g(1, 1), 0.5}, {g(2, 2), 0.5}, {g(3, 3), 0.5}};
  CHECK(rank_of(scores, g(2, 2)) == 2);
  CHECK(rank_of(scores, g(1, 1)) == 1);
  CHECK(rank_of(scores, g(3, 3)) == 3);
}

TEST_CASE("ranks are a bijection onto 1..n") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + rng.uniform_int(8);
    std::vector<ScoredGoal> scores;
    for (int i = 0; i < n; ++i) {
      // coarse scores force frequent ties
      scores.push_back({g(i, i), double(rng.uniform_int(4)) / 4.0});
    }
    std::set<int> ranks;
    for (int i = 0; i < n; ++i) ranks.insert(rank_of(scores, scores[i].goal));
    CHECK(int(ranks.size()) == n);
    CHECK(*ranks.begin() == 1);
    CHECK(*ranks.rbegin() == n);
    CHECK(rank_of(scores, scores[argmax_index(scores)].goal) == 1);
  }
}

TEST_CASE("observation sequence invariants") {
  ObservationStep step{{1.0, 1.0, 0.0}, {2.0}};
  ObservationSequence ok{{step, step}, {0, 1}, true, 1.0};
  CHECK_NOTHROW(ok.validate());

  ObservationSequence empty{{}, {}, true, 1.0};
  CHECK_THROWS_AS(empty.validate(), Error);

  ObservationSequence bad_order{{step, step}, {3, 1}, false, 0.5};
  CHECK_THROWS_AS(bad_order.validate(), Error);

  ObservationSequence gap{{step, step}, {0, 2}, true, 1.0};
  CHECK_THROWS_AS(gap.validate(), Error);
  gap.is_consecutive = false;
  CHECK_NOTHROW(gap.validate());

  ObservationSequence bad_obs{{step}, {0}, true, 0.0};
  CHECK_THROWS_AS(bad_obs.validate(), Error);
}

TEST_CASE("GR instance requires the truth in its goal set") {
  ObservationStep step{{1.0, 1.0, 0.0}, {2.0}};
  ObservationSequence obs{{step}, {0}, true, 1.0};
  GRInstance inst{{g(1, 1), g(2, 2)}, obs, g(2, 2)};
  CHECK_NOTHROW(inst.validate());
  CHECK_NOTHROW(inst.validate(true));

  inst.true_goal = g(9, 9);
  CHECK_THROWS_AS(inst.validate(), Error);

  GRInstance single{{g(1, 1)}, obs, g(1, 1)};
  CHECK_NOTHROW(single.validate());
  CHECK_THROWS_AS(single.validate(true), Error);

  GRInstance dup{{g(1, 1), g(1, 1)}, obs, g(1, 1)};
  CHECK_THROWS_AS(dup.validate(true), Error);
}

TEST_CASE("problem spec validation") {
  ODGRProblemSpec spec;
  spec.domain_name = "minigrid";
  spec.env_name = "MiniGrid-SimpleCrossingS13N4";
  spec.task_id = "L1";
  spec.dynamic_goals = {g(11, 1), g(11, 11), g(1, 11)};
  spec.train_configs = {{"QLEARNING", 100000}};
  CHECK_NOTHROW(spec.validate());
  CHECK(spec.observability_levels == std::vector<double>{0.3, 0.5, 0.7, 1.0});
  CHECK(spec.trace_types.size() == 2);
  CHECK(spec.config_for(0).timesteps == 100000);
  CHECK(spec.config_for(2).algorithm == "QLEARNING");

  spec.dynamic_goals = {g(1, 1), g(2, 2)};
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.dynamic_goals.resize(10, g(5, 5));
  CHECK_THROWS_AS(spec.validate(), Error);

  spec.dynamic_goals = {g(11, 1), g(11, 11), g(1, 11)};
  spec.observability_levels = {0.5, 1.2};
  CHECK_THROWS_AS(spec.validate(), Error);

  spec.observability_levels = {0.5};
  spec.train_configs = {{"QLEARNING", 1}, {"QLEARNING", 2}};
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("trace type names round-trip") {
  CHECK(std::string(to_string(TraceType::Consecutive)) == "consecutive");
  CHECK(std::string(to_string(TraceType::NonConsecutive)) == "non_consecutive");
  CHECK(trace_type_from_string("consecutive") == TraceType::Consecutive);
  CHECK(trace_type_from_string("non_consecutive") == TraceType::NonConsecutive);
  CHECK_THROWS_AS(trace_type_from_string("sometimes"), Error);
}

TEST_CASE("goal formatting") {
  CHECK(g(11, 1).str() == "(11, 1)");
  CHECK(g(11, 1).path_str() == "11x1");
  CHECK(Goal{{4.5, 3.5}}.str() == "(4.5, 3.5)");
  CHECK(Goal{{4.5, 3.5}}.path_str() == "4.5x3.5");
  CHECK(g(11, 1).is_cell());
  CHECK_FALSE(Goal{{4.5, 3.5}}.is_cell());
}

TEST_CASE("number formatting") {
  CHECK(fmt_g(0.3) == "0.3");
  CHECK(fmt_g(1.0) == "1");
  CHECK(fmt_g(0.7) == "0.7");
  CHECK(fmt_fixed(12.171, 2) == "12.17");
  CHECK(fmt_fixed(0.0221, 3) == "0.022");
  CHECK(fmt_accuracy(1.0) == "1.0");
  CHECK(fmt_accuracy(0.9) == "0.9");
  CHECK(fmt_accuracy(1.0 / 3.0) == "0.33");
  CHECK(fmt_accuracy(0.0) == "0.0");
  CHECK(fmt_tuple({11, 1}) == "(11, 1)");
}

TEST_CASE("seed derivation is deterministic and path-sensitive") {
  CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
  CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
  CHECK(derive_seed(1, {2, 3}) != derive_seed(2, {2, 3}));
  CHECK(derive_seed(1, {"actor"}) == derive_seed(1, {"actor"}));
  CHECK(derive_seed(1, {"actor"}) != derive_seed(1, {"recognizer"}));
}

TEST_CASE("rng streams are reproducible") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    uint64_t x = a.next();
    all_equal = all_equal && (x == b.next());
    any_diff = any_diff || (x != c.next());
  }
  CHECK(all_equal);
  CHECK(any_diff);

  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    int v = r.uniform_int(7);
    CHECK(v >= 0);
    CHECK(v < 7);
    double u = r.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }

  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = r.normal(0.0, 1.0);
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("crc32 matches the reference value") {
  const char* s = "123456789";
  CHECK(crc32(s, 9) == 0xCBF43926u);
  CHECK(crc32(s, 9) == crc32(s, 9));
  CHECK(crc32(s, 8) != crc32(s, 9));
}
