#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "odgr/envs.hpp"
#include "oracles.hpp"

using namespace odgr;
using namespace odgr::envs;

namespace {

std::vector<double> act(double a) { return {a}; }

StepResult drive(Env& env, const std::vector<std::vector<double>>& actions) {
  StepResult last;
  for (const auto& a : actions) last = env.step(a);
  return last;
}

size_t free_cell_count(const Layout& l) {
  size_t n = 0;
  for (int y = 0; y < l.height; ++y)
    for (int x = 0; x < l.width; ++x)
      if (!l.blocked(x, y) && !l.deadly(x, y)) ++n;
  return n;
}

}  // namespace

TEST_CASE("environment registry answers capability queries") {
  for (const char* name :
       {"MiniGrid-SimpleCrossingS13N4", "MiniGrid-LavaCrossingS9N2", "PointMaze-FourRooms",
        "PointMaze-Obstacle", "MiniGrid-Empty3x3", "MiniGrid-Empty4x4", "MiniGrid-Empty5x5"}) {
    CHECK(env_registered(name));
  }
  CHECK_FALSE(env_registered("MiniGrid-Nowhere"));
  CHECK(env_registered("MiniGrid-SimpleCrossingS13N4-DynamicGoal-11x1-v0"));

  CHECK(env_discrete("MiniGrid-SimpleCrossingS13N4"));
  CHECK(env_discrete("MiniGrid-LavaCrossingS9N2"));
  CHECK_FALSE(env_discrete("PointMaze-FourRooms"));
  CHECK_FALSE(env_discrete("PointMaze-Obstacle"));

  CHECK_FALSE(env_gc_adaptable("MiniGrid-SimpleCrossingS13N4"));
  CHECK_FALSE(env_gc_adaptable("MiniGrid-LavaCrossingS9N2"));
  CHECK(env_gc_adaptable("PointMaze-FourRooms"));
  CHECK(env_gc_adaptable("PointMaze-Obstacle"));

  CHECK_THROWS_AS(make_env("MiniGrid-Nowhere"), Error);
  CHECK_THROWS_AS(env_discrete("MiniGrid-Nowhere"), Error);
}

TEST_CASE("goal-pinned environment names") {
  auto env = make_env("MiniGrid-SimpleCrossingS13N4-DynamicGoal-11x1-v0");
  auto obs = env->reset(1);
  CHECK(obs.desired_goal == std::vector<double>{11.0, 1.0});
  obs = env->reset(2);
  CHECK(obs.desired_goal == std::vector<double>{11.0, 1.0});
  CHECK(env->goal_mode() == GoalMode::Fixed);

  auto maze = make_env("PointMaze-FourRooms-DynamicGoal-8.5x2.5-v0");
  CHECK(maze->reset(1).desired_goal == std::vector<double>{8.5, 2.5});

  CHECK_THROWS_AS(make_env("MiniGrid-SimpleCrossingS13N4-DynamicGoal-11x1"), Error);
  CHECK_THROWS_AS(make_env("MiniGrid-SimpleCrossingS13N4-DynamicGoal-axb-v0"), Error);
  CHECK_THROWS_AS(
      make_env("MiniGrid-SimpleCrossingS13N4-DynamicGoal-11x1-v0", Goal{{11, 11}}), Error);
}

TEST_CASE("crossing layouts are bordered, pinned, and fully connected") {
  for (const char* name : {"MiniGrid-SimpleCrossingS13N4", "MiniGrid-LavaCrossingS9N2"}) {
    Layout l = layout(name);
    for (int x = 0; x < l.width; ++x) {
      CHECK(l.blocked(x, 0));
      CHECK(l.blocked(x, l.height - 1));
    }
    for (int y = 0; y < l.height; ++y) {
      CHECK(l.blocked(0, y));
      CHECK(l.blocked(l.width - 1, y));
    }
    auto reach = oracle::flood_fill(l, {1, 1});
    CHECK(reach.size() == free_cell_count(l));
  }

  Layout sc = layout("MiniGrid-SimpleCrossingS13N4");
  CHECK(sc.width == 13);
  CHECK(sc.lava.empty());
  Layout lc = layout("MiniGrid-LavaCrossingS9N2");
  CHECK(lc.width == 9);
  CHECK_FALSE(lc.lava.empty());

  CHECK(layout_seed("MiniGrid-SimpleCrossingS13N4") == 8182);
  CHECK(layout_seed("MiniGrid-LavaCrossingS9N2") == 71);
  CHECK(layout_seed("PointMaze-FourRooms") == 0);
  CHECK_THROWS_AS(layout_seed("MiniGrid-Nowhere"), Error);

  // regenerating from the pinned seed reproduces the exact layout
  Layout again = make_crossing_layout(13, 4, false, 8182);
  CHECK(again.walls == sc.walls);
}

TEST_CASE("benchmark goals sit at their measured distances") {
  Layout sc = layout("MiniGrid-SimpleCrossingS13N4");
  CHECK(oracle::bfs_action_distance(sc, {1, 1, 0}, {11, 1}) == 10);
  CHECK(oracle::bfs_action_distance(sc, {1, 1, 0}, {11, 11}) == 21);
  CHECK(oracle::bfs_action_distance(sc, {1, 1, 0}, {1, 11}) == 11);

  Layout lc = layout("MiniGrid-LavaCrossingS9N2");
  CHECK(oracle::bfs_action_distance(lc, {1, 1, 0}, {7, 1}) == 6);
  CHECK(oracle::bfs_action_distance(lc, {1, 1, 0}, {7, 7}) == 13);
  CHECK(oracle::bfs_action_distance(lc, {1, 1, 0}, {1, 7}) == 7);
}

TEST_CASE("grid stepping follows turn and move semantics") {
  auto env = make_env("MiniGrid-Empty3x3", Goal{{3, 3}});
  env->reset(0);
  CHECK(env->state() == std::vector<double>{1, 1, 0});

  auto r = env->step(act(1));  // face S
  CHECK(r.obs.observation == std::vector<double>{1, 1, 1});
  r = env->step(act(2));
  CHECK(r.obs.observation == std::vector<double>{1, 2, 1});
  r = env->step(act(0));  // back to E
  CHECK(r.obs.observation == std::vector<double>{1, 2, 0});
  r = env->step(act(3));  // stay
  CHECK(r.obs.observation == std::vector<double>{1, 2, 0});
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.terminated);

  // forward into the west border is a no-op
  env->reset(0);
  env->step(act(0));
  env->step(act(0));  // face W
  r = env->step(act(2));
  CHECK(r.obs.observation == std::vector<double>{1, 1, 2});

  CHECK_THROWS_AS(env->step(act(4)), Error);
  CHECK_THROWS_AS(env->step(act(0.5)), Error);
  CHECK_THROWS_AS(env->step(std::vector<double>{0, 0}), Error);
}

TEST_CASE("crossing success reward scales with episode length") {
  auto env = make_env("MiniGrid-SimpleCrossingS13N4", Goal{{11, 1}});
  CHECK(env->max_steps() == 4 * 13 * 13);
  env->reset(0);
  StepResult r;
  for (int i = 0; i < 10; ++i) r = env->step(act(2));
  CHECK(r.terminated);
  CHECK(r.obs.achieved_goal == std::vector<double>{11, 1});
  CHECK(r.reward == doctest::Approx(1.0 - 0.9 * (10.0 / 676.0)).epsilon(1e-12));
  CHECK_THROWS_AS(env->step(act(3)), Error);
}

TEST_CASE("empty grids pay a flat success reward") {
  auto env = make_env("MiniGrid-Empty3x3", Goal{{3, 3}});
  CHECK(env->max_steps() == 100);
  env->reset(0);
  auto r = drive(*env, {act(2), act(2), act(1), act(2), act(2)});
  CHECK(r.terminated);
  CHECK(r.reward == 1.0);
}

TEST_CASE("lava terminates the episode at a penalty") {
  auto env = make_env("MiniGrid-LavaCrossingS9N2", Goal{{7, 7}});
  env->reset(0);
  auto r = drive(*env, {act(2), act(1), act(2)});  // (2,1) then south into (2,2)
  CHECK(r.terminated);
  CHECK(r.reward == -1.0);
  CHECK(r.obs.observation[0] == 2);
  CHECK(r.obs.observation[1] == 2);
}

TEST_CASE("episodes truncate at the step limit") {
  auto env = make_env("MiniGrid-Empty3x3", Goal{{3, 3}});
  env->reset(0);
  StepResult r;
  for (int i = 0; i < 100; ++i) {
    r = env->step(act(3));
    CHECK(r.reward == 0.0);
  }
  CHECK(r.truncated);
  CHECK_FALSE(r.terminated);
  CHECK_THROWS_AS(env->step(act(3)), Error);
}

TEST_CASE("maze integration matches the double integrator") {
  auto env = make_env("PointMaze-FourRooms", Goal{{8.5, 2.5}});
  CHECK(env->max_steps() == 300);
  auto obs = env->reset(0);
  CHECK(obs.observation == std::vector<double>{1.5, 1.5, 0.0, 0.0});
  CHECK(obs.achieved_goal == std::vector<double>{1.5, 1.5});

  auto r = env->step(std::vector<double>{1.0, 0.0});
  CHECK(r.obs.observation[2] == doctest::Approx(0.1));
  CHECK(r.obs.observation[0] == doctest::Approx(1.5 + 0.1 * 0.1));
  CHECK(r.reward == -1.0);

  // force is clipped per dimension
  env->reset(0);
  r = env->step(std::vector<double>{100.0, 0.0});
  CHECK(r.obs.observation[2] == doctest::Approx(0.1));

  // velocity saturates below 1 maze unit per tick (long straight run)
  auto open = make_env("PointMaze-Obstacle", Goal{{6.5, 6.5}});
  open->reset(0);
  for (int i = 0; i < 50; ++i) r = open->step(std::vector<double>{1.0, 0.0});
  CHECK(r.obs.observation[2] < 1.0);
  CHECK(r.obs.observation[2] > 0.99);
  CHECK_FALSE(r.terminated);

  CHECK_THROWS_AS(env->step(std::vector<double>{1.0}), Error);
}

TEST_CASE("maze walls stop motion along the blocked axis") {
  auto env = make_env("PointMaze-FourRooms", Goal{{8.5, 2.5}});
  env->reset(0);
  StepResult r;
  for (int i = 0; i < 100; ++i) {
    r = env->step(std::vector<double>{-1.0, 0.0});
    CHECK(r.obs.observation[0] >= 1.0);
  }
  CHECK(r.obs.observation[2] == 0.0);  // pressed against the wall
  CHECK(r.obs.observation[1] == 1.5);  // free axis untouched
}

TEST_CASE("maze episodes succeed inside the goal radius") {
  auto env = make_env("PointMaze-FourRooms", Goal{{2.5, 1.5}});
  env->reset(0);
  StepResult r;
  int steps = 0;
  while (true) {
    r = env->step(std::vector<double>{1.0, 0.0});
    ++steps;
    if (r.terminated || r.truncated) break;
  }
  CHECK(r.terminated);
  CHECK(r.reward == 0.0);
  double dx = r.obs.achieved_goal[0] - 2.5, dy = r.obs.achieved_goal[1] - 1.5;
  CHECK(std::sqrt(dx * dx + dy * dy) < 0.5);
  CHECK(steps < 300);
}

TEST_CASE("maze layouts keep all rooms reachable") {
  for (const char* name : {"PointMaze-FourRooms", "PointMaze-Obstacle"}) {
    Layout l = layout(name);
    auto reach = oracle::flood_fill(l, {1, 1});
    CHECK(reach.size() == free_cell_count(l));
  }
  CHECK(layout("PointMaze-FourRooms").width == 11);
  CHECK(layout("PointMaze-Obstacle").width == 8);
  // central block
  CHECK(layout("PointMaze-Obstacle").blocked(3, 3));
  CHECK(layout("PointMaze-Obstacle").blocked(4, 4));
}

TEST_CASE("goal setters validate against the layout") {
  auto env = make_env("MiniGrid-SimpleCrossingS13N4");
  CHECK_THROWS_AS(env->set_goal(Goal{{0, 0}}), Error);       // border wall
  CHECK_THROWS_AS(env->set_goal(Goal{{4, 2}}), Error);       // river wall
  CHECK_THROWS_AS(env->set_goal(Goal{{5.5, 5.5}}), Error);   // not a cell
  CHECK_NOTHROW(env->set_goal(Goal{{11, 11}}));

  auto lava = make_env("MiniGrid-LavaCrossingS9N2");
  CHECK_THROWS_AS(lava->set_goal(Goal{{2, 2}}), Error);  // lava cell

  auto maze = make_env("PointMaze-FourRooms");
  CHECK_THROWS_AS(maze->set_goal(Goal{{5.5, 5.5}}), Error);  // inside a wall
  CHECK_NOTHROW(maze->set_goal(Goal{{5.5, 2.5}}));           // in a door

  CHECK_THROWS_AS(env->set_goal_set({}), Error);
  CHECK_THROWS_AS(env->set_goal_set({Goal{{11, 1}}, Goal{{4, 2}}}), Error);
}

TEST_CASE("goal sampling covers the provided set deterministically") {
  auto env = make_env("MiniGrid-SimpleCrossingS13N4", std::nullopt,
                      std::vector<Goal>{Goal{{11, 1}}, Goal{{11, 11}}, Goal{{1, 11}}});
  CHECK(env->goal_mode() == GoalMode::SampleSet);
  std::set<std::string> seen;
  for (int i = 0; i < 60; ++i) {
    env->reset();
    seen.insert(env->goal().str());
    bool in_set = false;
    for (const auto& g : env->goal_set()) in_set = in_set || (g == env->goal());
    CHECK(in_set);
  }
  CHECK(seen.size() == 3);

  // same reset seed, same sampled goal
  auto a = make_env("PointMaze-FourRooms");
  auto b = make_env("PointMaze-FourRooms");
  CHECK(a->goal_mode() == GoalMode::SampleSpace);
  a->reset(9);
  b->reset(9);
  CHECK(a->goal() == b->goal());
  CHECK(a->valid_goal(a->goal()));
  a->reset(10);
  CHECK_FALSE(a->goal() == b->goal());
}

TEST_CASE("ascii rendering shows walls, goal, trace and agent") {
  auto env = make_env("MiniGrid-Empty3x3", Goal{{3, 3}});
  env->reset(0);
  CHECK(render_ascii(*env) ==
        "#####\n"
        "#>..#\n"
        "#...#\n"
        "#..G#\n"
        "#####\n");

  // visited cells show their time decile; goal and agent draw on top
  ObservationSequence trace;
  trace.steps = {{{1, 1, 0}, {2}}, {{2, 1, 0}, {2}}};
  trace.source_indices = {0, 1};
  CHECK(render_ascii(*env, &trace) ==
        "#####\n"
        "#>5.#\n"
        "#...#\n"
        "#..G#\n"
        "#####\n");
  CHECK(render_ascii(*env) == render_ascii(*env));

  auto maze = make_env("PointMaze-FourRooms", Goal{{8.5, 2.5}});
  maze->reset(0);
  std::string m = render_ascii(*maze);
  CHECK(m.find('A') != std::string::npos);
  CHECK(m.find('G') != std::string::npos);

  auto lava = make_env("MiniGrid-LavaCrossingS9N2", Goal{{7, 7}});
  lava->reset(0);
  CHECK(render_ascii(*lava).find('~') != std::string::npos);
}

TEST_CASE("ppm rendering is a well-formed image") {
  auto env = make_env("MiniGrid-Empty3x3", Goal{{3, 3}});
  env->reset(0);
  auto img = render_ppm(*env);
  std::string head(img.begin(), img.begin() + 13);
  CHECK(head == "P6\n80 80\n255\n");  // 5 cells * 16 px
  CHECK(img.size() == 13 + 80 * 80 * 3);
  CHECK(img[13] == 40);  // corner wall pixel
  CHECK(img[14] == 40);
  CHECK(img[15] == 40);
  CHECK(render_ppm(*env) == render_ppm(*env));
}
