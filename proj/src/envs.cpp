#include "odgr/envs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <sstream>

namespace odgr::envs {

namespace {

// Interior wall/gap placement is procedural; these constants pin the layout
// of each named environment. Changing one changes the benchmark.
constexpr uint64_t kSimpleCrossingLayoutSeed = 8182;
constexpr uint64_t kLavaCrossingLayoutSeed = 71;

constexpr int kDx[4] = {1, 0, -1, 0};  // E, S, W, N
constexpr int kDy[4] = {0, 1, 0, -1};

Layout bordered(int width, int height) {
  Layout l;
  l.width = width;
  l.height = height;
  for (int x = 0; x < width; ++x) {
    l.walls.insert({x, 0});
    l.walls.insert({x, height - 1});
  }
  for (int y = 0; y < height; ++y) {
    l.walls.insert({0, y});
    l.walls.insert({width - 1, y});
  }
  return l;
}

// All passable (non-wall, non-lava) cells reachable from start.
bool fully_connected(const Layout& l, Cell start) {
  std::set<Cell> free;
  for (int y = 0; y < l.height; ++y)
    for (int x = 0; x < l.width; ++x)
      if (!l.blocked(x, y) && !l.deadly(x, y)) free.insert({x, y});
  if (!free.count(start)) return false;
  std::set<Cell> seen{start};
  std::deque<Cell> frontier{start};
  while (!frontier.empty()) {
    Cell c = frontier.front();
    frontier.pop_front();
    for (int d = 0; d < 4; ++d) {
      Cell n{c.x + kDx[d], c.y + kDy[d]};
      if (free.count(n) && !seen.count(n)) {
        seen.insert(n);
        frontier.push_back(n);
      }
    }
  }
  return seen.size() == free.size();
}

}  // namespace

// Gaps avoid cells shared with a perpendicular river, and the whole
// placement retries until every passable cell stays reachable from (1,1).
Layout make_crossing_layout(int size, int rivers, bool deadly, uint64_t seed) {
  Rng rng(derive_seed(seed, {"crossing-layout"}));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<std::pair<bool, int>> candidates;  // {vertical, coordinate}
    for (int c = 2; c <= size - 3; c += 2) candidates.push_back({true, c});
    for (int c = 2; c <= size - 3; c += 2) candidates.push_back({false, c});
    for (size_t i = candidates.size() - 1; i > 0; --i)
      std::swap(candidates[i], candidates[rng.uniform_int(i + 1)]);
    candidates.resize(rivers);

    std::vector<int> vert, horz;
    for (auto [v, c] : candidates) (v ? vert : horz).push_back(c);

    Layout l = bordered(size, size);
    auto& river_cells = deadly ? l.lava : l.walls;
    for (auto [vertical, c] : candidates) {
      const auto& crossing = vertical ? horz : vert;
      std::vector<int> open;
      for (int i = 1; i <= size - 2; ++i)
        if (std::find(crossing.begin(), crossing.end(), i) == crossing.end()) open.push_back(i);
      int gap = open[rng.uniform_int(open.size())];
      for (int i = 1; i <= size - 2; ++i) {
        if (i == gap) continue;
        river_cells.insert(vertical ? Cell{c, i} : Cell{i, c});
      }
    }
    if (fully_connected(l, {1, 1})) return l;
  }
  throw Error("crossing layout: no connected placement for seed " + std::to_string(seed));
}

namespace {

Layout maze_from_rows(const std::vector<std::string>& rows) {
  Layout l;
  l.height = static_cast<int>(rows.size());
  l.width = static_cast<int>(rows[0].size());
  for (int y = 0; y < l.height; ++y)
    for (int x = 0; x < l.width; ++x)
      if (rows[y][x] == '#') l.walls.insert({x, y});
  return l;
}

// Classic four-rooms arrangement with one door per shared wall.
std::vector<std::string> four_rooms_rows() {
  return {
      "###########",
      "#....#....#",
      "#.........#",
      "#....#....#",
      "#....#....#",
      "##.#####.##",
      "#....#....#",
      "#....#....#",
      "#.........#",
      "#....#....#",
      "###########",
  };
}

// Open arena with a square block in the center; goals on the diagonal are
// reachable around either side.
std::vector<std::string> obstacle_rows() {
  return {
      "########",
      "#......#",
      "#......#",
      "#..##..#",
      "#..##..#",
      "#......#",
      "#......#",
      "########",
  };
}

struct ParsedName {
  std::string base;
  std::optional<Goal> goal;
};

// "<base>-DynamicGoal-<x>x<y>-v0" pins the episode goal; anything else is
// passed through as a base name.
ParsedName parse_env_name(const std::string& name) {
  const std::string marker = "-DynamicGoal-";
  auto pos = name.find(marker);
  if (pos == std::string::npos) return {name, std::nullopt};
  std::string rest = name.substr(pos + marker.size());
  const std::string suffix = "-v0";
  if (rest.size() < suffix.size() || rest.substr(rest.size() - suffix.size()) != suffix)
    throw Error("bad environment name: " + name);
  rest = rest.substr(0, rest.size() - suffix.size());
  auto sep = rest.find('x');
  if (sep == std::string::npos) throw Error("bad environment name: " + name);
  Goal g;
  try {
    g.v = {std::stod(rest.substr(0, sep)), std::stod(rest.substr(sep + 1))};
  } catch (const std::exception&) {
    throw Error("bad environment name: " + name);
  }
  return {name.substr(0, pos), g};
}

struct EnvEntry {
  bool discrete = true;
  bool gc_adaptable = false;
  std::function<std::unique_ptr<Env>(uint64_t)> make;
};

const std::map<std::string, EnvEntry>& env_table() {
  static const std::map<std::string, EnvEntry> table = [] {
    std::map<std::string, EnvEntry> t;
    t["MiniGrid-SimpleCrossingS13N4"] = {true, false, [](uint64_t seed) {
      return std::make_unique<GridCrossingEnv>(
          "MiniGrid-SimpleCrossingS13N4",
          make_crossing_layout(13, 4, false, kSimpleCrossingLayoutSeed), Cell{1, 1}, true, seed);
    }};
    t["MiniGrid-LavaCrossingS9N2"] = {true, false, [](uint64_t seed) {
      return std::make_unique<GridCrossingEnv>(
          "MiniGrid-LavaCrossingS9N2", make_crossing_layout(9, 2, true, kLavaCrossingLayoutSeed),
          Cell{1, 1}, true, seed);
    }};
    for (int n : {3, 4, 5}) {
      std::string name = "MiniGrid-Empty" + std::to_string(n) + "x" + std::to_string(n);
      t[name] = {true, false, [name, n](uint64_t seed) {
        return std::make_unique<GridCrossingEnv>(name, bordered(n + 2, n + 2), Cell{1, 1}, false,
                                                 seed);
      }};
    }
    t["PointMaze-FourRooms"] = {false, true, [](uint64_t seed) {
      return std::make_unique<PointMazeEnv>("PointMaze-FourRooms", maze_from_rows(four_rooms_rows()),
                                            std::vector<double>{1.5, 1.5}, seed);
    }};
    t["PointMaze-Obstacle"] = {false, true, [](uint64_t seed) {
      return std::make_unique<PointMazeEnv>("PointMaze-Obstacle", maze_from_rows(obstacle_rows()),
                                            std::vector<double>{1.5, 1.5}, seed);
    }};
    return t;
  }();
  return table;
}

const EnvEntry& entry_for(const std::string& env_name) {
  auto parsed = parse_env_name(env_name);
  auto it = env_table().find(parsed.base);
  if (it == env_table().end()) throw Error("unknown environment: " + env_name);
  return it->second;
}

}  // namespace

// ---------------------------------------------------------------------------
// Env base
// ---------------------------------------------------------------------------

void Env::set_goal(const Goal& g) {
  if (!valid_goal(g)) throw Error("invalid goal " + g.str() + " for " + name_);
  goal_ = g;
  mode_ = GoalMode::Fixed;
}

void Env::set_goal_set(std::vector<Goal> goals) {
  if (goals.empty()) throw Error("empty goal set for " + name_);
  for (const auto& g : goals)
    if (!valid_goal(g)) throw Error("invalid goal " + g.str() + " for " + name_);
  goal_set_ = std::move(goals);
  mode_ = GoalMode::SampleSet;
}

void Env::pick_episode_goal() {
  switch (mode_) {
    case GoalMode::Fixed:
      break;
    case GoalMode::SampleSet:
      goal_ = goal_set_[rng_.uniform_int(goal_set_.size())];
      break;
    case GoalMode::SampleSpace:
      goal_ = sample_goal_space(rng_);
      break;
  }
}

// ---------------------------------------------------------------------------
// GridCrossingEnv
// ---------------------------------------------------------------------------

GridCrossingEnv::GridCrossingEnv(std::string name, Layout layout, Cell start,
                                 bool scaled_success_reward, uint64_t seed)
    : Env(std::move(name),
          DomainTheory{DiscreteSpace{{layout.width, layout.height, 4}}, DiscreteSpace{{4}}},
          4 * layout.width * layout.height, seed),
      layout_(std::move(layout)),
      start_(start),
      scaled_success_reward_(scaled_success_reward) {
  if (layout_.blocked(start_.x, start_.y) || layout_.deadly(start_.x, start_.y))
    throw Error("grid start cell is not free");
  x_ = start_.x;
  y_ = start_.y;
}

GCObservation GridCrossingEnv::observe() const {
  return {{double(x_), double(y_), double(dir_)}, {double(x_), double(y_)}, goal_.v};
}

GCObservation GridCrossingEnv::reset(std::optional<uint64_t> seed) {
  if (seed) rng_ = Rng(*seed);
  step_count_ = 0;
  x_ = start_.x;
  y_ = start_.y;
  dir_ = 0;
  pick_episode_goal();
  return observe();
}

StepResult GridCrossingEnv::step(std::span<const double> action) {
  if (action.size() != 1 || !contains(domain_.action_space, action))
    throw Error("grid action must be one of {0,1,2,3}");
  if (step_count_ >= max_steps_) throw Error("step past end of episode");
  ++step_count_;
  int a = static_cast<int>(action[0]);
  if (a == 0) dir_ = (dir_ + 3) % 4;
  else if (a == 1) dir_ = (dir_ + 1) % 4;
  else if (a == 2) {
    int nx = x_ + kDx[dir_], ny = y_ + kDy[dir_];
    if (!layout_.blocked(nx, ny)) {
      x_ = nx;
      y_ = ny;
    }
  }
  StepResult r{observe(), 0.0, false, false};
  if (layout_.deadly(x_, y_)) {
    r.reward = -1.0;
    r.terminated = true;
  } else if (x_ == int(goal_.v[0]) && y_ == int(goal_.v[1])) {
    r.reward = scaled_success_reward_ ? 1.0 - 0.9 * (double(step_count_) / max_steps_) : 1.0;
    r.terminated = true;
  }
  r.truncated = !r.terminated && step_count_ == max_steps_;
  if (r.terminated || r.truncated) step_count_ = max_steps_;  // further steps rejected
  return r;
}

bool GridCrossingEnv::valid_goal(const Goal& g) const {
  if (g.v.size() != 2 || !g.is_cell()) return false;
  int gx = int(g.v[0]), gy = int(g.v[1]);
  if (gx < 1 || gx > layout_.width - 2 || gy < 1 || gy > layout_.height - 2) return false;
  return !layout_.blocked(gx, gy) && !layout_.deadly(gx, gy);
}

Goal GridCrossingEnv::sample_goal_space(Rng& rng) const {
  std::vector<Cell> free;
  for (int y = 1; y <= layout_.height - 2; ++y)
    for (int x = 1; x <= layout_.width - 2; ++x)
      if (!layout_.blocked(x, y) && !layout_.deadly(x, y) && Cell{x, y} != start_)
        free.push_back({x, y});
  Cell c = free[rng.uniform_int(free.size())];
  return Goal{{double(c.x), double(c.y)}};
}

std::vector<double> GridCrossingEnv::state() const {
  return {double(x_), double(y_), double(dir_)};
}

// ---------------------------------------------------------------------------
// PointMazeEnv
// ---------------------------------------------------------------------------

PointMazeEnv::PointMazeEnv(std::string name, Layout layout, std::vector<double> start,
                           uint64_t seed)
    : Env(std::move(name),
          DomainTheory{
              BoxSpace{{0, 0, -kMaxForce, -kMaxForce},
                       {double(layout.width), double(layout.height), kMaxForce, kMaxForce}},
              BoxSpace{{-kMaxForce, -kMaxForce}, {kMaxForce, kMaxForce}}},
          300, seed),
      layout_(std::move(layout)),
      start_(std::move(start)) {
  if (blocked_at(start_[0], start_[1])) throw Error("maze start position is inside a wall");
  pos_ = start_;
}

bool PointMazeEnv::blocked_at(double x, double y) const {
  if (x < 0 || y < 0 || x >= layout_.width || y >= layout_.height) return true;
  return layout_.blocked(int(std::floor(x)), int(std::floor(y)));
}

GCObservation PointMazeEnv::observe() const {
  return {{pos_[0], pos_[1], vel_[0], vel_[1]}, pos_, goal_.v};
}

GCObservation PointMazeEnv::reset(std::optional<uint64_t> seed) {
  if (seed) rng_ = Rng(*seed);
  step_count_ = 0;
  pos_ = start_;
  vel_ = {0, 0};
  pick_episode_goal();
  return observe();
}

StepResult PointMazeEnv::step(std::span<const double> action) {
  if (action.size() != 2) throw Error("maze action must be a force 2-vector");
  if (step_count_ >= max_steps_) throw Error("step past end of episode");
  ++step_count_;
  for (int i = 0; i < 2; ++i) {
    double a = std::clamp(action[i], -kMaxForce, kMaxForce);
    vel_[i] = kDamping * vel_[i] + kDt * a;
  }
  double nx = pos_[0] + kDt * vel_[0];
  if (blocked_at(nx, pos_[1])) vel_[0] = 0;
  else pos_[0] = nx;
  double ny = pos_[1] + kDt * vel_[1];
  if (blocked_at(pos_[0], ny)) vel_[1] = 0;
  else pos_[1] = ny;

  StepResult r{observe(), -1.0, false, false};
  double dx = pos_[0] - goal_.v[0], dy = pos_[1] - goal_.v[1];
  if (std::sqrt(dx * dx + dy * dy) < kSuccessRadius) {
    r.reward = 0.0;
    r.terminated = true;
  }
  r.truncated = !r.terminated && step_count_ == max_steps_;
  if (r.terminated || r.truncated) step_count_ = max_steps_;
  return r;
}

bool PointMazeEnv::valid_goal(const Goal& g) const {
  return g.v.size() == 2 && !blocked_at(g.v[0], g.v[1]);
}

Goal PointMazeEnv::sample_goal_space(Rng& rng) const {
  for (int i = 0; i < 1000; ++i) {
    double x = rng.uniform_real(0, layout_.width);
    double y = rng.uniform_real(0, layout_.height);
    if (!blocked_at(x, y)) return Goal{{x, y}};
  }
  throw Error("maze goal sampling failed");
}

std::vector<double> PointMazeEnv::state() const {
  return {pos_[0], pos_[1], vel_[0], vel_[1]};
}

// ---------------------------------------------------------------------------
// Construction and registry queries
// ---------------------------------------------------------------------------

std::unique_ptr<Env> make_env(const std::string& env_name, std::optional<Goal> goal_override,
                              std::optional<std::vector<Goal>> goal_set_override, uint64_t seed) {
  auto parsed = parse_env_name(env_name);
  auto it = env_table().find(parsed.base);
  if (it == env_table().end()) throw Error("unknown environment: " + env_name);
  auto env = it->second.make(seed);
  if (parsed.goal && goal_override && !(*parsed.goal == *goal_override))
    throw Error("conflicting goals for " + env_name);
  if (goal_set_override) env->set_goal_set(std::move(*goal_set_override));
  if (goal_override) env->set_goal(*goal_override);
  else if (parsed.goal) env->set_goal(*parsed.goal);
  return env;
}

bool env_registered(const std::string& env_name) {
  try {
    auto parsed = parse_env_name(env_name);
    return env_table().count(parsed.base) > 0;
  } catch (const Error&) {
    return false;
  }
}

bool env_discrete(const std::string& env_name) { return entry_for(env_name).discrete; }

bool env_gc_adaptable(const std::string& env_name) { return entry_for(env_name).gc_adaptable; }

Layout layout(const std::string& env_name) {
  auto parsed = parse_env_name(env_name);
  auto env = make_env(parsed.base);
  if (auto* g = dynamic_cast<GridCrossingEnv*>(env.get())) return g->layout();
  return dynamic_cast<PointMazeEnv&>(*env).layout();
}

uint64_t layout_seed(const std::string& env_name) {
  auto parsed = parse_env_name(env_name);
  if (parsed.base == "MiniGrid-SimpleCrossingS13N4") return kSimpleCrossingLayoutSeed;
  if (parsed.base == "MiniGrid-LavaCrossingS9N2") return kLavaCrossingLayoutSeed;
  if (!env_registered(parsed.base)) throw Error("unknown environment: " + env_name);
  return 0;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

Cell cell_of_state(const Env& env, std::span<const double> state) {
  if (env.discrete()) return {int(state[0]), int(state[1])};
  return {int(std::floor(state[0])), int(std::floor(state[1]))};
}

Cell goal_cell(const Env& env) {
  return {int(std::floor(env.goal().v[0])), int(std::floor(env.goal().v[1]))};
}

Cell agent_cell(const Env& env) {
  auto s = env.state();
  return cell_of_state(env, s);
}

}  // namespace

std::string render_ascii(const Env& env, const ObservationSequence* trace) {
  const Layout l = [&] {
    if (auto* g = dynamic_cast<const GridCrossingEnv*>(&env)) return g->layout();
    return dynamic_cast<const PointMazeEnv&>(env).layout();
  }();
  std::vector<std::string> rows(l.height, std::string(l.width, '.'));
  for (const auto& c : l.walls) rows[c.y][c.x] = '#';
  for (const auto& c : l.lava) rows[c.y][c.x] = '~';
  if (trace) {
    size_t n = trace->steps.size();
    for (size_t i = 0; i < n; ++i) {
      Cell c = cell_of_state(env, trace->steps[i].state);
      rows[c.y][c.x] = char('0' + std::min<size_t>(9, i * 10 / std::max<size_t>(1, n)));
    }
  }
  if (!env.goal().v.empty()) {
    Cell g = goal_cell(env);
    rows[g.y][g.x] = 'G';
  }
  Cell a = agent_cell(env);
  if (env.discrete()) {
    const char arrows[4] = {'>', 'v', '<', '^'};
    rows[a.y][a.x] = arrows[dynamic_cast<const GridCrossingEnv&>(env).direction()];
  } else {
    rows[a.y][a.x] = 'A';
  }
  std::string out;
  for (const auto& r : rows) {
    out += r;
    out += '\n';
  }
  return out;
}

std::vector<unsigned char> render_ppm(const Env& env, const ObservationSequence* trace,
                                      int scale) {
  const Layout l = [&] {
    if (auto* g = dynamic_cast<const GridCrossingEnv*>(&env)) return g->layout();
    return dynamic_cast<const PointMazeEnv&>(env).layout();
  }();
  const int w = l.width * scale, h = l.height * scale;
  std::array<unsigned char, 3> wall{40, 40, 40}, free{245, 245, 245}, lava{255, 120, 0},
      goal{0, 190, 0}, agent{250, 220, 40};
  std::vector<std::array<unsigned char, 3>> px(size_t(w) * h, free);

  auto fill_cell = [&](Cell c, std::array<unsigned char, 3> color) {
    for (int yy = c.y * scale; yy < (c.y + 1) * scale; ++yy)
      for (int xx = c.x * scale; xx < (c.x + 1) * scale; ++xx)
        px[size_t(yy) * w + xx] = color;
  };
  auto fill_dot = [&](double fx, double fy, int r, std::array<unsigned char, 3> color) {
    int cx = int(fx * scale), cy = int(fy * scale);
    for (int yy = std::max(0, cy - r); yy <= std::min(h - 1, cy + r); ++yy)
      for (int xx = std::max(0, cx - r); xx <= std::min(w - 1, cx + r); ++xx)
        px[size_t(yy) * w + xx] = color;
  };

  for (const auto& c : l.walls) fill_cell(c, wall);
  for (const auto& c : l.lava) fill_cell(c, lava);
  if (!env.goal().v.empty()) fill_cell(goal_cell(env), goal);
  if (trace) {
    size_t n = trace->steps.size();
    for (size_t i = 0; i < n; ++i) {
      double t = n > 1 ? double(i) / double(n - 1) : 0.0;
      std::array<unsigned char, 3> c{(unsigned char)(40 + 215 * t), 40,
                                     (unsigned char)(255 - 215 * t)};
      const auto& s = trace->steps[i].state;
      if (env.discrete()) fill_dot(s[0] + 0.5, s[1] + 0.5, scale / 4, c);
      else fill_dot(s[0], s[1], scale / 6, c);
    }
  }
  auto st = env.state();
  if (env.discrete()) fill_dot(st[0] + 0.5, st[1] + 0.5, scale / 3, agent);
  else fill_dot(st[0], st[1], scale / 4, agent);

  std::ostringstream head;
  head << "P6\n" << w << " " << h << "\n255\n";
  std::string hs = head.str();
  std::vector<unsigned char> out(hs.begin(), hs.end());
  out.reserve(out.size() + px.size() * 3);
  for (const auto& p : px) {
    out.push_back(p[0]);
    out.push_back(p[1]);
    out.push_back(p[2]);
  }
  return out;
}

}  // namespace odgr::envs
