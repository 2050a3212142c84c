#include "odgr/agents.hpp"

#include "wire.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

namespace odgr::agents {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// QTable
// ---------------------------------------------------------------------------

std::vector<double>& QTable::row(uint64_t key) {
  auto [it, inserted] = values_.try_emplace(key);
  if (inserted) it->second.assign(static_cast<size_t>(n_actions_), init_);
  return it->second;
}

const std::vector<double>* QTable::find(uint64_t key) const {
  auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

uint64_t state_key(const DiscreteSpace& space, std::span<const double> state) {
  if (state.size() != space.dims.size()) throw Error("state_key: dimension mismatch");
  uint64_t key = 0;
  for (size_t i = 0; i < state.size(); ++i) {
    long v = std::lround(state[i]);
    if (v < 0 || v >= space.dims[i]) throw Error("state_key: coordinate out of range");
    key = key * static_cast<uint64_t>(space.dims[i]) + static_cast<uint64_t>(v);
  }
  return key;
}

// ---------------------------------------------------------------------------
// TileCodedQ
// ---------------------------------------------------------------------------

TileCodedQ::TileCodedQ(const BoxSpace& state_space, bool goal_conditioned)
    : gc_(goal_conditioned), space_(state_space) {
  if (space_.low.size() < 2) throw Error("TileCodedQ: need at least 2 state dimensions");
  x0_ = space_.low[0];
  y0_ = space_.low[1];
  tile_w_ = (space_.high[0] - space_.low[0]) / kPosTiles;
  tile_h_ = (space_.high[1] - space_.low[1]) / kPosTiles;
  if (tile_w_ <= 0 || tile_h_ <= 0) throw Error("TileCodedQ: degenerate state box");
  tiles_per_tiling_ = static_cast<size_t>(kPosTiles) * kPosTiles * kVelBins;
  if (gc_) tiles_per_tiling_ *= static_cast<size_t>(kPosTiles) * kPosTiles;
  weights_.assign(static_cast<size_t>(kTilings) * tiles_per_tiling_ * kActionBins, 0.0);
}

namespace {

inline int pos_tile(double v, double origin, double width, double offset) {
  int t = static_cast<int>(std::floor((v - origin) / width + offset));
  return std::clamp(t, 0, TileCodedQ::kPosTiles - 1);
}

// Speed thresholds for the four coarse velocity bins.
constexpr double kSpeedEdges[3] = {0.1, 0.3, 0.6};

inline int speed_bin(double vx, double vy) {
  double s = std::hypot(vx, vy);
  if (s < kSpeedEdges[0]) return 0;
  if (s < kSpeedEdges[1]) return 1;
  if (s < kSpeedEdges[2]) return 2;
  return 3;
}

}  // namespace

std::array<uint32_t, TileCodedQ::kTilings> TileCodedQ::features(std::span<const double> state,
                                                                std::span<const double> goal) const {
  if (state.size() < (gc_ ? 4u : 2u)) throw Error("TileCodedQ: state too short");
  if (gc_ && goal.size() < 2) throw Error("TileCodedQ: goal-conditioned query without goal");
  double vx = state.size() > 2 ? state[2] : 0.0;
  double vy = state.size() > 3 ? state[3] : 0.0;
  int vbin = speed_bin(vx, vy);

  std::array<uint32_t, kTilings> out{};
  for (int t = 0; t < kTilings; ++t) {
    double offset = static_cast<double>(t) / kTilings;
    uint64_t local = static_cast<uint64_t>(pos_tile(state[0], x0_, tile_w_, offset));
    local = local * kPosTiles + pos_tile(state[1], y0_, tile_h_, offset);
    local = local * kVelBins + vbin;
    if (gc_) {
      local = local * kPosTiles + pos_tile(goal[0], x0_, tile_w_, offset);
      local = local * kPosTiles + pos_tile(goal[1], y0_, tile_h_, offset);
    }
    out[static_cast<size_t>(t)] =
        static_cast<uint32_t>(static_cast<uint64_t>(t) * tiles_per_tiling_ + local);
  }
  return out;
}

std::array<double, TileCodedQ::kActionBins> TileCodedQ::q_from(
    const std::array<uint32_t, kTilings>& feats) const {
  std::array<double, kActionBins> q{};
  for (uint32_t f : feats) {
    const double* w = &weights_[static_cast<size_t>(f) * kActionBins];
    for (int a = 0; a < kActionBins; ++a) q[static_cast<size_t>(a)] += w[a];
  }
  return q;
}

std::array<double, TileCodedQ::kActionBins> TileCodedQ::q_values(std::span<const double> state,
                                                                 std::span<const double> goal) const {
  return q_from(features(state, goal));
}

void TileCodedQ::update(const std::array<uint32_t, kTilings>& feats, int action_bin, double target,
                        double alpha) {
  double q = 0.0;
  for (uint32_t f : feats) q += weights_[static_cast<size_t>(f) * kActionBins + action_bin];
  double step = alpha / kTilings * (target - q);
  for (uint32_t f : feats) weights_[static_cast<size_t>(f) * kActionBins + action_bin] += step;
}

int TileCodedQ::action_bin(std::span<const double> action) {
  if (action.size() < 2) throw Error("TileCodedQ: continuous action needs 2 components");
  auto comp = [](double v) { return v < -0.5 ? 0 : (v > 0.5 ? 2 : 1); };
  return comp(action[0]) * 3 + comp(action[1]);
}

std::array<double, 2> TileCodedQ::bin_center(int action_bin) {
  if (action_bin < 0 || action_bin >= kActionBins) throw Error("TileCodedQ: bad action bin");
  return {static_cast<double>(action_bin / 3 - 1), static_cast<double>(action_bin % 3 - 1)};
}

// ---------------------------------------------------------------------------
// PolicyArtifact queries
// ---------------------------------------------------------------------------

bool PolicyArtifact::goal_conditioned() const {
  if (kind == "gc-tabular") return true;
  if (kind == "tile-coded") return tiles.goal_conditioned();
  return false;
}

int PolicyArtifact::n_action_bins() const {
  return kind == "tile-coded" ? TileCodedQ::kActionBins : table.n_actions();
}

std::optional<std::vector<double>> PolicyArtifact::q_values(std::span<const double> state,
                                                            std::span<const double> goal) const {
  if (goal_conditioned() != !goal.empty())
    throw Error("policy query: goal must be given exactly when the policy is goal-conditioned");
  if (kind == "tile-coded") {
    auto q = tiles.q_values(state, goal);
    return std::vector<double>(q.begin(), q.end());
  }
  uint64_t key = state_key(state_dims, state);
  if (kind == "gc-tabular") {
    uint64_t gkey = state_key(goal_dims, goal);
    uint64_t span = 1;
    for (int d : goal_dims.dims) span *= static_cast<uint64_t>(d);
    key = key * span + gkey;
  }
  const auto* row = table.find(key);
  if (!row) return std::nullopt;
  return *row;
}

std::vector<double> PolicyArtifact::action_for_bin(int bin) const {
  if (bin < 0 || bin >= n_action_bins()) throw Error("action_for_bin: bad bin index");
  if (kind == "tile-coded") {
    auto c = TileCodedQ::bin_center(bin);
    return {c[0], c[1]};
  }
  return {static_cast<double>(bin)};
}

// ---------------------------------------------------------------------------
// Softmax extraction
// ---------------------------------------------------------------------------

std::vector<double> softmax(std::span<const double> q, double temperature) {
  if (temperature <= 0) throw Error("softmax: temperature must be positive");
  if (q.empty()) throw Error("softmax: empty input");
  double m = *std::max_element(q.begin(), q.end());
  std::vector<double> p(q.size());
  double sum = 0;
  for (size_t i = 0; i < q.size(); ++i) {
    p[i] = std::exp((q[i] - m) / temperature);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::vector<double> softmax_policy(const PolicyArtifact& artifact, std::span<const double> state,
                                   std::span<const double> goal, double temperature) {
  if (temperature <= 0) throw Error("softmax_policy: temperature must be positive");
  auto q = artifact.q_values(state, goal);
  if (!q) {
    size_t n = static_cast<size_t>(artifact.n_action_bins());
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
  }
  return softmax(*q, temperature);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

double anneal_eps(const TrainHyper& h, long t, long total) {
  long horizon = std::max<long>(1, static_cast<long>(h.eps_frac * static_cast<double>(total)));
  double frac = std::min(1.0, static_cast<double>(t) / static_cast<double>(horizon));
  return h.eps_start + (h.eps_end - h.eps_start) * frac;
}

template <typename Q>
int greedy_with_ties(const Q& q, int n, Rng& rng) {
  double best = -std::numeric_limits<double>::infinity();
  int count = 0;
  int pick = 0;
  for (int a = 0; a < n; ++a) {
    if (q[static_cast<size_t>(a)] > best) {
      best = q[static_cast<size_t>(a)];
      count = 1;
      pick = a;
    } else if (q[static_cast<size_t>(a)] == best) {
      // reservoir pick keeps ties unbiased without a second pass
      ++count;
      if (rng.uniform_int(count) == 0) pick = a;
    }
  }
  return pick;
}

struct TabularTrainer {
  QTable q;
  std::map<uint64_t, std::vector<uint32_t>> visits;

  double max_next(uint64_t key) const {
    const auto* row = q.find(key);
    if (!row) return q.init();
    return *std::max_element(row->begin(), row->end());
  }

  // Greedy over value plus a count bonus: seldom-tried actions get revisited
  // without parking inflated estimates in the table itself.
  int select(uint64_t key, int n_actions, double bonus, Rng& rng) const {
    const auto* row = q.find(key);
    const std::vector<uint32_t>* vis = nullptr;
    if (auto it = visits.find(key); it != visits.end()) vis = &it->second;
    int best = 0;
    int ties = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < n_actions; ++a) {
      double qv = row ? (*row)[static_cast<size_t>(a)] : q.init();
      uint32_t n = vis ? (*vis)[static_cast<size_t>(a)] : 0;
      double v = qv + bonus / std::sqrt(1.0 + static_cast<double>(n));
      if (v > best_v) {
        best_v = v;
        best = a;
        ties = 1;
      } else if (v == best_v && rng.uniform_int(++ties) == 0) {
        best = a;
      }
    }
    return best;
  }

  void update(uint64_t key, int a, double target, double base_alpha) {
    auto& row = q.row(key);
    auto [it, inserted] = visits.try_emplace(key);
    if (inserted) it->second.assign(row.size(), 0);
    uint32_t n = ++it->second[static_cast<size_t>(a)];
    double alpha = base_alpha / std::sqrt(static_cast<double>(n));
    row[static_cast<size_t>(a)] += alpha * (target - row[static_cast<size_t>(a)]);
  }
};

// Per-tile learning-rate decay mirroring the tabular visit rule.
struct TileTrainer {
  TileCodedQ& tiles;
  std::vector<uint32_t> counts;
  double base_alpha;

  TileTrainer(TileCodedQ& t, double alpha) : tiles(t), base_alpha(alpha) {
    counts.assign(t.weights().size(), 0);
  }

  double max_q(const std::array<uint32_t, TileCodedQ::kTilings>& f) const {
    auto q = tiles.q_from(f);
    return *std::max_element(q.begin(), q.end());
  }

  void update(const std::array<uint32_t, TileCodedQ::kTilings>& f, int a, double target) {
    auto& w = tiles.weights();
    double q = 0;
    for (uint32_t i : f) q += w[static_cast<size_t>(i) * TileCodedQ::kActionBins + a];
    double delta = target - q;
    for (uint32_t i : f) {
      size_t idx = static_cast<size_t>(i) * TileCodedQ::kActionBins + a;
      uint32_t n = ++counts[idx];
      w[idx] += base_alpha / std::sqrt(static_cast<double>(n)) / TileCodedQ::kTilings * delta;
    }
  }
};

// Shared driver for the two tabular flavors; `augment` folds the episode goal
// into the state key for goal-conditioned tables.
void run_tabular_training(envs::Env& env, TabularTrainer& trainer, long timesteps,
                          const TrainHyper& hyper, Rng& rng, const DiscreteSpace& sdims,
                          const DiscreteSpace* gdims) {
  const double gamma = hyper.gamma_grid;
  const int n_actions = env.action_count();
  uint64_t gspan = 1;
  if (gdims) {
    for (int d : gdims->dims) gspan *= static_cast<uint64_t>(d);
  }
  auto key_of = [&](std::span<const double> s) {
    uint64_t k = state_key(sdims, s);
    if (gdims) k = k * gspan + state_key(*gdims, env.goal().v);
    return k;
  };

  struct TabStep {
    uint64_t key;
    uint64_t next;
    int a;
    double reward;
    bool terminated;
  };
  std::vector<TabStep> ep;

  env.reset();
  uint64_t key = key_of(env.state());
  for (long t = 0; t < timesteps; ++t) {
    double eps = anneal_eps(hyper, t, timesteps);
    int a;
    if (rng.uniform01() < eps) {
      a = rng.uniform_int(n_actions);
    } else {
      a = trainer.select(key, n_actions, hyper.explore_bonus, rng);
    }
    double action = a;
    auto r = env.step({&action, 1});
    uint64_t next = key_of(env.state());
    double target = r.reward;
    if (!r.terminated) target += gamma * trainer.max_next(next);
    trainer.update(key, a, target, hyper.alpha);
    ep.push_back({key, next, a, r.reward, r.terminated});
    if (r.terminated || r.truncated) {
      // Backward sweep so one goal traversal reaches the whole path at once.
      for (auto it = ep.rbegin(); it != ep.rend(); ++it) {
        double tg = it->reward;
        if (!it->terminated) tg += gamma * trainer.max_next(it->next);
        trainer.update(it->key, it->a, tg, hyper.alpha);
      }
      ep.clear();
      env.reset();
      key = key_of(env.state());
    } else {
      key = next;
    }
  }
}

struct MazeStep {
  std::vector<double> s;
  std::vector<double> ns;
  int bin = 0;
  double reward = 0;
  bool terminated = false;
};

// One-step TD while acting, then a backward sweep over the finished episode
// (with the true goal and with hindsight-relabeled goals) so the sparse
// terminal signal reaches early states within a single episode.
void run_tile_training(envs::Env& env, TileCodedQ& tq, long timesteps, const TrainHyper& hyper,
                       Rng& rng) {
  const double gamma = hyper.gamma_maze;
  const int repeat = std::max(1, hyper.explore_repeat);
  TileTrainer trainer(tq, hyper.alpha);
  std::vector<MazeStep> ep;

  auto goal_span = [&]() -> std::span<const double> {
    if (!tq.goal_conditioned()) return {};
    return std::span<const double>(env.goal().v);
  };
  auto replay_true = [&](std::span<const double> g) {
    for (auto it = ep.rbegin(); it != ep.rend(); ++it) {
      double target = it->reward;
      if (!it->terminated) target += gamma * trainer.max_q(tq.features(it->ns, g));
      trainer.update(tq.features(it->s, g), it->bin, target);
    }
  };
  // Pretend the position reached at step `upto` was the goal all along and
  // learn from the prefix that leads there.
  auto replay_hindsight = [&](size_t upto) {
    const double gx = ep[upto].ns[0];
    const double gy = ep[upto].ns[1];
    const double gv[2] = {gx, gy};
    std::span<const double> g(gv, 2);
    for (size_t i = upto + 1; i-- > 0;) {
      const auto& tr = ep[i];
      bool reached = std::hypot(tr.ns[0] - gx, tr.ns[1] - gy) < envs::PointMazeEnv::kSuccessRadius;
      double target = reached ? 0.0 : -1.0 + gamma * trainer.max_q(tq.features(tr.ns, g));
      trainer.update(tq.features(tr.s, g), tr.bin, target);
    }
  };

  env.reset();
  auto feats = tq.features(env.state(), goal_span());
  int held_bin = -1;
  int held_left = 0;
  for (long t = 0; t < timesteps; ++t) {
    double eps = anneal_eps(hyper, t, timesteps);
    int bin;
    if (held_left > 0) {
      // Random bursts last several steps so exploration actually displaces
      // the point mass instead of jittering around the greedy path.
      bin = held_bin;
      --held_left;
    } else if (rng.uniform01() < eps) {
      bin = rng.uniform_int(TileCodedQ::kActionBins);
      held_bin = bin;
      held_left = repeat - 1;
    } else {
      bin = greedy_with_ties(tq.q_from(feats), TileCodedQ::kActionBins, rng);
    }
    MazeStep step;
    step.s = env.state();
    auto r = env.step(TileCodedQ::bin_center(bin));
    step.ns = env.state();
    step.bin = bin;
    step.reward = r.reward;
    step.terminated = r.terminated;
    auto g = goal_span();
    auto next = tq.features(step.ns, g);
    double target = r.reward;
    if (!r.terminated) target += gamma * trainer.max_q(next);
    trainer.update(feats, bin, target);
    ep.push_back(std::move(step));
    if (r.terminated || r.truncated) {
      replay_true(g);
      if (tq.goal_conditioned()) {
        replay_hindsight(ep.size() - 1);
        for (int k = 0; k < hyper.hindsight_goals; ++k)
          replay_hindsight(static_cast<size_t>(rng.uniform_int(static_cast<int>(ep.size()))));
      }
      ep.clear();
      env.reset();
      feats = tq.features(env.state(), goal_span());
      held_left = 0;
    } else {
      feats = next;
    }
  }
}

std::string domain_of(const envs::Env& env) { return env.discrete() ? "minigrid" : "point_maze"; }

}  // namespace

namespace {

uint64_t attempt_seed(uint64_t seed, int k) {
  if (k == 0) return seed;
  return derive_seed(derive_seed(seed, {"retry"}), {static_cast<uint64_t>(k)});
}

}  // namespace

PolicyArtifact train_q(const std::string& env_name, const Goal& goal, long timesteps,
                       uint64_t seed, const TrainHyper& hyper) {
  {
    auto probe = envs::make_env(env_name, goal);
    if (!probe->discrete())
      throw CapabilityError("train_q requires a discrete environment: " + env_name);
  }

  PolicyArtifact best;
  const int attempts = timesteps > 0 ? std::max(1, hyper.attempts) : 1;
  for (int k = 0; k < attempts; ++k) {
    const uint64_t aseed = attempt_seed(seed, k);
    auto env = envs::make_env(env_name, goal, std::nullopt, derive_seed(aseed, {"train-env"}));
    const auto& sdims = std::get<DiscreteSpace>(env->domain().state_space);

    PolicyArtifact art;
    art.kind = "tabular";
    art.env_name = env_name;
    art.goal = goal;
    art.algorithm = "QLEARNING";
    art.timesteps = timesteps;
    art.state_dims = sdims;
    art.table = QTable(env->action_count());

    if (timesteps > 0) {
      TabularTrainer trainer;
      trainer.q = QTable(env->action_count());
      Rng rng(derive_seed(aseed, {"train-q"}));
      run_tabular_training(*env, trainer, timesteps, hyper, rng, sdims, nullptr);
      art.table = std::move(trainer.q);
      art.trained = true;
      art.greedy_success = evaluate_success(art, goal, hyper.eval_rollouts, aseed);
    }
    if (k == 0 || art.greedy_success > best.greedy_success) best = std::move(art);
    if (!best.trained || best.greedy_success >= 0.95) break;
  }
  return best;
}

PolicyArtifact train_gc_q(const std::string& env_name, const std::vector<Goal>& goal_set,
                          long timesteps, uint64_t seed, const TrainHyper& hyper) {
  std::optional<std::vector<Goal>> set;
  if (!goal_set.empty()) set = goal_set;
  {
    auto probe = envs::make_env(env_name, std::nullopt, set);
    if (!probe->gc_adaptable())
      throw CapabilityError("train_gc_q requires a goal-conditioned environment: " + env_name);
  }

  // Goals the retry loop scores candidates on: the training set itself, or a
  // fixed sample from the goal space when training over the whole space.
  std::vector<Goal> eval_goals = goal_set;
  if (eval_goals.empty()) {
    auto sampler = envs::make_env(env_name);
    Rng gr(derive_seed(seed, {"eval-goals"}));
    for (int i = 0; i < 5; ++i) eval_goals.push_back(sampler->sample_goal_space(gr));
  }

  PolicyArtifact best;
  const int attempts = timesteps > 0 ? std::max(1, hyper.attempts) : 1;
  for (int k = 0; k < attempts; ++k) {
    const uint64_t aseed = attempt_seed(seed, k);
    auto env = envs::make_env(env_name, std::nullopt, set, derive_seed(aseed, {"train-env"}));

    PolicyArtifact art;
    art.env_name = env_name;
    art.timesteps = timesteps;
    // A singleton set behaves like per-goal training; the goal then addresses
    // the artifact in the cache while the payload stays goal-conditioned.
    if (goal_set.size() == 1) art.goal = goal_set[0];

    if (env->discrete()) {
      art.kind = "gc-tabular";
      art.algorithm = "QLEARNING";
      art.state_dims = std::get<DiscreteSpace>(env->domain().state_space);
      art.goal_dims = DiscreteSpace{{art.state_dims.dims[0], art.state_dims.dims[1]}};
      art.table = QTable(env->action_count());
      if (timesteps > 0) {
        TabularTrainer trainer;
        trainer.q = QTable(env->action_count());
        Rng rng(derive_seed(aseed, {"train-gc-q"}));
        run_tabular_training(*env, trainer, timesteps, hyper, rng, art.state_dims, &art.goal_dims);
        art.table = std::move(trainer.q);
        art.trained = true;
      }
    } else {
      art.kind = "tile-coded";
      art.algorithm = "TILEQ";
      art.tiles = TileCodedQ(std::get<BoxSpace>(env->domain().state_space), true);
      auto& w = art.tiles.weights();
      std::fill(w.begin(), w.end(), hyper.q_init_maze / TileCodedQ::kTilings);
      if (timesteps > 0) {
        Rng rng(derive_seed(aseed, {"train-gc-q"}));
        run_tile_training(*env, art.tiles, timesteps, hyper, rng);
        art.trained = true;
      }
    }
    if (art.trained) {
      double sum = 0;
      for (const auto& g : eval_goals) sum += evaluate_success(art, g, hyper.eval_rollouts, aseed);
      art.greedy_success = sum / static_cast<double>(eval_goals.size());
    }
    if (k == 0 || art.greedy_success > best.greedy_success) best = std::move(art);
    if (!best.trained || best.greedy_success >= 0.95) break;
  }
  return best;
}

PolicyArtifact fine_tune(const PolicyArtifact& artifact, const Goal& goal, int episodes,
                         uint64_t seed, const TrainHyper& hyper) {
  if (!artifact.goal_conditioned()) throw Error("fine_tune requires a goal-conditioned artifact");
  PolicyArtifact out = artifact;
  out.goal = goal;
  if (episodes <= 0) return out;

  auto env = envs::make_env(artifact.env_name, goal, std::nullopt, derive_seed(seed, {"tune-env"}));
  Rng rng(derive_seed(seed, {"fine-tune"}));
  TrainHyper tune = hyper;
  tune.eps_start = tune.eps_end;  // exploit the transferred policy, explore at the floor rate

  if (artifact.kind == "tile-coded") {
    long budget = static_cast<long>(episodes) * env->max_steps();
    // Same learning rule as training (fresh decay counters, backward replay
    // with the fixed target goal), capped at the requested episode count.
    const double gamma = tune.gamma_maze;
    TileTrainer trainer(out.tiles, tune.alpha);
    std::vector<MazeStep> ep;
    int done_episodes = 0;
    env->reset();
    auto feats = out.tiles.features(env->state(), goal.v);
    for (long t = 0; t < budget && done_episodes < episodes; ++t) {
      int bin;
      if (rng.uniform01() < tune.eps_end) {
        bin = rng.uniform_int(TileCodedQ::kActionBins);
      } else {
        bin = greedy_with_ties(out.tiles.q_from(feats), TileCodedQ::kActionBins, rng);
      }
      MazeStep step;
      step.s = env->state();
      auto r = env->step(TileCodedQ::bin_center(bin));
      step.ns = env->state();
      step.bin = bin;
      step.reward = r.reward;
      step.terminated = r.terminated;
      auto next = out.tiles.features(step.ns, goal.v);
      double target = r.reward;
      if (!r.terminated) target += gamma * trainer.max_q(next);
      trainer.update(feats, bin, target);
      ep.push_back(std::move(step));
      if (r.terminated || r.truncated) {
        for (auto it = ep.rbegin(); it != ep.rend(); ++it) {
          double tg = it->reward;
          if (!it->terminated) tg += gamma * trainer.max_q(out.tiles.features(it->ns, goal.v));
          trainer.update(out.tiles.features(it->s, goal.v), it->bin, tg);
        }
        ep.clear();
        ++done_episodes;
        env->reset();
        feats = out.tiles.features(env->state(), goal.v);
      } else {
        feats = next;
      }
    }
  } else {
    // gc-tabular: train per-episode with the goal fixed
    TabularTrainer trainer;
    trainer.q = out.table;
    long budget = static_cast<long>(episodes) * env->max_steps();
    run_tabular_training(*env, trainer, budget, tune, rng, out.state_dims, &out.goal_dims);
    out.table = std::move(trainer.q);
  }

  // Keep whichever policy evaluates better on the target goal, original or
  // tuned, over the same seeded rollouts.
  PolicyArtifact base = artifact;
  base.goal = goal;
  double before = evaluate_success(base, goal, hyper.eval_rollouts, seed);
  double after = evaluate_success(out, goal, hyper.eval_rollouts, seed);
  if (after < before) {
    out = std::move(base);
    out.greedy_success = before;
  } else {
    out.greedy_success = after;
  }
  return out;
}

double evaluate_success(const PolicyArtifact& artifact, const Goal& goal, int n, uint64_t seed) {
  if (n <= 0) return 0.0;
  auto env = envs::make_env(artifact.env_name, goal, std::nullopt, derive_seed(seed, {"eval-env"}));
  std::span<const double> g =
      artifact.goal_conditioned() ? std::span<const double>(goal.v) : std::span<const double>{};
  int successes = 0;
  for (int ep = 0; ep < n; ++ep) {
    env->reset(derive_seed(seed, {"eval-episode"}) + static_cast<uint64_t>(ep));
    bool done = false;
    while (!done) {
      auto q = artifact.q_values(env->state(), g);
      int bin = 0;
      if (q) {
        bin = static_cast<int>(
            std::max_element(q->begin(), q->end()) - q->begin());
      }
      auto r = env->step(artifact.action_for_bin(bin));
      if (r.terminated && r.reward >= 0) ++successes;
      done = r.terminated || r.truncated;
    }
  }
  return static_cast<double>(successes) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'O', 'D', 'G', 'R', 'A', 'R', 'T', '1'};
constexpr uint32_t kVersion = 1;

using wire::Reader;
using wire::Writer;

std::string serialize_payload(const PolicyArtifact& a) {
  Writer w;
  w.u8(a.trained ? 1 : 0);
  w.f64(a.greedy_success);
  w.dims(a.state_dims);
  w.dims(a.goal_dims);
  if (a.kind == "tile-coded") {
    w.u8(a.tiles.goal_conditioned() ? 1 : 0);
    const auto& box = a.tiles.state_space();
    w.doubles(box.low);
    w.doubles(box.high);
    w.doubles(a.tiles.weights());
  } else {
    w.u32(static_cast<uint32_t>(a.table.n_actions()));
    w.u64(a.table.data().size());
    for (const auto& [key, row] : a.table.data()) {
      w.u64(key);
      w.raw(row.data(), row.size() * sizeof(double));
    }
  }
  return w.buf;
}

void deserialize_payload(Reader& r, PolicyArtifact& a) {
  a.trained = r.u8() != 0;
  a.greedy_success = r.f64();
  a.state_dims = r.dims();
  a.goal_dims = r.dims();
  if (a.kind == "tile-coded") {
    bool gc = r.u8() != 0;
    BoxSpace box;
    box.low = r.doubles();
    box.high = r.doubles();
    a.tiles = TileCodedQ(box, gc);
    a.tiles.weights() = r.doubles();
  } else {
    uint32_t n_actions = r.u32();
    a.table = QTable(static_cast<int>(n_actions));
    uint64_t rows = r.u64();
    for (uint64_t i = 0; i < rows; ++i) {
      uint64_t key = r.u64();
      auto& row = a.table.row(key);
      r.raw(row.data(), row.size() * sizeof(double));
    }
  }
}

}  // namespace

std::string artifact_path(const std::string& cache_root, const std::string& domain_name,
                          const std::string& env_name, const std::string& goal_dir,
                          const std::string& algo, long timesteps, uint64_t seed) {
  fs::path p = fs::path(cache_root) / "agents" / domain_name / env_name / goal_dir;
  std::string file = algo + "_" + std::to_string(timesteps);
  if (seed != 0) file += "_seed" + std::to_string(seed);
  return (p / (file + ".bin")).string();
}

void save_artifact(const PolicyArtifact& artifact, const std::string& path) {
  std::string payload = serialize_payload(artifact);

  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.str(artifact.kind);
  w.str(artifact.env_name);
  w.u8(artifact.goal ? 1 : 0);
  if (artifact.goal) w.doubles(artifact.goal->v);
  w.str(artifact.algorithm);
  w.i64(artifact.timesteps);
  w.u32(crc32(payload.data(), payload.size()));
  w.buf += payload;

  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write artifact: " + tmp.string());
    out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw Error("short write: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::optional<PolicyArtifact> load_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Reader r{bytes.data(), bytes.data() + bytes.size(), "artifact"};
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ChecksumError("artifact has wrong magic: " + path);
  uint32_t version = r.u32();
  if (version != kVersion)
    throw Error("unsupported artifact version " + std::to_string(version) + ": " + path);

  PolicyArtifact a;
  a.kind = r.str();
  a.env_name = r.str();
  if (r.u8() != 0) {
    Goal g;
    g.v = r.doubles();
    a.goal = g;
  }
  a.algorithm = r.str();
  a.timesteps = r.i64();
  uint32_t stored_crc = r.u32();
  size_t payload_len = static_cast<size_t>(r.end - r.p);
  if (crc32(r.p, payload_len) != stored_crc)
    throw ChecksumError("artifact checksum mismatch: " + path);
  deserialize_payload(r, a);
  return a;
}

}  // namespace odgr::agents
