#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "odgr/core.hpp"
#include "odgr/envs.hpp"
#include "odgr/util.hpp"

namespace odgr::agents {

// ---------------------------------------------------------------------------
// Value function payloads
// ---------------------------------------------------------------------------

// Sparse action-value table over mixed-radix state keys. Rows are created on
// first touch; a missing row means the state was never visited. New rows
// start at `init`, so training can seed unexplored actions optimistically.
class QTable {
 public:
  explicit QTable(int n_actions = 0, double init = 0.0) : n_actions_(n_actions), init_(init) {}

  double init() const { return init_; }
  std::vector<double>& row(uint64_t key);
  const std::vector<double>* find(uint64_t key) const;
  int n_actions() const { return n_actions_; }
  const std::map<uint64_t, std::vector<double>>& data() const { return values_; }
  std::map<uint64_t, std::vector<double>>& data() { return values_; }

 private:
  int n_actions_ = 0;
  double init_ = 0.0;
  std::map<uint64_t, std::vector<double>> values_;
};

// Mixed-radix key of a discrete state vector.
uint64_t state_key(const DiscreteSpace& space, std::span<const double> state);

// Tile-coded Q over a 2D position/velocity box with a 3x3 discrete force
// grid. Each tiling layers an offset 8x8 position grid crossed with a coarse
// speed bin; goal-conditioned variants cross in an 8x8 goal tile as well.
// Speed rather than direction is what the bins separate: a stopped agent
// must not alias with a moving one, or the policy learns to park on
// coasting value. Q(s,a) is the sum of the active weights, one per tiling.
class TileCodedQ {
 public:
  static constexpr int kTilings = 8;
  static constexpr int kPosTiles = 8;
  static constexpr int kVelBins = 4;
  static constexpr int kActionBins = 9;

  TileCodedQ() = default;
  TileCodedQ(const BoxSpace& state_space, bool goal_conditioned);

  bool goal_conditioned() const { return gc_; }
  // One active tile index per tiling.
  std::array<uint32_t, kTilings> features(std::span<const double> state,
                                          std::span<const double> goal = {}) const;
  std::array<double, kActionBins> q_values(std::span<const double> state,
                                           std::span<const double> goal = {}) const;
  std::array<double, kActionBins> q_from(const std::array<uint32_t, kTilings>& feats) const;
  void update(const std::array<uint32_t, kTilings>& feats, int action_bin, double target,
              double alpha);

  static int action_bin(std::span<const double> action);      // thresholds at +-0.5
  static std::array<double, 2> bin_center(int action_bin);    // components in {-1,0,1}

  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& weights() { return weights_; }
  const BoxSpace& state_space() const { return space_; }

 private:
  bool gc_ = false;
  BoxSpace space_;
  double x0_ = 0, y0_ = 0, tile_w_ = 1, tile_h_ = 1;
  size_t tiles_per_tiling_ = 0;
  std::vector<double> weights_;  // [tiling][tile][action_bin]
};

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

// A trained policy plus the metadata that addresses it in the cache. The
// payload is immutable once training returns.
struct PolicyArtifact {
  std::string kind;         // "tabular" | "gc-tabular" | "tile-coded"
  std::string env_name;
  std::optional<Goal> goal;  // empty for goal-conditioned policies
  std::string algorithm;     // "QLEARNING" | "TILEQ"
  long timesteps = 0;
  bool trained = false;
  // Post-training greedy rollout success fraction; the mean over evaluation
  // goals when the policy is goal-conditioned. A low value flags a policy
  // that trained without reaching its goal, it is never an error.
  double greedy_success = 0.0;

  QTable table;          // tabular / gc-tabular
  TileCodedQ tiles;      // tile-coded
  DiscreteSpace state_dims;  // tabular state key radices
  DiscreteSpace goal_dims;   // gc-tabular goal key radices

  std::string goal_dir() const { return goal ? goal->path_str() : "gc"; }

  // Whether queries need a goal argument. Independent of the `goal` metadata
  // field, which only addresses the artifact in the cache.
  bool goal_conditioned() const;
  int n_action_bins() const;
  // Action values for a state; goal required iff the policy is
  // goal-conditioned. Returns nullopt for unseen tabular states.
  std::optional<std::vector<double>> q_values(std::span<const double> state,
                                              std::span<const double> goal = {}) const;
  // Concrete env action for a bin index ({bin} for grids, force for mazes).
  std::vector<double> action_for_bin(int bin) const;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Learning-rate base decays as alpha / sqrt(visits), counted per state-action
// for tables and per active tile for tile coding. Grid tables start at zero
// and exploration is driven by a count bonus added at action-selection time
// only, so stored values stay honest for greedy evaluation. Maze tiles start
// pessimistic at -100: every step costs -1, so unknown regions must not
// outshine experienced paths when the policy is read back greedily.
struct TrainHyper {
  double alpha = 0.1;
  double gamma_grid = 0.95;
  double gamma_maze = 0.99;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_frac = 0.5;        // fraction of timesteps spent annealing
  double explore_bonus = 1.0;   // count-based bonus weight for discrete action selection
  double q_init_maze = -100.0;
  int explore_repeat = 16;      // hold each random continuous action this many steps
  int hindsight_goals = 2;      // extra achieved-goal relabels per maze episode
  int attempts = 4;             // exploration restarts; best artifact by eval success wins
  int eval_rollouts = 20;
};

// Per-goal tabular training on a discrete environment (continuous envs are a
// capability error). Runs up to `hyper.attempts` independent exploration
// streams of `timesteps` steps each and keeps the artifact that evaluates
// best; everything is deterministic in `seed`.
PolicyArtifact train_q(const std::string& env_name, const Goal& goal, long timesteps,
                       uint64_t seed, const TrainHyper& hyper = {});

// Goal-conditioned training; `goal_set` empty means sampling the
// environment's whole goal space each episode. Maze episodes are replayed
// backwards and relabeled with achieved positions as substitute goals, which
// is what lets a sparse -1/0 reward carve value ridges a random walk would
// never find. A singleton set behaves like per-goal training.
PolicyArtifact train_gc_q(const std::string& env_name, const std::vector<Goal>& goal_set,
                          long timesteps, uint64_t seed, const TrainHyper& hyper = {});

// Copy of a goal-conditioned artifact trained further with `goal` fixed. The
// input is never mutated. The trained copy is kept only when it evaluates at
// least as well as the original on the target goal, so fine-tuning never
// regresses the policy it starts from.
PolicyArtifact fine_tune(const PolicyArtifact& artifact, const Goal& goal, int episodes,
                         uint64_t seed, const TrainHyper& hyper = {});

// Greedy success fraction over n seeded evaluation episodes.
double evaluate_success(const PolicyArtifact& artifact, const Goal& goal, int n, uint64_t seed);

// ---------------------------------------------------------------------------
// Policy extraction
// ---------------------------------------------------------------------------

std::vector<double> softmax(std::span<const double> q, double temperature);

// pi(.|s[,g]) over the artifact's action bins; uniform for unseen states.
std::vector<double> softmax_policy(const PolicyArtifact& artifact, std::span<const double> state,
                                   std::span<const double> goal, double temperature);

constexpr double kDefaultTemperature = 0.1;

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

// Artifacts live at
//   <cache_root>/agents/<domain>/<env>/<goal|gc>/<algo>_<timesteps>.bin
// with a `_seed<S>` suffix for nonzero training seeds. Binary format:
// magic, version, metadata, payload, crc32 of the payload bytes.
std::string artifact_path(const std::string& cache_root, const std::string& domain_name,
                          const std::string& env_name, const std::string& goal_dir,
                          const std::string& algo, long timesteps, uint64_t seed);

void save_artifact(const PolicyArtifact& artifact, const std::string& path);
// nullopt when the file does not exist; ChecksumError when it is corrupt.
std::optional<PolicyArtifact> load_artifact(const std::string& path);

}  // namespace odgr::agents
