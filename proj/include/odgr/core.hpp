#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace odgr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Recognizer/environment requirement mismatch (e.g. a discrete-only algorithm
// asked to run on a continuous environment). Mapped to its own CLI exit code.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Spaces
// ---------------------------------------------------------------------------

// Multi-dimensional discrete space; dims holds the cardinality per dimension.
struct DiscreteSpace {
  std::vector<int> dims;
};

// Axis-aligned box with closed bounds.
struct BoxSpace {
  std::vector<double> low;
  std::vector<double> high;
};

using SpaceDesc = std::variant<DiscreteSpace, BoxSpace>;

int space_dims(const SpaceDesc& space);
bool space_is_discrete(const SpaceDesc& space);

// Membership test. Discrete spaces require integral coordinates in range;
// box bounds are closed on both sides. Throws Error on dimension mismatch.
bool contains(const SpaceDesc& space, std::span<const double> point);

// State and action spaces of one environment.
struct DomainTheory {
  SpaceDesc state_space;
  SpaceDesc action_space;
};

// ---------------------------------------------------------------------------
// Goals and observations
// ---------------------------------------------------------------------------

struct Goal {
  std::vector<double> v;

  bool is_cell() const;        // all coordinates integral
  std::string str() const;     // "(11, 1)"
  std::string path_str() const;  // "11x1", filesystem-safe

  bool operator==(const Goal& o) const { return v == o.v; }
};

struct ObservationStep {
  std::vector<double> state;
  std::vector<double> action;
};

// A (possibly degraded) record of an episode. source_indices map each step
// back to its position in the originating full trajectory.
struct ObservationSequence {
  std::vector<ObservationStep> steps;
  std::vector<int> source_indices;
  bool is_consecutive = true;
  double observability = 1.0;

  size_t size() const { return steps.size(); }
  void validate() const;  // throws Error on invariant violation
};

enum class TraceType { Consecutive, NonConsecutive };

const char* to_string(TraceType t);
TraceType trace_type_from_string(const std::string& s);

// One recognition query: candidate goals, an observation, and the ground
// truth used for evaluation only.
struct GRInstance {
  std::vector<Goal> goal_set;
  ObservationSequence observation;
  Goal true_goal;

  void validate(bool benchmark = false) const;
};

struct TrainConfig {
  std::string algorithm;  // "QLEARNING" (tabular), "TILEQ" (tile-coded)
  long timesteps = 0;
};

struct NoiseProfile {
  double state_sigma = 0.1;
  double action_sigma = 0.05;
};

// A registry entry describing one benchmark problem: which environment, the
// goals used during domain learning, the goals announced at adaptation time,
// and the axes along which observation sequences are degraded.
struct ODGRProblemSpec {
  std::string domain_name;
  std::string env_name;
  std::string task_id;
  std::vector<Goal> base_goals;
  std::vector<Goal> dynamic_goals;
  std::vector<TrainConfig> train_configs;  // one per dynamic goal, or one broadcast
  std::vector<double> observability_levels{0.3, 0.5, 0.7, 1.0};
  std::vector<TraceType> trace_types{TraceType::Consecutive, TraceType::NonConsecutive};
  std::optional<NoiseProfile> noise_profile;

  const TrainConfig& config_for(size_t goal_index) const;
  void validate() const;
};

// ---------------------------------------------------------------------------
// Recognition results
// ---------------------------------------------------------------------------

struct ScoredGoal {
  Goal goal;
  double score = 0.0;  // higher = more likely
};

struct RecognitionResult {
  Goal predicted_goal;
  std::vector<ScoredGoal> scores;  // in active goal-set order
  int rank_of_true = 0;            // 1-based; 0 when ground truth unknown
  double inference_seconds = 0.0;
};

// Index of the best-scoring goal; ties go to the earliest entry so results
// are reproducible regardless of evaluation order.
size_t argmax_index(std::span<const ScoredGoal> scores);
const Goal& argmax_with_tiebreak(const std::vector<ScoredGoal>& scores);

// 1 + number of strictly better goals + number of equal-scored goals earlier
// in the list. Throws Error when true_goal is absent.
int rank_of(std::span<const ScoredGoal> scores, const Goal& true_goal);

}  // namespace odgr
