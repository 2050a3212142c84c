#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "odgr/agents.hpp"
#include "odgr/core.hpp"

namespace odgr::recognizers {

// ---------------------------------------------------------------------------
// Capabilities and goal libraries
// ---------------------------------------------------------------------------

struct RecognizerCapability {
  bool supports_discrete = false;
  bool supports_continuous = false;
  bool adapts_to_new_goals = false;  // adapts without retraining per goal from scratch
  bool requires_gc_env = false;
};

// How a library entry came to exist. Recognizers that retrain per goal always
// produce `trained`; the goal-conditioned family spans the rest.
enum class Provenance { trained, zero_shot, recalled, fine_tuned, provided_sequences };

const char* to_string(Provenance p);

struct GoalLibraryEntry {
  Goal goal;
  Provenance provenance = Provenance::trained;
  // Requested adaptation budget behind this entry: training timesteps, or the
  // step cap for fine-tuning. Zero exactly when no training happened.
  long train_steps = 0;
  // Per-goal policy. Entries scored through the shared goal-conditioned
  // policy leave this empty.
  std::optional<agents::PolicyArtifact> policy;
  // Example sequences and their embedding centroid, for metric-based scoring.
  std::vector<ObservationSequence> sequences;
  std::vector<double> centroid;
};

struct RecognizerOptions {
  std::string metric;  // empty picks the algorithm default; see each class
  double temperature = agents::kDefaultTemperature;
  uint64_t seed = 0;
  std::string cache_root;  // artifact reuse across runs; empty disables
  // Optional supplier of per-goal policies consulted before any training or
  // cache lookup. Lets callers inject exactly-solved tables.
  std::function<std::optional<agents::PolicyArtifact>(const Goal&, const TrainConfig&)>
      policy_source;
};

// ---------------------------------------------------------------------------
// Three-phase recognizer contract
// ---------------------------------------------------------------------------

// Phases must run in order: domain learning binds the recognizer to one
// environment, goals adaptation builds the goal library, inference scores an
// observation against it. The first two phases mutate state and are
// exclusive; after adaptation the recognizer is read-only and inference may
// run concurrently from many threads.
class Recognizer {
 public:
  explicit Recognizer(RecognizerOptions opts);
  virtual ~Recognizer();

  virtual const char* name() const = 0;
  virtual RecognizerCapability capability() const = 0;

  void domain_learning_phase(const std::string& domain_name, const std::string& env_name,
                             std::optional<std::vector<Goal>> base_goals,
                             const TrainConfig& config);
  void goals_adaptation_phase(const std::vector<Goal>& dynamic_goals,
                              const std::vector<TrainConfig>& train_configs);
  // Example-driven adaptation; only recognizers that consume demonstration
  // sequences accept it.
  void goals_adaptation_phase(const std::vector<Goal>& dynamic_goals,
                              const std::vector<std::vector<ObservationSequence>>& sequences);
  RecognitionResult inference_phase(const ObservationSequence& observation,
                                    const std::optional<Goal>& true_goal,
                                    double observability) const;

  const std::vector<GoalLibraryEntry>& library() const { return library_; }
  const std::string& domain_name() const { return domain_name_; }
  const std::string& env_name() const { return env_name_; }
  const std::vector<Goal>& base_goals() const { return base_goals_; }
  double domain_learning_seconds() const { return domain_learning_seconds_; }
  double adaptation_seconds() const { return adaptation_seconds_; }

 protected:
  // Hooks run with capability, phase order, and argument shapes already
  // checked. `score` must be pure: inference relies on it being re-entrant.
  virtual void learn_domain(const TrainConfig& config) = 0;
  virtual void adapt(const std::vector<Goal>& goals, const std::vector<TrainConfig>& configs) = 0;
  virtual void adapt_with_sequences(
      const std::vector<Goal>& goals,
      const std::vector<std::vector<ObservationSequence>>& sequences);
  virtual double score(const GoalLibraryEntry& entry, const ObservationSequence& obs) const = 0;

  // Trains a policy aimed at one goal: tabular on grids, and on continuous
  // envs a goal-conditioned policy taught the target alongside the base goals
  // and then pinned to the target. Consults policy_source and the artifact
  // cache first.
  agents::PolicyArtifact per_goal_policy(const Goal& goal, const TrainConfig& config) const;
  // Discrete states snap to the nearest in-range cell so noisy recordings
  // still address the learned table.
  std::vector<double> lookup_state(const ObservationStep& step) const;
  int observed_bin(const ObservationStep& step) const;
  uint64_t goal_seed(const Goal& goal) const;
  void require_same_dims(const ObservationSequence& obs) const;

  RecognizerOptions opts_;
  std::string domain_name_;
  std::string env_name_;
  std::vector<Goal> base_goals_;
  DomainTheory domain_;
  bool env_discrete_ = true;
  int n_action_bins_ = 0;
  bool domain_learned_ = false;
  std::optional<agents::PolicyArtifact> gc_policy_;
  std::vector<GoalLibraryEntry> library_;
  double domain_learning_seconds_ = 0.0;
  double adaptation_seconds_ = 0.0;
};

// ---------------------------------------------------------------------------
// Sequence embedding (metric-learning recognizers)
// ---------------------------------------------------------------------------

inline constexpr int kFeatureDim = 32;  // per-step random feature map output
inline constexpr int kPooledDim = 2 * kFeatureDim;
inline constexpr int kEmbedDim = 32;
inline constexpr double kEwmaLambda = 0.9;
inline constexpr double kContrastiveMargin = 1.0;
inline constexpr double kEmbedLearningRate = 0.01;
inline constexpr int kPairUpdates = 2000;
inline constexpr int kSequencesPerGoal = 5;

// Maps an observation sequence to a point whose distances separate goals.
// Per-step features are a fixed random tanh projection of the normalized
// (state, action) pair; the sequence pools them by a recency-weighted mean
// concatenated with the final step, and a trained linear projection turns
// the pooled vector into the embedding.
class SequenceEmbedder {
 public:
  SequenceEmbedder(const DomainTheory& domain, uint64_t seed);

  std::vector<double> pooled(const ObservationSequence& seq) const;
  std::vector<double> embed(const ObservationSequence& seq) const;

  // Contrastive fit: pairs from the same group pull together, pairs from
  // different groups push apart to the margin. Balanced pair sampling,
  // plain SGD on the projection.
  void fit(const std::vector<std::vector<ObservationSequence>>& groups, int pair_updates,
           uint64_t seed);

  static double distance(std::span<const double> a, std::span<const double> b);

  void save(const std::string& path) const;
  static std::optional<SequenceEmbedder> load(const std::string& path);

 private:
  SequenceEmbedder() = default;

  size_t in_dims_ = 0;
  std::vector<double> offset_, scale_;  // input normalization per dimension
  std::vector<double> w_, b_;           // random feature map
  std::vector<double> proj_;            // trained projection, kEmbedDim x kPooledDim
};

// ---------------------------------------------------------------------------
// The six algorithms
// ---------------------------------------------------------------------------

// Per-goal tabular Q policies, discrete envs only. Metrics: "kl" (default)
// compares the smoothed observed action distribution against the policy
// softmax; "utility" sums Q along the observation.
class Graql : public Recognizer {
 public:
  explicit Graql(RecognizerOptions opts = {});
  const char* name() const override { return "Graql"; }
  RecognizerCapability capability() const override;

 protected:
  void learn_domain(const TrainConfig& config) override;
  void adapt(const std::vector<Goal>& goals, const std::vector<TrainConfig>& configs) override;
  double score(const GoalLibraryEntry& entry, const ObservationSequence& obs) const override;
};

// Per-goal policies on any space. Metrics: "loglik" (default) is the mean
// per-step log-likelihood of observed actions; "zscore" normalizes the total
// log-likelihood against the uniform policy.
class Draco : public Recognizer {
 public:
  explicit Draco(RecognizerOptions opts = {});
  const char* name() const override { return "Draco"; }
  RecognizerCapability capability() const override;

 protected:
  void learn_domain(const TrainConfig& config) override;
  void adapt(const std::vector<Goal>& goals, const std::vector<TrainConfig>& configs) override;
  double score(const GoalLibraryEntry& entry, const ObservationSequence& obs) const override;
};

// One goal-conditioned policy learned up front; adaptation just conditions
// it on each announced goal, so new goals cost nothing.
class GCDraco : public Recognizer {
 public:
  explicit GCDraco(RecognizerOptions opts = {});
  const char* name() const override { return "GCDraco"; }
  RecognizerCapability capability() const override;

 protected:
  void learn_domain(const TrainConfig& config) override;
  void adapt(const std::vector<Goal>& goals, const std::vector<TrainConfig>& configs) override;
  double score(const GoalLibraryEntry& entry, const ObservationSequence& obs) const override;
};

inline constexpr double kCoverageRadius = 2.0;  // L2, goal-space units
inline constexpr int kFineTuneEpisodes = 200;

// GCDraco plus an adaptation strategy per goal: recall an entry adapted
// earlier, trust the GC policy zero-shot within the coverage radius of the
// trained goals, and otherwise fine-tune a dedicated policy.
class GCAura : public Recognizer {
 public:
  explicit GCAura(RecognizerOptions opts = {});
  const char* name() const override { return "GCAura"; }
  RecognizerCapability capability() const override;

 protected:
  void learn_domain(const TrainConfig& config) override;
  void adapt(const std::vector<Goal>& goals, const std::vector<TrainConfig>& configs) override;
  double score(const GoalLibraryEntry& entry, const ObservationSequence& obs) const override;

 private:
  // Every goal ever adapted, kept across library rebuilds so re-adaptation
  // recalls instead of repeating work. Fine-tuned policies also land in the
  // artifact cache, which recall falls back to across processes.
  std::vector<GoalLibraryEntry> memo_;
};

// Metric learning over demonstration sequences. Domain learning trains
// per-base-goal policies, generates example traces, and fits the embedder;
// adaptation embeds either provided sequences or traces of freshly trained
// policies.
class ExpertBasedGraml : public Recognizer {
 public:
  explicit ExpertBasedGraml(RecognizerOptions opts = {});
  const char* name() const override { return "ExpertBasedGraml"; }
  RecognizerCapability capability() const override;
  const std::optional<SequenceEmbedder>& embedder() const { return embedder_; }

 protected:
  void learn_domain(const TrainConfig& config) override;
  void adapt(const std::vector<Goal>& goals, const std::vector<TrainConfig>& configs) override;
  void adapt_with_sequences(
      const std::vector<Goal>& goals,
      const std::vector<std::vector<ObservationSequence>>& sequences) override;
  double score(const GoalLibraryEntry& entry, const ObservationSequence& obs) const override;

 private:
  friend class GCGraml;
  std::optional<SequenceEmbedder> embedder_;
};

// GRAML on a goal-conditioned policy: example sequences for any goal are
// self-generated by conditioning, so adaptation needs no demonstrations and
// no training.
class GCGraml : public Recognizer {
 public:
  explicit GCGraml(RecognizerOptions opts = {});
  const char* name() const override { return "GCGraml"; }
  RecognizerCapability capability() const override;
  const std::optional<SequenceEmbedder>& embedder() const { return embedder_; }

 protected:
  void learn_domain(const TrainConfig& config) override;
  void adapt(const std::vector<Goal>& goals, const std::vector<TrainConfig>& configs) override;
  double score(const GoalLibraryEntry& entry, const ObservationSequence& obs) const override;

 private:
  std::optional<SequenceEmbedder> embedder_;
};

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

const std::vector<std::string>& recognizer_names();
RecognizerCapability capability_of(const std::string& recognizer_name);
std::unique_ptr<Recognizer> make_recognizer(const std::string& recognizer_name,
                                            RecognizerOptions opts = {});

// Space compatibility and the GC requirement, conjoined. Throws on unknown
// recognizer or environment names.
bool eligible(const std::string& recognizer_name, const std::string& env_name);

}  // namespace odgr::recognizers
