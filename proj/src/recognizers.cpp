#include "odgr/recognizers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "odgr/envs.hpp"
#include "odgr/traces.hpp"
#include "odgr/util.hpp"

namespace odgr::recognizers {

namespace {

constexpr double kKlSmoothing = 0.01;
// Floor for probabilities entering a log; softmax can underflow to exactly
// zero when value gaps are huge.
constexpr double kTinyProb = 1e-300;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::span<const double> goal_span(const agents::PolicyArtifact& art, const Goal& goal) {
  if (art.goal_conditioned()) return goal.v;
  return {};
}

// Mean log-likelihood of the observed actions under the entry's policy, or
// its z-score against the uniform policy over the same length.
double likelihood_score(const agents::PolicyArtifact& art, const Goal& goal,
                        const ObservationSequence& obs, const std::string& metric,
                        double temperature, int n_bins,
                        const std::function<std::vector<double>(const ObservationStep&)>& state_of,
                        const std::function<int(const ObservationStep&)>& bin_of) {
  double sum = 0.0;
  for (const auto& step : obs.steps) {
    auto pi = agents::softmax_policy(art, state_of(step), goal_span(art, goal), temperature);
    sum += std::log(std::max(pi[static_cast<size_t>(bin_of(step))], kTinyProb));
  }
  double len = static_cast<double>(obs.size());
  if (metric == "zscore")
    return (sum - len * std::log(1.0 / static_cast<double>(n_bins))) / std::sqrt(len);
  return sum / len;
}

}  // namespace

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::trained: return "trained";
    case Provenance::zero_shot: return "zero-shot";
    case Provenance::recalled: return "recalled";
    case Provenance::fine_tuned: return "fine-tuned";
    case Provenance::provided_sequences: return "provided-sequences";
  }
  throw Error("unknown provenance tag");
}

// ---------------------------------------------------------------------------
// Phase driver
// ---------------------------------------------------------------------------

Recognizer::Recognizer(RecognizerOptions opts) : opts_(std::move(opts)) {}
Recognizer::~Recognizer() = default;

void Recognizer::domain_learning_phase(const std::string& domain_name,
                                       const std::string& env_name,
                                       std::optional<std::vector<Goal>> base_goals,
                                       const TrainConfig& config) {
  auto start = std::chrono::steady_clock::now();
  if (!envs::env_registered(env_name)) throw Error("unknown environment: " + env_name);

  auto cap = capability();
  bool discrete = envs::env_discrete(env_name);
  if (discrete && !cap.supports_discrete)
    throw CapabilityError(std::string(name()) + " does not support discrete environments: " +
                          env_name);
  if (!discrete && !cap.supports_continuous)
    throw CapabilityError(std::string(name()) + " does not support continuous environments: " +
                          env_name);
  if (cap.requires_gc_env && !envs::env_gc_adaptable(env_name))
    throw CapabilityError(std::string(name()) + " requires a goal-conditioned adaptable " +
                          "environment and " + env_name + " is not");

  domain_name_ = domain_name;
  env_name_ = env_name;
  base_goals_ = base_goals.value_or(std::vector<Goal>{});
  {
    auto probe = envs::make_env(env_name);
    domain_ = probe->domain();
    env_discrete_ = probe->discrete();
    n_action_bins_ = env_discrete_ ? probe->action_count() : agents::TileCodedQ::kActionBins;
  }
  library_.clear();
  gc_policy_.reset();

  learn_domain(config);
  domain_learned_ = true;
  domain_learning_seconds_ = seconds_since(start);
}

void Recognizer::goals_adaptation_phase(const std::vector<Goal>& dynamic_goals,
                                        const std::vector<TrainConfig>& train_configs) {
  auto start = std::chrono::steady_clock::now();
  if (!domain_learned_) throw Error("domain learning must run before goals adaptation");
  if (dynamic_goals.empty()) throw Error("goals adaptation needs at least one goal");

  std::vector<TrainConfig> configs;
  if (train_configs.size() == dynamic_goals.size()) {
    configs = train_configs;
  } else if (train_configs.size() == 1) {
    configs.assign(dynamic_goals.size(), train_configs[0]);
  } else if (train_configs.empty()) {
    configs.assign(dynamic_goals.size(), TrainConfig{});
  } else {
    throw Error("train config count must be 1 or match the goal count");
  }

  adapt(dynamic_goals, configs);
  adaptation_seconds_ = seconds_since(start);
}

void Recognizer::goals_adaptation_phase(
    const std::vector<Goal>& dynamic_goals,
    const std::vector<std::vector<ObservationSequence>>& sequences) {
  auto start = std::chrono::steady_clock::now();
  if (!domain_learned_) throw Error("domain learning must run before goals adaptation");
  if (dynamic_goals.empty()) throw Error("goals adaptation needs at least one goal");
  if (sequences.size() != dynamic_goals.size())
    throw Error("example sequence groups must match the goal count");

  adapt_with_sequences(dynamic_goals, sequences);
  adaptation_seconds_ = seconds_since(start);
}

void Recognizer::adapt_with_sequences(const std::vector<Goal>&,
                                      const std::vector<std::vector<ObservationSequence>>&) {
  throw Error(std::string(name()) + " does not adapt from example sequences");
}

RecognitionResult Recognizer::inference_phase(const ObservationSequence& observation,
                                              const std::optional<Goal>& true_goal,
                                              double observability) const {
  auto start = std::chrono::steady_clock::now();
  if (library_.empty()) throw Error("goal library is empty; run goals adaptation first");
  if (observation.steps.empty()) throw Error("empty observation");
  if (!(observability > 0.0 && observability <= 1.0))
    throw Error("observability must lie in (0, 1]");
  require_same_dims(observation);

  RecognitionResult result;
  result.scores.reserve(library_.size());
  for (const auto& entry : library_)
    result.scores.push_back({entry.goal, score(entry, observation)});
  result.predicted_goal = argmax_with_tiebreak(result.scores);
  if (true_goal) result.rank_of_true = rank_of(result.scores, *true_goal);
  result.inference_seconds = seconds_since(start);
  return result;
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

uint64_t Recognizer::goal_seed(const Goal& goal) const {
  return derive_seed(opts_.seed, {"adapt", goal.path_str()});
}

agents::PolicyArtifact Recognizer::per_goal_policy(const Goal& goal,
                                                   const TrainConfig& config) const {
  if (opts_.policy_source)
    if (auto provided = opts_.policy_source(goal, config)) return *provided;

  if (config.timesteps <= 0)
    throw Error(std::string(name()) + ": a per-goal training budget is required for goal " +
                goal.str());

  std::string algo = config.algorithm.empty() ? (env_discrete_ ? "QLEARNING" : "TILEQ")
                                              : config.algorithm;
  std::string path;
  if (!opts_.cache_root.empty()) {
    path = agents::artifact_path(opts_.cache_root, domain_name_, env_name_, goal.path_str(), algo,
                                 config.timesteps, opts_.seed);
    if (auto cached = agents::load_artifact(path); cached && cached->trained) return *cached;
  }

  agents::PolicyArtifact art;
  if (env_discrete_) {
    art = agents::train_q(env_name_, goal, config.timesteps, goal_seed(goal));
  } else {
    // The target learns alongside the base goals: goal traversals share
    // structure, and a lone faraway goal is rarely reachable by undirected
    // exploration.
    std::vector<Goal> curriculum{goal};
    for (const auto& base : base_goals_)
      if (!(base == goal)) curriculum.push_back(base);
    art = agents::train_gc_q(env_name_, curriculum, config.timesteps, goal_seed(goal));
    art.goal = goal;
  }
  if (!path.empty()) agents::save_artifact(art, path);
  return art;
}

std::vector<double> Recognizer::lookup_state(const ObservationStep& step) const {
  if (!env_discrete_) return step.state;
  const auto& dims = std::get<DiscreteSpace>(domain_.state_space).dims;
  std::vector<double> out(step.state.size());
  for (size_t i = 0; i < step.state.size(); ++i) {
    long v = std::lround(step.state[i]);
    out[i] = static_cast<double>(std::clamp(v, 0L, static_cast<long>(dims[i] - 1)));
  }
  return out;
}

int Recognizer::observed_bin(const ObservationStep& step) const {
  if (step.action.empty()) throw Error("observation step has no action");
  if (env_discrete_) {
    long a = std::lround(step.action[0]);
    return static_cast<int>(std::clamp(a, 0L, static_cast<long>(n_action_bins_ - 1)));
  }
  return agents::TileCodedQ::action_bin(step.action);
}

void Recognizer::require_same_dims(const ObservationSequence& obs) const {
  size_t want = static_cast<size_t>(space_dims(domain_.state_space));
  for (const auto& step : obs.steps)
    if (step.state.size() != want)
      throw Error("state dimension mismatch: expected " + std::to_string(want) + ", got " +
                  std::to_string(step.state.size()));
}

// ---------------------------------------------------------------------------
// Graql
// ---------------------------------------------------------------------------

Graql::Graql(RecognizerOptions opts) : Recognizer(std::move(opts)) {
  if (opts_.metric.empty()) opts_.metric = "kl";
  if (opts_.metric != "kl" && opts_.metric != "utility")
    throw Error("Graql: unknown metric " + opts_.metric);
}

RecognizerCapability Graql::capability() const {
  return {.supports_discrete = true,
          .supports_continuous = false,
          .adapts_to_new_goals = false,
          .requires_gc_env = false};
}

void Graql::learn_domain(const TrainConfig&) {
  // nothing to learn up front; every goal gets its own policy at adaptation
}

void Graql::adapt(const std::vector<Goal>& goals, const std::vector<TrainConfig>& configs) {
  std::vector<GoalLibraryEntry> fresh;
  for (size_t i = 0; i < goals.size(); ++i) {
    GoalLibraryEntry entry;
    entry.goal = goals[i];
    entry.provenance = Provenance::trained;
    entry.policy = per_goal_policy(goals[i], configs[i]);
    entry.train_steps = entry.policy->timesteps;
    fresh.push_back(std::move(entry));
  }
  library_ = std::move(fresh);
}

double Graql::score(const GoalLibraryEntry& entry, const ObservationSequence& obs) const {
  const auto& art = *entry.policy;
  const int n = n_action_bins_;
  if (opts_.metric == "utility") {
    double total = 0.0;
    for (const auto& step : obs.steps) {
      auto q = art.q_values(lookup_state(step));
      if (q) total += (*q)[static_cast<size_t>(observed_bin(step))];
    }
    return total;
  }
  // Observed actions become near-one-hot distributions; the smoothing keeps
  // the divergence finite when the policy rules an action out entirely.
  double total = 0.0;
  for (const auto& step : obs.steps) {
    auto pi = agents::softmax_policy(art, lookup_state(step), {}, opts_.temperature);
    int a = observed_bin(step);
    double kl = 0.0;
    for (int i = 0; i < n; ++i) {
      double p = kKlSmoothing / n + (i == a ? 1.0 - kKlSmoothing : 0.0);
      kl += p * std::log(p / std::max(pi[static_cast<size_t>(i)], kTinyProb));
    }
    total += kl;
  }
  return -total / static_cast<double>(obs.size());
}

// ---------------------------------------------------------------------------
// Draco
// ---------------------------------------------------------------------------

Draco::Draco(RecognizerOptions opts) : Recognizer(std::move(opts)) {
  if (opts_.metric.empty()) opts_.metric = "loglik";
  if (opts_.metric != "loglik" && opts_.metric != "zscore")
    throw Error("Draco: unknown metric " + opts_.metric);
}

RecognizerCapability Draco::capability() const {
  return {.supports_discrete = true,
          .supports_continuous = true,
          .adapts_to_new_goals = false,
          .requires_gc_env = false};
}

void Draco::learn_domain(const TrainConfig&) {
  // per-goal policies are built at adaptation, once goals are known
}

void Draco::adapt(const std::vector<Goal>& goals, const std::vector<TrainConfig>& configs) {
  std::vector<GoalLibraryEntry> fresh;
  for (size_t i = 0; i < goals.size(); ++i) {
    GoalLibraryEntry entry;
    entry.goal = goals[i];
    entry.provenance = Provenance::trained;
    entry.policy = per_goal_policy(goals[i], configs[i]);
    entry.train_steps = entry.policy->timesteps;
    fresh.push_back(std::move(entry));
  }
  library_ = std::move(fresh);
}

double Draco::score(const GoalLibraryEntry& entry, const ObservationSequence& obs) const {
  return likelihood_score(
      *entry.policy, entry.goal, obs, opts_.metric, opts_.temperature, n_action_bins_,
      [this](const ObservationStep& s) { return lookup_state(s); },
      [this](const ObservationStep& s) { return observed_bin(s); });
}

// ---------------------------------------------------------------------------
// GCDraco
// ---------------------------------------------------------------------------

GCDraco::GCDraco(RecognizerOptions opts) : Recognizer(std::move(opts)) {
  if (opts_.metric.empty()) opts_.metric = "loglik";
  if (opts_.metric != "loglik" && opts_.metric != "zscore")
    throw Error("GCDraco: unknown metric " + opts_.metric);
}

RecognizerCapability GCDraco::capability() const {
  return {.supports_discrete = true,
          .supports_continuous = true,
          .adapts_to_new_goals = true,
          .requires_gc_env = true};
}

void GCDraco::learn_domain(const TrainConfig& config) {
  if (base_goals_.empty())
    throw Error(std::string(name()) + " needs base goals for domain learning");
  if (config.timesteps <= 0)
    throw Error(std::string(name()) + " needs a domain learning budget");

  std::string algo = config.algorithm.empty() ? "TILEQ" : config.algorithm;
  std::string path;
  if (!opts_.cache_root.empty()) {
    path = agents::artifact_path(opts_.cache_root, domain_name_, env_name_, "gc", algo,
                                 config.timesteps, opts_.seed);
    if (auto cached = agents::load_artifact(path); cached && cached->trained) {
      gc_policy_ = std::move(*cached);
      return;
    }
  }
  gc_policy_ = agents::train_gc_q(env_name_, base_goals_, config.timesteps,
                                  derive_seed(opts_.seed, {"domain"}));
  if (!path.empty()) agents::save_artifact(*gc_policy_, path);
}

void GCDraco::adapt(const std::vector<Goal>& goals, const std::vector<TrainConfig>&) {
  // conditioning is free: entries carry no policy and score through the
  // shared goal-conditioned one
  std::vector<GoalLibraryEntry> fresh;
  for (const auto& goal : goals) {
    GoalLibraryEntry entry;
    entry.goal = goal;
    entry.provenance = Provenance::zero_shot;
    fresh.push_back(std::move(entry));
  }
  library_ = std::move(fresh);
}

double GCDraco::score(const GoalLibraryEntry& entry, const ObservationSequence& obs) const {
  return likelihood_score(
      *gc_policy_, entry.goal, obs, opts_.metric, opts_.temperature, n_action_bins_,
      [this](const ObservationStep& s) { return lookup_state(s); },
      [this](const ObservationStep& s) { return observed_bin(s); });
}

// ---------------------------------------------------------------------------
// GCAura
// ---------------------------------------------------------------------------

GCAura::GCAura(RecognizerOptions opts) : Recognizer(std::move(opts)) {
  if (opts_.metric.empty()) opts_.metric = "loglik";
  if (opts_.metric != "loglik" && opts_.metric != "zscore")
    throw Error("GCAura: unknown metric " + opts_.metric);
}

RecognizerCapability GCAura::capability() const {
  return {.supports_discrete = true,
          .supports_continuous = true,
          .adapts_to_new_goals = true,
          .requires_gc_env = true};
}

void GCAura::learn_domain(const TrainConfig& config) {
  memo_.clear();
  if (base_goals_.empty())
    throw Error(std::string(name()) + " needs base goals for domain learning");
  if (config.timesteps <= 0)
    throw Error(std::string(name()) + " needs a domain learning budget");

  std::string algo = config.algorithm.empty() ? "TILEQ" : config.algorithm;
  std::string path;
  if (!opts_.cache_root.empty()) {
    path = agents::artifact_path(opts_.cache_root, domain_name_, env_name_, "gc", algo,
                                 config.timesteps, opts_.seed);
    if (auto cached = agents::load_artifact(path); cached && cached->trained) {
      gc_policy_ = std::move(*cached);
      return;
    }
  }
  gc_policy_ = agents::train_gc_q(env_name_, base_goals_, config.timesteps,
                                  derive_seed(opts_.seed, {"domain"}));
  if (!path.empty()) agents::save_artifact(*gc_policy_, path);
}

void GCAura::adapt(const std::vector<Goal>& goals, const std::vector<TrainConfig>&) {
  // Strategy per goal, in precedence order: recall a goal adapted before
  // (memo, then the artifact cache), zero-shot inside the trained coverage
  // radius, otherwise fine-tune.
  std::vector<GoalLibraryEntry> fresh;
  for (const auto& goal : goals) {
    std::string ft_path;
    if (!opts_.cache_root.empty())
      ft_path = agents::artifact_path(opts_.cache_root, domain_name_, env_name_, goal.path_str(),
                                      "TILEQ-FT", kFineTuneEpisodes, opts_.seed);

    auto prior = std::find_if(memo_.begin(), memo_.end(),
                              [&](const GoalLibraryEntry& e) { return e.goal == goal; });
    if (prior != memo_.end()) {
      GoalLibraryEntry entry = *prior;
      entry.provenance = Provenance::recalled;
      entry.train_steps = 0;
      fresh.push_back(std::move(entry));
      continue;
    }
    if (!ft_path.empty()) {
      if (auto cached = agents::load_artifact(ft_path); cached && cached->trained) {
        GoalLibraryEntry entry;
        entry.goal = goal;
        entry.provenance = Provenance::recalled;
        entry.policy = std::move(*cached);
        fresh.push_back(std::move(entry));
        continue;
      }
    }

    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& base : base_goals_) {
      double d2 = 0.0;
      for (size_t i = 0; i < std::min(base.v.size(), goal.v.size()); ++i)
        d2 += (base.v[i] - goal.v[i]) * (base.v[i] - goal.v[i]);
      nearest = std::min(nearest, std::sqrt(d2));
    }

    GoalLibraryEntry entry;
    entry.goal = goal;
    if (nearest <= kCoverageRadius) {
      entry.provenance = Provenance::zero_shot;
    } else {
      entry.provenance = Provenance::fine_tuned;
      entry.policy = agents::fine_tune(*gc_policy_, goal, kFineTuneEpisodes, goal_seed(goal));
      entry.train_steps = static_cast<long>(kFineTuneEpisodes) *
                          envs::make_env(env_name_)->max_steps();
      if (!ft_path.empty()) agents::save_artifact(*entry.policy, ft_path);
    }
    fresh.push_back(std::move(entry));
  }

  for (const auto& entry : fresh) {
    bool known = std::any_of(memo_.begin(), memo_.end(),
                             [&](const GoalLibraryEntry& e) { return e.goal == entry.goal; });
    if (!known) memo_.push_back(entry);
  }
  library_ = std::move(fresh);
}

double GCAura::score(const GoalLibraryEntry& entry, const ObservationSequence& obs) const {
  const agents::PolicyArtifact& art = entry.policy ? *entry.policy : *gc_policy_;
  return likelihood_score(
      art, entry.goal, obs, opts_.metric, opts_.temperature, n_action_bins_,
      [this](const ObservationStep& s) { return lookup_state(s); },
      [this](const ObservationStep& s) { return observed_bin(s); });
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

const std::vector<std::string>& recognizer_names() {
  static const std::vector<std::string> names = {"Graql",  "Draco",            "GCDraco",
                                                 "GCAura", "ExpertBasedGraml", "GCGraml"};
  return names;
}

RecognizerCapability capability_of(const std::string& recognizer_name) {
  return make_recognizer(recognizer_name)->capability();
}

std::unique_ptr<Recognizer> make_recognizer(const std::string& recognizer_name,
                                            RecognizerOptions opts) {
  if (recognizer_name == "Graql") return std::make_unique<Graql>(std::move(opts));
  if (recognizer_name == "Draco") return std::make_unique<Draco>(std::move(opts));
  if (recognizer_name == "GCDraco") return std::make_unique<GCDraco>(std::move(opts));
  if (recognizer_name == "GCAura") return std::make_unique<GCAura>(std::move(opts));
  if (recognizer_name == "ExpertBasedGraml")
    return std::make_unique<ExpertBasedGraml>(std::move(opts));
  if (recognizer_name == "GCGraml") return std::make_unique<GCGraml>(std::move(opts));
  throw Error("unknown recognizer: " + recognizer_name);
}

bool eligible(const std::string& recognizer_name, const std::string& env_name) {
  auto cap = capability_of(recognizer_name);
  if (!envs::env_registered(env_name)) throw Error("unknown environment: " + env_name);
  bool discrete = envs::env_discrete(env_name);
  if (discrete && !cap.supports_discrete) return false;
  if (!discrete && !cap.supports_continuous) return false;
  if (cap.requires_gc_env && !envs::env_gc_adaptable(env_name)) return false;
  return true;
}

}  // namespace odgr::recognizers
