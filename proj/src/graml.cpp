#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "odgr/envs.hpp"
#include "odgr/recognizers.hpp"
#include "odgr/traces.hpp"
#include "odgr/util.hpp"
#include "wire.hpp"

namespace odgr::recognizers {

namespace fs = std::filesystem;

namespace {

constexpr char kEmbMagic[8] = {'O', 'D', 'G', 'R', 'E', 'M', 'B', '1'};
constexpr uint32_t kEmbVersion = 1;

// Weight scales for the random feature map. The fan-in scaling keeps the
// pre-activation spread near one so tanh stays in its responsive range.
constexpr double kFeatureWeightGain = 2.0;
constexpr double kFeatureBiasScale = 0.5;

void append_normalization(const SpaceDesc& space, std::vector<double>& offset,
                          std::vector<double>& scale) {
  if (space_is_discrete(space)) {
    for (int d : std::get<DiscreteSpace>(space).dims) {
      offset.push_back(0.0);
      scale.push_back(d > 1 ? static_cast<double>(d - 1) : 1.0);
    }
  } else {
    const auto& box = std::get<BoxSpace>(space);
    for (size_t i = 0; i < box.low.size(); ++i) {
      offset.push_back(box.low[i]);
      double span = box.high[i] - box.low[i];
      scale.push_back(span > 0.0 ? span : 1.0);
    }
  }
}

std::vector<double> mean_of(const std::vector<std::vector<double>>& points) {
  std::vector<double> mean(points.front().size(), 0.0);
  for (const auto& p : points)
    for (size_t i = 0; i < mean.size(); ++i) mean[i] += p[i];
  for (auto& v : mean) v /= static_cast<double>(points.size());
  return mean;
}

}  // namespace

// ---------------------------------------------------------------------------
// SequenceEmbedder
// ---------------------------------------------------------------------------

SequenceEmbedder::SequenceEmbedder(const DomainTheory& domain, uint64_t seed) {
  append_normalization(domain.state_space, offset_, scale_);
  append_normalization(domain.action_space, offset_, scale_);
  in_dims_ = offset_.size();

  Rng rng(seed);
  w_.resize(static_cast<size_t>(kFeatureDim) * in_dims_);
  double w_scale = kFeatureWeightGain / std::sqrt(static_cast<double>(in_dims_));
  for (auto& v : w_) v = rng.normal(0.0, 1.0) * w_scale;
  b_.resize(kFeatureDim);
  for (auto& v : b_) v = rng.normal(0.0, 1.0) * kFeatureBiasScale;

  proj_.resize(static_cast<size_t>(kEmbedDim) * kPooledDim);
  double p_scale = 1.0 / std::sqrt(static_cast<double>(kPooledDim));
  for (auto& v : proj_) v = rng.normal(0.0, 1.0) * p_scale;
}

std::vector<double> SequenceEmbedder::pooled(const ObservationSequence& seq) const {
  if (seq.steps.empty()) throw Error("cannot embed an empty sequence");

  std::vector<double> x(in_dims_);
  std::vector<double> phi(kFeatureDim);
  std::vector<double> mean(kFeatureDim, 0.0);
  for (const auto& step : seq.steps) {
    if (step.state.size() + step.action.size() != in_dims_)
      throw Error("sequence dimensions do not match the embedder's domain");
    size_t j = 0;
    for (double v : step.state) x[j] = (v - offset_[j]) / scale_[j], ++j;
    for (double v : step.action) x[j] = (v - offset_[j]) / scale_[j], ++j;

    for (int k = 0; k < kFeatureDim; ++k) {
      double z = b_[static_cast<size_t>(k)];
      const double* row = w_.data() + static_cast<size_t>(k) * in_dims_;
      for (size_t l = 0; l < in_dims_; ++l) z += row[l] * x[l];
      phi[static_cast<size_t>(k)] = std::tanh(z);
    }
    for (int k = 0; k < kFeatureDim; ++k)
      mean[static_cast<size_t>(k)] =
          kEwmaLambda * mean[static_cast<size_t>(k)] + (1.0 - kEwmaLambda) * phi[static_cast<size_t>(k)];
  }

  mean.insert(mean.end(), phi.begin(), phi.end());
  return mean;
}

std::vector<double> SequenceEmbedder::embed(const ObservationSequence& seq) const {
  std::vector<double> p = pooled(seq);
  std::vector<double> e(kEmbedDim, 0.0);
  for (int k = 0; k < kEmbedDim; ++k) {
    const double* row = proj_.data() + static_cast<size_t>(k) * kPooledDim;
    double z = 0.0;
    for (int l = 0; l < kPooledDim; ++l) z += row[l] * p[static_cast<size_t>(l)];
    e[static_cast<size_t>(k)] = z;
  }
  return e;
}

void SequenceEmbedder::fit(const std::vector<std::vector<ObservationSequence>>& groups,
                           int pair_updates, uint64_t seed) {
  std::vector<std::vector<std::vector<double>>> pools(groups.size());
  for (size_t g = 0; g < groups.size(); ++g)
    for (const auto& seq : groups[g]) pools[g].push_back(pooled(seq));

  std::vector<size_t> same_groups;    // groups providing same-goal pairs
  std::vector<size_t> usable_groups;  // groups providing any sequence at all
  for (size_t g = 0; g < pools.size(); ++g) {
    if (pools[g].size() >= 2) same_groups.push_back(g);
    if (!pools[g].empty()) usable_groups.push_back(g);
  }
  bool can_same = !same_groups.empty();
  bool can_diff = usable_groups.size() >= 2;
  if (!can_same && !can_diff) return;

  Rng rng(seed);
  std::vector<double> e1(kEmbedDim), e2(kEmbedDim);
  for (int t = 0; t < pair_updates; ++t) {
    bool same = can_same && (t % 2 == 0 || !can_diff);

    const std::vector<double>* p1;
    const std::vector<double>* p2;
    if (same) {
      const auto& pool = pools[same_groups[rng.uniform_int(static_cast<int>(same_groups.size()))]];
      int i = rng.uniform_int(static_cast<int>(pool.size()));
      int j = rng.uniform_int(static_cast<int>(pool.size()) - 1);
      if (j >= i) ++j;
      p1 = &pool[static_cast<size_t>(i)];
      p2 = &pool[static_cast<size_t>(j)];
    } else {
      int a = rng.uniform_int(static_cast<int>(usable_groups.size()));
      int b = rng.uniform_int(static_cast<int>(usable_groups.size()) - 1);
      if (b >= a) ++b;
      const auto& ga = pools[usable_groups[static_cast<size_t>(a)]];
      const auto& gb = pools[usable_groups[static_cast<size_t>(b)]];
      p1 = &ga[static_cast<size_t>(rng.uniform_int(static_cast<int>(ga.size())))];
      p2 = &gb[static_cast<size_t>(rng.uniform_int(static_cast<int>(gb.size())))];
    }

    double d2 = 0.0;
    for (int k = 0; k < kEmbedDim; ++k) {
      const double* row = proj_.data() + static_cast<size_t>(k) * kPooledDim;
      double a = 0.0, b = 0.0;
      for (int l = 0; l < kPooledDim; ++l) {
        a += row[l] * (*p1)[static_cast<size_t>(l)];
        b += row[l] * (*p2)[static_cast<size_t>(l)];
      }
      e1[static_cast<size_t>(k)] = a;
      e2[static_cast<size_t>(k)] = b;
      d2 += (a - b) * (a - b);
    }
    double d = std::sqrt(d2);

    // Same pairs descend on d^2; different pairs on max(0, margin - d)^2.
    double coeff;
    if (same) {
      coeff = 2.0;
    } else {
      if (d >= kContrastiveMargin || d < 1e-9) continue;
      coeff = -2.0 * (kContrastiveMargin - d) / d;
    }
    for (int k = 0; k < kEmbedDim; ++k) {
      double gk = coeff * (e1[static_cast<size_t>(k)] - e2[static_cast<size_t>(k)]);
      if (gk == 0.0) continue;
      double* row = proj_.data() + static_cast<size_t>(k) * kPooledDim;
      for (int l = 0; l < kPooledDim; ++l)
        row[l] -= kEmbedLearningRate * gk *
                  ((*p1)[static_cast<size_t>(l)] - (*p2)[static_cast<size_t>(l)]);
    }
  }
}

double SequenceEmbedder::distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("embedding size mismatch");
  double d2 = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d2);
}

void SequenceEmbedder::save(const std::string& path) const {
  wire::Writer payload;
  payload.u64(in_dims_);
  payload.doubles(offset_);
  payload.doubles(scale_);
  payload.doubles(w_);
  payload.doubles(b_);
  payload.doubles(proj_);

  wire::Writer w;
  w.raw(kEmbMagic, sizeof(kEmbMagic));
  w.u32(kEmbVersion);
  w.u32(crc32(payload.buf.data(), payload.buf.size()));
  w.buf += payload.buf;

  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write embedder: " + tmp.string());
    out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw Error("short write: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::optional<SequenceEmbedder> SequenceEmbedder::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  wire::Reader r{bytes.data(), bytes.data() + bytes.size(), "embedder"};
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kEmbMagic, sizeof(kEmbMagic)) != 0)
    throw ChecksumError("embedder has wrong magic: " + path);
  uint32_t version = r.u32();
  if (version != kEmbVersion)
    throw Error("unsupported embedder version " + std::to_string(version) + ": " + path);
  uint32_t stored_crc = r.u32();
  if (crc32(r.p, static_cast<size_t>(r.end - r.p)) != stored_crc)
    throw ChecksumError("embedder checksum mismatch: " + path);

  SequenceEmbedder e;
  e.in_dims_ = r.u64();
  e.offset_ = r.doubles();
  e.scale_ = r.doubles();
  e.w_ = r.doubles();
  e.b_ = r.doubles();
  e.proj_ = r.doubles();
  if (e.offset_.size() != e.in_dims_ || e.scale_.size() != e.in_dims_ ||
      e.w_.size() != static_cast<size_t>(kFeatureDim) * e.in_dims_ ||
      e.b_.size() != static_cast<size_t>(kFeatureDim) ||
      e.proj_.size() != static_cast<size_t>(kEmbedDim) * kPooledDim)
    throw ChecksumError("embedder field sizes are inconsistent: " + path);
  return e;
}

// ---------------------------------------------------------------------------
// Shared GRAML plumbing
// ---------------------------------------------------------------------------

namespace {

// Example traces come from the softened policy with optimalism injections
// and the standard recording noise, so the embedder trains on the same
// texture it will see at inference.
std::vector<ObservationSequence> generate_group(const agents::PolicyArtifact& artifact,
                                                const std::string& env_name, const Goal& goal,
                                                int count, uint64_t seed) {
  auto env = envs::make_env(env_name, goal);
  std::vector<ObservationSequence> group;
  group.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i)
    group.push_back(traces::generate_observation(
        artifact, *env, traces::ActionSelection::stochastic_amplified, true, NoiseProfile{},
        derive_seed(seed, {"example", goal.path_str(), std::to_string(i)})));
  return group;
}

std::string embedder_path(const std::string& cache_root, const std::string& domain_name,
                          const std::string& env_name, const std::string& tag, long timesteps,
                          uint64_t seed) {
  fs::path p = fs::path(cache_root) / "embedders" / domain_name / env_name;
  std::string file = tag + "_" + std::to_string(timesteps);
  if (seed != 0) file += "_seed" + std::to_string(seed);
  return (p / (file + ".bin")).string();
}

}  // namespace

// ---------------------------------------------------------------------------
// ExpertBasedGraml
// ---------------------------------------------------------------------------

ExpertBasedGraml::ExpertBasedGraml(RecognizerOptions opts) : Recognizer(std::move(opts)) {
  if (!opts_.metric.empty()) throw Error("ExpertBasedGraml scores by embedding distance only");
}

RecognizerCapability ExpertBasedGraml::capability() const {
  return {.supports_discrete = true,
          .supports_continuous = true,
          .adapts_to_new_goals = true,
          .requires_gc_env = false};
}

void ExpertBasedGraml::learn_domain(const TrainConfig& config) {
  embedder_.reset();
  if (config.timesteps <= 0) return;  // metric model is fit at adaptation instead
  if (base_goals_.empty())
    throw Error(std::string(name()) + " needs base goals to fit the metric model");

  std::string path;
  if (!opts_.cache_root.empty()) {
    path = embedder_path(opts_.cache_root, domain_name_, env_name_, "graml", config.timesteps,
                         opts_.seed);
    if (auto cached = SequenceEmbedder::load(path)) {
      embedder_ = std::move(*cached);
      return;
    }
  }

  std::vector<std::vector<ObservationSequence>> groups;
  for (const auto& goal : base_goals_) {
    auto policy = per_goal_policy(goal, config);
    groups.push_back(
        generate_group(policy, env_name_, goal, kSequencesPerGoal, goal_seed(goal)));
  }
  SequenceEmbedder fitted(domain_, derive_seed(opts_.seed, {"embed"}));
  fitted.fit(groups, kPairUpdates, derive_seed(opts_.seed, {"fit"}));
  embedder_ = std::move(fitted);
  if (!path.empty()) embedder_->save(path);
}

void ExpertBasedGraml::adapt(const std::vector<Goal>& goals,
                             const std::vector<TrainConfig>& configs) {
  std::vector<GoalLibraryEntry> fresh;
  std::vector<std::vector<ObservationSequence>> groups;
  for (size_t i = 0; i < goals.size(); ++i) {
    GoalLibraryEntry entry;
    entry.goal = goals[i];
    entry.provenance = Provenance::trained;
    entry.policy = per_goal_policy(goals[i], configs[i]);
    entry.train_steps = entry.policy->timesteps;
    entry.sequences =
        generate_group(*entry.policy, env_name_, goals[i], kSequencesPerGoal, goal_seed(goals[i]));
    groups.push_back(entry.sequences);
    fresh.push_back(std::move(entry));
  }

  if (!embedder_) {
    SequenceEmbedder fitted(domain_, derive_seed(opts_.seed, {"embed"}));
    fitted.fit(groups, kPairUpdates, derive_seed(opts_.seed, {"fit"}));
    embedder_ = std::move(fitted);
  }
  for (auto& entry : fresh) {
    std::vector<std::vector<double>> points;
    for (const auto& seq : entry.sequences) points.push_back(embedder_->embed(seq));
    entry.centroid = mean_of(points);
  }
  library_ = std::move(fresh);
}

void ExpertBasedGraml::adapt_with_sequences(
    const std::vector<Goal>& goals, const std::vector<std::vector<ObservationSequence>>& sequences) {
  for (size_t i = 0; i < goals.size(); ++i) {
    if (sequences[i].empty())
      throw Error("goal " + goals[i].str() + " needs at least one example sequence");
    for (const auto& seq : sequences[i]) require_same_dims(seq);
  }

  if (!embedder_) {
    SequenceEmbedder fitted(domain_, derive_seed(opts_.seed, {"embed"}));
    fitted.fit(sequences, kPairUpdates, derive_seed(opts_.seed, {"fit"}));
    embedder_ = std::move(fitted);
  }

  std::vector<GoalLibraryEntry> fresh;
  for (size_t i = 0; i < goals.size(); ++i) {
    GoalLibraryEntry entry;
    entry.goal = goals[i];
    entry.provenance = Provenance::provided_sequences;
    entry.sequences = sequences[i];
    std::vector<std::vector<double>> points;
    for (const auto& seq : entry.sequences) points.push_back(embedder_->embed(seq));
    entry.centroid = mean_of(points);
    fresh.push_back(std::move(entry));
  }
  library_ = std::move(fresh);
}

double ExpertBasedGraml::score(const GoalLibraryEntry& entry,
                               const ObservationSequence& obs) const {
  if (!embedder_) throw Error("embedder was never fit");
  return -SequenceEmbedder::distance(embedder_->embed(obs), entry.centroid);
}

// ---------------------------------------------------------------------------
// GCGraml
// ---------------------------------------------------------------------------

GCGraml::GCGraml(RecognizerOptions opts) : Recognizer(std::move(opts)) {
  if (!opts_.metric.empty()) throw Error("GCGraml scores by embedding distance only");
}

RecognizerCapability GCGraml::capability() const {
  return {.supports_discrete = true,
          .supports_continuous = true,
          .adapts_to_new_goals = true,
          .requires_gc_env = true};
}

void GCGraml::learn_domain(const TrainConfig& config) {
  embedder_.reset();
  if (base_goals_.empty())
    throw Error(std::string(name()) + " needs base goals for domain learning");
  if (config.timesteps <= 0)
    throw Error(std::string(name()) + " needs a domain learning budget");

  std::string algo = config.algorithm.empty() ? "TILEQ" : config.algorithm;
  std::string policy_file;
  if (!opts_.cache_root.empty()) {
    policy_file = agents::artifact_path(opts_.cache_root, domain_name_, env_name_, "gc", algo,
                                        config.timesteps, opts_.seed);
    if (auto cached = agents::load_artifact(policy_file); cached && cached->trained)
      gc_policy_ = std::move(*cached);
  }
  if (!gc_policy_) {
    gc_policy_ = agents::train_gc_q(env_name_, base_goals_, config.timesteps,
                                    derive_seed(opts_.seed, {"domain"}));
    if (!policy_file.empty()) agents::save_artifact(*gc_policy_, policy_file);
  }

  std::string emb_file;
  if (!opts_.cache_root.empty()) {
    emb_file = embedder_path(opts_.cache_root, domain_name_, env_name_, "gcgraml",
                             config.timesteps, opts_.seed);
    if (auto cached = SequenceEmbedder::load(emb_file)) {
      embedder_ = std::move(*cached);
      return;
    }
  }

  std::vector<std::vector<ObservationSequence>> groups;
  for (const auto& goal : base_goals_)
    groups.push_back(
        generate_group(*gc_policy_, env_name_, goal, kSequencesPerGoal, goal_seed(goal)));
  SequenceEmbedder fitted(domain_, derive_seed(opts_.seed, {"embed"}));
  fitted.fit(groups, kPairUpdates, derive_seed(opts_.seed, {"fit"}));
  embedder_ = std::move(fitted);
  if (!emb_file.empty()) embedder_->save(emb_file);
}

void GCGraml::adapt(const std::vector<Goal>& goals, const std::vector<TrainConfig>&) {
  // conditioning the shared policy stands in for per-goal demonstrations
  std::vector<GoalLibraryEntry> fresh;
  for (const auto& goal : goals) {
    GoalLibraryEntry entry;
    entry.goal = goal;
    entry.provenance = Provenance::zero_shot;
    entry.sequences =
        generate_group(*gc_policy_, env_name_, goal, kSequencesPerGoal, goal_seed(goal));
    std::vector<std::vector<double>> points;
    for (const auto& seq : entry.sequences) points.push_back(embedder_->embed(seq));
    entry.centroid = mean_of(points);
    fresh.push_back(std::move(entry));
  }
  library_ = std::move(fresh);
}

double GCGraml::score(const GoalLibraryEntry& entry, const ObservationSequence& obs) const {
  if (!embedder_) throw Error("embedder was never fit");
  return -SequenceEmbedder::distance(embedder_->embed(obs), entry.centroid);
}

}  // namespace odgr::recognizers
