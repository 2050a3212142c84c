#pragma once

#include <optional>
#include <string>

#include "odgr/agents.hpp"
#include "odgr/core.hpp"
#include "odgr/envs.hpp"

namespace odgr::traces {

enum class ActionSelection { greedy, stochastic_amplified };

// stochastic_amplified samples from softmax(beta * Q); large beta approaches
// the greedy choice while keeping occasional suboptimal moves.
constexpr double kAmplifiedBeta = 5.0;
// random_optimalism replaces this fraction of actions with uniform picks.
constexpr double kRandomOptimalismRate = 0.1;

// Rolls the policy in `env` to termination or truncation and records the
// visited states and chosen actions. `env` must already hold the goal the
// artifact is being observed toward. Noise perturbs only the recorded
// values, never the simulation: continuous states and actions get Gaussian
// noise, grid states only on the position components, discrete actions never.
// Throws Error for an untrained artifact.
ObservationSequence generate_observation(const agents::PolicyArtifact& artifact, envs::Env& env,
                                         ActionSelection selection, bool random_optimalism,
                                         std::optional<NoiseProfile> noise, uint64_t seed);

// k steps of `seq` in original order: the prefix when consecutive, otherwise
// a uniform without-replacement sample emitted by increasing index.
// source_indices map through the input's own provenance so degradations
// compose. Throws Error when k is outside [1, len].
ObservationSequence random_subset_with_order(const ObservationSequence& seq, int k,
                                             bool is_consecutive, uint64_t seed);

// k = max(1, floor(level * len)), then random_subset_with_order. level must
// lie in (0, 1].
ObservationSequence truncate_by_observability(const ObservationSequence& seq, double level,
                                              TraceType type, uint64_t seed);

// One step per line: `t=<source index> s=<state tuple> a=<action>`.
std::string dump_text(const ObservationSequence& seq);

void save_sequence(const ObservationSequence& seq, const std::string& path);
// nullopt when the file does not exist; ChecksumError on damage.
std::optional<ObservationSequence> load_sequence(const std::string& path);

}  // namespace odgr::traces
