#include "odgr/core.hpp"

#include <cmath>

#include "odgr/util.hpp"

namespace odgr {

int space_dims(const SpaceDesc& space) {
  if (const auto* d = std::get_if<DiscreteSpace>(&space)) return static_cast<int>(d->dims.size());
  return static_cast<int>(std::get<BoxSpace>(space).low.size());
}

bool space_is_discrete(const SpaceDesc& space) {
  return std::holds_alternative<DiscreteSpace>(space);
}

bool contains(const SpaceDesc& space, std::span<const double> point) {
  if (static_cast<int>(point.size()) != space_dims(space)) {
    throw Error("contains: point has " + std::to_string(point.size()) + " dims, space has " +
                std::to_string(space_dims(space)));
  }
  if (const auto* d = std::get_if<DiscreteSpace>(&space)) {
    for (size_t i = 0; i < point.size(); ++i) {
      double x = point[i];
      if (x != std::floor(x)) return false;
      if (x < 0.0 || x >= static_cast<double>(d->dims[i])) return false;
    }
    return true;
  }
  const auto& b = std::get<BoxSpace>(space);
  for (size_t i = 0; i < point.size(); ++i) {
    if (point[i] < b.low[i] || point[i] > b.high[i]) return false;
  }
  return true;
}

bool Goal::is_cell() const {
  for (double x : v) {
    if (x != std::floor(x)) return false;
  }
  return true;
}

std::string Goal::str() const { return fmt_tuple(v); }

std::string Goal::path_str() const {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += "x";
    if (v[i] == std::floor(v[i]) && std::abs(v[i]) < 1e15) {
      out += std::to_string(static_cast<long long>(v[i]));
    } else {
      out += fmt_g(v[i]);
    }
  }
  return out;
}

void ObservationSequence::validate() const {
  if (steps.empty()) throw Error("observation sequence is empty");
  if (source_indices.size() != steps.size())
    throw Error("observation sequence: source index count mismatch");
  for (size_t i = 1; i < source_indices.size(); ++i) {
    if (source_indices[i] <= source_indices[i - 1])
      throw Error("observation sequence: source indices not strictly increasing");
  }
  if (is_consecutive) {
    for (size_t i = 0; i < source_indices.size(); ++i) {
      if (source_indices[i] != static_cast<int>(i))
        throw Error("consecutive observation sequence must index 0..len-1");
    }
  }
  if (!(observability > 0.0 && observability <= 1.0))
    throw Error("observability must lie in (0, 1]");
}

const char* to_string(TraceType t) {
  return t == TraceType::Consecutive ? "consecutive" : "non_consecutive";
}

TraceType trace_type_from_string(const std::string& s) {
  if (s == "consecutive") return TraceType::Consecutive;
  if (s == "non_consecutive") return TraceType::NonConsecutive;
  throw Error("unknown trace type: " + s);
}

void GRInstance::validate(bool benchmark) const {
  observation.validate();
  bool found = false;
  for (const auto& g : goal_set) found = found || (g == true_goal);
  if (!found) throw Error("GR instance: true goal not in goal set");
  if (benchmark) {
    size_t distinct = 0;
    for (size_t i = 0; i < goal_set.size(); ++i) {
      bool dup = false;
      for (size_t j = 0; j < i; ++j) dup = dup || (goal_set[i] == goal_set[j]);
      if (!dup) ++distinct;
    }
    if (distinct < 2) throw Error("benchmark GR instance needs at least 2 distinct goals");
  }
}

const TrainConfig& ODGRProblemSpec::config_for(size_t goal_index) const {
  if (train_configs.empty()) throw Error("problem spec has no train configs");
  if (train_configs.size() == 1) return train_configs.front();
  if (goal_index >= train_configs.size())
    throw Error("problem spec: no train config for goal index " + std::to_string(goal_index));
  return train_configs[goal_index];
}

void ODGRProblemSpec::validate() const {
  if (dynamic_goals.size() < 3 || dynamic_goals.size() > 9)
    throw Error("problem spec: dynamic goal count must lie in [3, 9]");
  if (train_configs.size() != 1 && train_configs.size() != dynamic_goals.size())
    throw Error("problem spec: train configs must be one per goal or a single default");
  for (double lv : observability_levels) {
    if (!(lv > 0.0 && lv <= 1.0)) throw Error("problem spec: observability level outside (0, 1]");
  }
  if (observability_levels.empty()) throw Error("problem spec: no observability levels");
  if (trace_types.empty()) throw Error("problem spec: no trace types");
}

size_t argmax_index(std::span<const ScoredGoal> scores) {
  if (scores.empty()) throw Error("argmax over empty score mapping");
  size_t best = 0;
  for (size_t i = 1; i < scores.size(); ++i) {
    if (scores[i].score > scores[best].score) best = i;
  }
  return best;
}

const Goal& argmax_with_tiebreak(const std::vector<ScoredGoal>& scores) {
  return scores[argmax_index(scores)].goal;
}

int rank_of(std::span<const ScoredGoal> scores, const Goal& true_goal) {
  int idx = -1;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].goal == true_goal) {
      idx = static_cast<int>(i);
      break;
    }
  }
  if (idx < 0) throw Error("rank_of: true goal not present in scores");
  double s = scores[idx].score;
  int rank = 1;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i) {
    if (scores[i].score > s) ++rank;
    else if (scores[i].score == s && i < idx) ++rank;
  }
  return rank;
}

}  // namespace odgr
