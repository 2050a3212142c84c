#include "odgr/traces.hpp"

#include "wire.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "odgr/util.hpp"

namespace odgr::traces {

namespace fs = std::filesystem;

namespace {

int argmax_first(std::span<const double> q) {
  return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

int sample_index(std::span<const double> probs, Rng& rng) {
  double u = rng.uniform01();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

std::string tuple_str(std::span<const double> v) {
  std::string out = "(";
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt_g(v[i]);
  }
  return out + ")";
}

}  // namespace

ObservationSequence generate_observation(const agents::PolicyArtifact& artifact, envs::Env& env,
                                         ActionSelection selection, bool random_optimalism,
                                         std::optional<NoiseProfile> noise, uint64_t seed) {
  if (!artifact.trained) throw Error("cannot observe an untrained policy");
  if (artifact.env_name != env.name())
    throw Error("artifact trained for " + artifact.env_name + " cannot act in " + env.name());
  if (env.goal_mode() != envs::GoalMode::Fixed)
    throw Error("environment goal must be fixed before observing");

  const bool discrete = env.discrete();
  const int n_bins = artifact.n_action_bins();
  std::span<const double> goal;
  if (artifact.goal_conditioned()) goal = env.goal().v;

  // Selection and recording noise draw from separate streams, so a zero-sigma
  // profile reproduces the noiseless rollout exactly.
  Rng select_rng(derive_seed(seed, {"select"}));
  Rng noise_rng(derive_seed(seed, {"noise"}));

  env.reset(derive_seed(seed, {"reset"}));
  ObservationSequence seq;
  for (int t = 0;; ++t) {
    std::vector<double> state = env.state();
    int bin;
    if (random_optimalism && select_rng.uniform01() < kRandomOptimalismRate) {
      bin = select_rng.uniform_int(n_bins);
    } else {
      auto row = artifact.q_values(state, goal);
      // Unexplored tabular states fall back to a flat row: first action under
      // greedy selection, uniform sampling under the amplified policy.
      std::vector<double> q = row ? std::move(*row) : std::vector<double>(size_t(n_bins), 0.0);
      if (selection == ActionSelection::greedy) {
        bin = argmax_first(q);
      } else {
        auto probs = agents::softmax(q, 1.0 / kAmplifiedBeta);
        bin = sample_index(probs, select_rng);
      }
    }
    std::vector<double> action = artifact.action_for_bin(bin);
    auto res = env.step(action);

    ObservationStep step{std::move(state), action};
    if (noise) {
      // Noise lands on the recorded copy only, never on the simulation. Grid
      // states expose a direction component that stays exact, and discrete
      // actions are never perturbed.
      size_t noised_dims = discrete ? std::min<size_t>(2, step.state.size()) : step.state.size();
      for (size_t i = 0; i < noised_dims; ++i)
        step.state[i] += noise_rng.normal(0.0, noise->state_sigma);
      if (!discrete)
        for (auto& a : step.action) a += noise_rng.normal(0.0, noise->action_sigma);
    }
    seq.steps.push_back(std::move(step));
    seq.source_indices.push_back(t);
    if (res.terminated || res.truncated) break;
  }
  return seq;
}

ObservationSequence random_subset_with_order(const ObservationSequence& seq, int k,
                                             bool is_consecutive, uint64_t seed) {
  const int len = static_cast<int>(seq.size());
  if (k < 1 || k > len)
    throw Error("subset size " + std::to_string(k) + " outside [1, " + std::to_string(len) + "]");

  std::vector<int> picked;
  if (is_consecutive) {
    picked.resize(size_t(k));
    std::iota(picked.begin(), picked.end(), 0);
  } else {
    std::vector<int> idx(static_cast<size_t>(len));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, {"subset"}));
    for (int i = 0; i < k; ++i) std::swap(idx[size_t(i)], idx[size_t(i + rng.uniform_int(len - i))]);
    picked.assign(idx.begin(), idx.begin() + k);
    std::sort(picked.begin(), picked.end());
  }

  // Provenance composes: indices point into the original full trajectory even
  // after repeated degradation.
  const bool mapped = seq.source_indices.size() == seq.steps.size();
  ObservationSequence out;
  for (int i : picked) {
    out.steps.push_back(seq.steps[size_t(i)]);
    out.source_indices.push_back(mapped ? seq.source_indices[size_t(i)] : i);
  }
  out.is_consecutive = true;
  for (size_t i = 0; i < out.source_indices.size(); ++i)
    if (out.source_indices[i] != static_cast<int>(i)) {
      out.is_consecutive = false;
      break;
    }
  out.observability = seq.observability * double(k) / double(len);
  return out;
}

ObservationSequence truncate_by_observability(const ObservationSequence& seq, double level,
                                              TraceType type, uint64_t seed) {
  if (!(level > 0.0 && level <= 1.0)) throw Error("observability level must lie in (0, 1]");
  // The epsilon shields floor from representation error: 0.3 * 10 must give 3.
  int k = std::max(1, static_cast<int>(std::floor(level * double(seq.size()) + 1e-9)));
  ObservationSequence out =
      random_subset_with_order(seq, k, type == TraceType::Consecutive, seed);
  out.observability = level;
  return out;
}

std::string dump_text(const ObservationSequence& seq) {
  std::string out;
  for (size_t i = 0; i < seq.steps.size(); ++i) {
    const auto& step = seq.steps[i];
    int src = i < seq.source_indices.size() ? seq.source_indices[i] : static_cast<int>(i);
    out += "t=" + std::to_string(src) + " s=" + tuple_str(step.state) + " a=";
    out += step.action.size() == 1 ? fmt_g(step.action[0]) : tuple_str(step.action);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'O', 'D', 'G', 'R', 'T', 'R', 'C', '1'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_sequence(const ObservationSequence& seq, const std::string& path) {
  wire::Writer body;
  body.u8(seq.is_consecutive ? 1 : 0);
  body.f64(seq.observability);
  body.u64(seq.steps.size());
  for (const auto& step : seq.steps) {
    body.doubles(step.state);
    body.doubles(step.action);
  }
  body.u64(seq.source_indices.size());
  for (int i : seq.source_indices) body.i64(i);

  wire::Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.u32(crc32(body.buf.data(), body.buf.size()));
  w.buf += body.buf;

  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write trace: " + tmp.string());
    out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw Error("short write: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::optional<ObservationSequence> load_sequence(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  wire::Reader r{bytes.data(), bytes.data() + bytes.size(), "trace"};
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ChecksumError("trace has wrong magic: " + path);
  uint32_t version = r.u32();
  if (version != kVersion)
    throw Error("unsupported trace version " + std::to_string(version) + ": " + path);
  uint32_t stored_crc = r.u32();
  if (stored_crc != crc32(r.p, static_cast<size_t>(r.end - r.p)))
    throw ChecksumError("trace checksum mismatch: " + path);

  ObservationSequence seq;
  seq.is_consecutive = r.u8() != 0;
  seq.observability = r.f64();
  uint64_t n = r.u64();
  seq.steps.resize(n);
  for (auto& step : seq.steps) {
    step.state = r.doubles();
    step.action = r.doubles();
  }
  uint64_t m = r.u64();
  seq.source_indices.resize(m);
  for (auto& i : seq.source_indices) i = static_cast<int>(r.i64());
  return seq;
}

}  // namespace odgr::traces
