#include "odgr/registry.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "odgr/envs.hpp"

namespace odgr::registry {

namespace {

using nlohmann::json;

Goal g2(double x, double y) { return Goal{{x, y}}; }

ODGRProblemSpec make_spec(std::string domain, std::string env, std::string task,
                          std::vector<Goal> base, std::vector<Goal> dynamic, std::string algo,
                          long timesteps, bool noisy) {
  ODGRProblemSpec s;
  s.domain_name = std::move(domain);
  s.env_name = std::move(env);
  s.task_id = std::move(task);
  s.base_goals = std::move(base);
  s.dynamic_goals = std::move(dynamic);
  s.train_configs = {{std::move(algo), timesteps}};
  if (noisy) s.noise_profile = NoiseProfile{};
  s.validate();
  return s;
}

std::vector<ODGRProblemSpec> build_default() {
  std::vector<ODGRProblemSpec> all;

  const std::vector<Goal> sc{g2(11, 1), g2(11, 11), g2(1, 11)};
  all.push_back(make_spec("minigrid", "MiniGrid-SimpleCrossingS13N4", "L1", sc, sc, "QLEARNING",
                          100000, false));
  all.push_back(make_spec("minigrid", "MiniGrid-SimpleCrossingS13N4", "L2", sc,
                          {g2(11, 1), g2(11, 11), g2(1, 11), g2(5, 11), g2(9, 1)}, "QLEARNING",
                          100000, true));

  const std::vector<Goal> lc{g2(7, 1), g2(7, 7), g2(1, 7)};
  all.push_back(
      make_spec("minigrid", "MiniGrid-LavaCrossingS9N2", "L1", lc, lc, "QLEARNING", 100000, false));
  all.push_back(make_spec("minigrid", "MiniGrid-LavaCrossingS9N2", "L2", lc,
                          {g2(7, 1), g2(7, 7), g2(1, 7), g2(5, 1), g2(3, 7)}, "QLEARNING", 100000,
                          true));

  const std::vector<Goal> fr{g2(8.5, 2.5), g2(2.5, 8.5), g2(7.5, 7.5)};
  all.push_back(
      make_spec("point_maze", "PointMaze-FourRooms", "L1", fr, fr, "TILEQ", 300000, false));
  all.push_back(make_spec("point_maze", "PointMaze-FourRooms", "L2", fr,
                          {g2(8.5, 2.5), g2(2.5, 8.5), g2(7.5, 7.5), g2(4.5, 3.5), g2(8.5, 8.5)},
                          "TILEQ", 300000, true));

  const std::vector<Goal> ob{g2(6.5, 6.5), g2(6.5, 2.5), g2(2.5, 6.5)};
  all.push_back(
      make_spec("point_maze", "PointMaze-Obstacle", "L1", ob, ob, "TILEQ", 300000, false));
  all.push_back(make_spec("point_maze", "PointMaze-Obstacle", "L2", ob,
                          {g2(6.5, 6.5), g2(6.5, 2.5), g2(2.5, 6.5), g2(5.5, 5.5), g2(1.5, 6.5)},
                          "TILEQ", 300000, true));
  return all;
}

json goal_to_json(const Goal& g) { return json(g.v); }

Goal goal_from_json(const json& j) {
  Goal g;
  for (const auto& v : j) g.v.push_back(v.get<double>());
  return g;
}

}  // namespace

const std::vector<ODGRProblemSpec>& default_registry() {
  static const std::vector<ODGRProblemSpec> reg = build_default();
  return reg;
}

const ODGRProblemSpec& find(const std::string& domain_name, const std::string& env_name,
                            const std::string& task_id) {
  for (const auto& s : default_registry()) {
    if (s.domain_name == domain_name && s.env_name == env_name && s.task_id == task_id) return s;
  }
  throw Error("no registry entry for " + domain_name + "/" + env_name + "/" + task_id);
}

std::string to_json(const std::vector<ODGRProblemSpec>& specs) {
  json root = json::object();
  for (const auto& s : specs) {
    json& env = root[s.domain_name][s.env_name];
    if (!env.contains("layout_seed")) env["layout_seed"] = envs::layout_seed(s.env_name);
    json task;
    task["base_goals"] = json::array();
    for (const auto& g : s.base_goals) task["base_goals"].push_back(goal_to_json(g));
    task["dynamic_goals"] = json::array();
    for (const auto& g : s.dynamic_goals) task["dynamic_goals"].push_back(goal_to_json(g));
    task["train_configs"] = json::array();
    for (const auto& c : s.train_configs)
      task["train_configs"].push_back({{"algorithm", c.algorithm}, {"timesteps", c.timesteps}});
    task["observability_levels"] = s.observability_levels;
    task["trace_types"] = json::array();
    for (auto t : s.trace_types) task["trace_types"].push_back(to_string(t));
    if (s.noise_profile) {
      task["noise_profile"] = {{"state_sigma", s.noise_profile->state_sigma},
                               {"action_sigma", s.noise_profile->action_sigma}};
    }
    env["tasks"][s.task_id] = std::move(task);
  }
  return root.dump(2) + "\n";
}

std::vector<ODGRProblemSpec> from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("registry parse failure: ") + e.what());
  }
  std::vector<ODGRProblemSpec> out;
  try {
    for (const auto& [domain_name, envs_obj] : root.items()) {
      for (const auto& [env_name, env_obj] : envs_obj.items()) {
        for (const auto& [task_id, t] : env_obj.at("tasks").items()) {
          ODGRProblemSpec s;
          s.domain_name = domain_name;
          s.env_name = env_name;
          s.task_id = task_id;
          for (const auto& g : t.at("base_goals")) s.base_goals.push_back(goal_from_json(g));
          for (const auto& g : t.at("dynamic_goals")) s.dynamic_goals.push_back(goal_from_json(g));
          for (const auto& c : t.at("train_configs"))
            s.train_configs.push_back(
                {c.at("algorithm").get<std::string>(), c.at("timesteps").get<long>()});
          if (t.contains("observability_levels"))
            s.observability_levels = t.at("observability_levels").get<std::vector<double>>();
          if (t.contains("trace_types")) {
            s.trace_types.clear();
            for (const auto& tt : t.at("trace_types"))
              s.trace_types.push_back(trace_type_from_string(tt.get<std::string>()));
          }
          if (t.contains("noise_profile")) {
            s.noise_profile = NoiseProfile{t.at("noise_profile").at("state_sigma").get<double>(),
                                           t.at("noise_profile").at("action_sigma").get<double>()};
          }
          s.validate();
          out.push_back(std::move(s));
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("registry structure error: ") + e.what());
  }
  return out;
}

void save_registry(const std::string& path, const std::vector<ODGRProblemSpec>& specs) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write registry file: " + path);
  f << to_json(specs);
}

std::vector<ODGRProblemSpec> load_registry(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read registry file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

}  // namespace odgr::registry
