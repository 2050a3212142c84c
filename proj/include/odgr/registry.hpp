#pragma once

#include <string>
#include <vector>

#include "odgr/core.hpp"

namespace odgr::registry {

// Built-in benchmark problems, keyed (domain, env, task). Task L1 is the
// plain variant; L2 widens the goal set and adds observation noise.
const std::vector<ODGRProblemSpec>& default_registry();

const ODGRProblemSpec& find(const std::string& domain_name, const std::string& env_name,
                            const std::string& task_id);

// JSON round-trip, keyed domain -> env -> task -> fields. The layout_seed
// field per env entry is informational and must match the built-in value.
std::string to_json(const std::vector<ODGRProblemSpec>& specs);
std::vector<ODGRProblemSpec> from_json(const std::string& text);

void save_registry(const std::string& path, const std::vector<ODGRProblemSpec>& specs);
std::vector<ODGRProblemSpec> load_registry(const std::string& path);

}  // namespace odgr::registry
