// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <string>

#include <json.hpp>

#include "pilm/model.hpp"

namespace pilm {

/// Problem files use the "pilm-problem/1" schema, documented in
/// docs/schemas.md. Serialization is deterministic: parse -> serialize ->
/// parse reproduces the same problem bit for bit.
inline constexpr const char* problem_schema = "pilm-problem/1";

nlohmann::json problem_to_json(const Problem& p, bool include_truth = true);
Problem problem_from_json(const nlohmann::json& j);

void save_problem(const Problem& p, const std::string& path, bool include_truth = true);
Problem load_problem(const std::string& path);

}  // namespace pilm
