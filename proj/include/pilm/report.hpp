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

#include <optional>
#include <string>

#include <json.hpp>

#include "pilm/gen.hpp"
#include "pilm/outer.hpp"

namespace pilm {

/// Run reports use the "pilm-report/1" schema, documented in docs/schemas.md.
inline constexpr const char* report_schema = "pilm-report/1";

nlohmann::json solver_config_to_json(const SolverConfig& cfg);
nlohmann::json iteration_record_to_json(const IterationRecord& rec);

/// Full run report: resolved config echo, status, iteration records, phase
/// times, partition stats, and error quantiles when ground truth is known.
nlohmann::json run_report_json(const std::string& algorithm, const SolverConfig& cfg,
                               const SolveResult& result,
                               const std::optional<ErrorQuantiles>& errors);

void save_json(const nlohmann::json& j, const std::string& path);

/// One row per iteration: k, f1, f2, f3. Values round-trip exactly.
void write_fractions_csv(const std::vector<IterationRecord>& records,
                         const std::string& path);

/// Histogram of |x - truth| per variable: bin lower edge, bin upper edge,
/// count. Bins split [0, max] evenly.
void write_error_histogram_csv(const std::vector<double>& errors, int bins,
                               const std::string& path);

struct SweepRow {
    int K = 1;
    int repetition = 0;
    double wall_time_s = 0.0;
    int iterations = 0;
    std::string status;
};

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace pilm
