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

#include <functional>

#include "pilm/partition.hpp"

namespace pilm {

enum class Phase { Assemble, Factor, FirstSolve, InnerStep };

/// One fork-join phase: n_tasks independent tasks followed by a barrier.
/// task(i) may read any phase input but must write only task-i outputs, so
/// results are identical for any worker count.
struct WorkPlan {
    Phase phase = Phase::Assemble;
    int n_tasks = 0;
    std::function<void(int)> task;
};

/// min(K, hardware threads), at least 1.
int default_workers(int K);

/// Reference implementation: tasks run in index order on the calling thread.
void run_phase_serial(const WorkPlan& plan);

/// Runs the phase on `workers` threads (OpenMP). Output equals
/// run_phase_serial bitwise. If tasks throw, the exception of the
/// lowest-index failing task is rethrown after the barrier.
void run_phase(const WorkPlan& plan, int workers);

/// Exchange volume per strategy for the inner iteration: the master either
/// broadcasts the full aggregated vector to every block (K*n values per
/// inner step) or sends each block only its neighbors' segments.
struct CommunicationVolume {
    long long broadcast_values_per_inner = 0;
    long long targeted_values_per_inner = 0;
    long long broadcast_bytes_total = 0;
    long long targeted_bytes_total = 0;
};

CommunicationVolume simulate_communication_volume(const Partition& part, int n_iters,
                                                  int ell);

}  // namespace pilm
