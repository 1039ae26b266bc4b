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

#include "pilm/runtime.hpp"

#include <exception>
#include <thread>
#include <vector>

namespace pilm {

int default_workers(int K) {
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, std::min(K, hw > 0 ? hw : 1));
}

void run_phase_serial(const WorkPlan& plan) {
    for (int i = 0; i < plan.n_tasks; ++i) {
        plan.task(i);
    }
}

void run_phase(const WorkPlan& plan, int workers) {
    if (workers <= 1 || plan.n_tasks <= 1) {
        run_phase_serial(plan);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<size_t>(plan.n_tasks));
    bool failed = false;
#pragma omp parallel for schedule(dynamic) num_threads(workers) shared(errors, failed)
    for (int i = 0; i < plan.n_tasks; ++i) {
        try {
            plan.task(i);
        } catch (...) {
            errors[static_cast<size_t>(i)] = std::current_exception();
#pragma omp atomic write
            failed = true;
        }
    }
    if (failed) {
        // Rethrow the lowest-index failure so diagnostics do not depend on
        // scheduling order.
        for (const std::exception_ptr& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    }
}

CommunicationVolume simulate_communication_volume(const Partition& part, int n_iters,
                                                  int ell) {
    long long n = 0;
    for (int ns : part.n_s) {
        n += ns;
    }
    CommunicationVolume v;
    v.broadcast_values_per_inner = static_cast<long long>(part.K) * n;
    for (int i = 0; i < part.K; ++i) {
        for (int j : part.neighbors[static_cast<size_t>(i)]) {
            v.targeted_values_per_inner += part.n_s[static_cast<size_t>(j)];
        }
    }
    const long long steps = static_cast<long long>(n_iters) * ell;
    v.broadcast_bytes_total = v.broadcast_values_per_inner * steps * 8;
    v.targeted_bytes_total = v.targeted_values_per_inner * steps * 8;
    return v;
}

}  // namespace pilm
