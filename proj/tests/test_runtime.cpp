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

#include <doctest.h>

#include <cmath>
#include <vector>

#include "pilm/runtime.hpp"
#include "support.hpp"

using namespace pilm;

TEST_CASE("default worker count is capped by the block count") {
    CHECK(default_workers(1) == 1);
    CHECK(default_workers(1000) >= 1);
    CHECK(default_workers(2) <= 2);
}

TEST_CASE("serial and threaded phases produce identical output") {
    const int n = 64;
    std::vector<double> serial(n), wide(n), single(n);
    WorkPlan plan;
    plan.phase = Phase::Assemble;
    plan.n_tasks = n;

    auto fill = [](std::vector<double>& out) {
        return [&out](int i) {
            double acc = 0.0;
            for (int t = 1; t <= 200; ++t) {
                acc += std::sin(static_cast<double>(i * t)) / t;
            }
            out[static_cast<size_t>(i)] = acc;
        };
    };

    plan.task = fill(serial);
    run_phase_serial(plan);
    plan.task = fill(single);
    run_phase(plan, 1);
    plan.task = fill(wide);
    run_phase(plan, 8);  // oversubscribed on small machines; must not matter

    CHECK(serial == single);
    CHECK(serial == wide);
}

TEST_CASE("the lowest-index failing task wins") {
    WorkPlan plan;
    plan.phase = Phase::Factor;
    plan.n_tasks = 16;
    plan.task = [](int i) {
        if (i == 11 || i == 3 || i == 7) {
            throw NumericalError("task failed", i);
        }
    };
    for (int workers : {1, 4}) {
        try {
            run_phase(plan, workers);
            FAIL("expected a NumericalError");
        } catch (const NumericalError& e) {
            CHECK(e.block_index() == 3);
        }
    }
}

TEST_CASE("empty and single-task phases run inline") {
    int calls = 0;
    WorkPlan plan;
    plan.n_tasks = 1;
    plan.task = [&](int i) {
        CHECK(i == 0);
        ++calls;
    };
    run_phase(plan, 8);
    CHECK(calls == 1);
    plan.n_tasks = 0;
    run_phase(plan, 8);
    CHECK(calls == 1);
}

TEST_CASE("communication volume of a two-block partition") {
    Partition part;
    part.K = 2;
    part.n_s = {4, 4};
    part.neighbors = {{1}, {0}};
    const CommunicationVolume v = simulate_communication_volume(part, 10, 5);
    CHECK(v.broadcast_values_per_inner == 16);  // K * n
    CHECK(v.targeted_values_per_inner == 8);    // each block pulls the other
    CHECK(v.broadcast_bytes_total == 16LL * 10 * 5 * 8);
    CHECK(v.targeted_bytes_total == 8LL * 10 * 5 * 8);
}

TEST_CASE("targeted exchange never exceeds the broadcast volume") {
    const Problem p = pilm::test::make_random_problem(60, 19);
    const VariableGraph g = build_variable_graph(p);
    for (int K : {1, 2, 4, 6}) {
        const std::vector<int> block_of = partition_points(g, K, 0);
        const Partition part = induce_residual_partition(p, block_of, K);
        const CommunicationVolume v = simulate_communication_volume(part, 3, 5);
        CHECK(v.targeted_values_per_inner <= v.broadcast_values_per_inner);
        if (K == 1) {
            CHECK(v.targeted_values_per_inner == 0);
        }
    }
}
