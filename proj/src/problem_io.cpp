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

#include "pilm/problem_io.hpp"

#include <fstream>

namespace pilm {

using nlohmann::json;

namespace {

json measurement_to_json(const Measurement& m) {
    json j;
    std::visit(
        [&j](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DistanceMeasurement>) {
                j["type"] = "distance";
                j["indices"] = {v.i, v.j};
            } else if constexpr (std::is_same_v<T, AngleMeasurement>) {
                j["type"] = "angle";
                j["indices"] = {v.i, v.j, v.k};
            } else if constexpr (std::is_same_v<T, PointLineMeasurement>) {
                j["type"] = "point_line";
                j["indices"] = {v.k, v.i, v.j};
            } else {
                j["type"] = "coordinate";
                j["indices"] = {v.i};
                j["axis"] = v.axis == Axis::X ? "x" : "y";
            }
            j["value"] = v.value;
            j["sigma"] = v.sigma;
        },
        m);
    return j;
}

void expect_indices(const json& j, size_t n) {
    if (!j.contains("indices") || !j["indices"].is_array() || j["indices"].size() != n) {
        throw InvalidArgument("measurement needs " + std::to_string(n) + " indices");
    }
}

Measurement measurement_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    const double value = j.at("value").get<double>();
    const double sigma = j.at("sigma").get<double>();
    if (type == "distance") {
        expect_indices(j, 2);
        return DistanceMeasurement{j["indices"][0], j["indices"][1], value, sigma};
    }
    if (type == "angle") {
        expect_indices(j, 3);
        return AngleMeasurement{j["indices"][0], j["indices"][1], j["indices"][2],
                                value, sigma};
    }
    if (type == "point_line") {
        expect_indices(j, 3);
        return PointLineMeasurement{j["indices"][0], j["indices"][1], j["indices"][2],
                                    value, sigma};
    }
    if (type == "coordinate") {
        expect_indices(j, 1);
        const std::string axis = j.at("axis").get<std::string>();
        if (axis != "x" && axis != "y") {
            throw InvalidArgument("coordinate axis must be \"x\" or \"y\"");
        }
        return CoordinateMeasurement{j["indices"][0], axis == "x" ? Axis::X : Axis::Y,
                                     value, sigma};
    }
    throw InvalidArgument("unknown measurement type \"" + type + "\"");
}

}  // namespace

json problem_to_json(const Problem& p, bool include_truth) {
    json j;
    j["schema"] = problem_schema;
    j["n_points"] = p.n_points;
    json ms = json::array();
    for (const Measurement& m : p.measurements) {
        ms.push_back(measurement_to_json(m));
    }
    j["measurements"] = std::move(ms);
    if (include_truth && p.ground_truth) {
        j["ground_truth"] = *p.ground_truth;
    }
    return j;
}

Problem problem_from_json(const json& j) {
    if (j.value("schema", "") != problem_schema) {
        throw InvalidArgument("unsupported problem schema (expected \"" +
                              std::string(problem_schema) + "\")");
    }
    Problem p;
    p.n_points = j.at("n_points").get<int>();
    for (const json& m : j.at("measurements")) {
        p.measurements.push_back(measurement_from_json(m));
    }
    if (j.contains("ground_truth")) {
        p.ground_truth = j["ground_truth"].get<std::vector<double>>();
    }
    validate(p);
    return p;
}

void save_problem(const Problem& p, const std::string& path, bool include_truth) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open " + path + " for writing");
    }
    out << problem_to_json(p, include_truth).dump(2) << '\n';
    if (!out) {
        throw Error("failed writing " + path);
    }
}

Problem load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path);
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw InvalidArgument(path + ": " + e.what());
    }
    return problem_from_json(j);
}

}  // namespace pilm
