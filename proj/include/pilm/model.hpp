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

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <array>
#include <optional>
#include <variant>
#include <vector>

#include "pilm/errors.hpp"

namespace pilm {

enum class Axis { X, Y };

/// Observed distance between points i and j.
struct DistanceMeasurement {
    int i = 0;
    int j = 0;
    double value = 0.0;  ///< observed length
    double sigma = 1.0;  ///< standard deviation of the observation
};

/// Observed angle at vertex j between the rays towards i and k. The residual
/// uses the two-argument arctangent of (P_k - P_j) and (P_k - P_i); the value
/// is stored in radians.
struct AngleMeasurement {
    int i = 0;
    int j = 0;
    int k = 0;
    double value = 0.0;  ///< observed angle, radians
    double sigma = 1.0;  ///< standard deviation, radians
};

/// Observed distance between point k and the line through i and j.
struct PointLineMeasurement {
    int k = 0;
    int i = 0;
    int j = 0;
    double value = 0.0;
    double sigma = 1.0;
};

/// Direct observation of one coordinate of point i.
struct CoordinateMeasurement {
    int i = 0;
    Axis axis = Axis::X;
    double value = 0.0;
    double sigma = 1.0;
};

using Measurement = std::variant<DistanceMeasurement, AngleMeasurement,
                                 PointLineMeasurement, CoordinateMeasurement>;

/// Points referenced by a measurement, in declaration order. Returns the
/// number of distinct points written to `out` (1, 2 or 3).
int involved_points(const Measurement& m, std::array<int, 3>& out);

/// Scalar variables (columns) a measurement's residual depends on, ascending.
int involved_variables(const Measurement& m, std::array<int, 6>& out);

double measurement_sigma(const Measurement& m);

/// A sparse nonlinear least-squares problem over 2D point coordinates.
/// Point P_i owns variables (x[2i], x[2i+1]).
struct Problem {
    int n_points = 0;
    std::vector<Measurement> measurements;
    std::optional<std::vector<double>> ground_truth;  ///< length 2*n_points

    int n_vars() const { return 2 * n_points; }
    int n_measurements() const { return static_cast<int>(measurements.size()); }
};

/// Throws InvalidArgument if indices are out of range, indices within a
/// measurement collide, a sigma is not positive, or a point is never
/// referenced by any measurement.
void validate(const Problem& p);

/// Row-compressed Jacobian of the weighted residual vector. Each row holds
/// the nonzeros of one measurement, at most 6, with ascending column indices.
struct SparseJacobian {
    int rows = 0;
    int cols = 0;
    std::vector<int> row_ptr;  ///< size rows + 1
    std::vector<int> col_idx;
    std::vector<double> values;

    Eigen::SparseMatrix<double, Eigen::RowMajor> to_eigen() const;
};

/// One analytic Jacobian row; at most 6 nonzeros, columns ascending.
struct JacobianRow {
    int count = 0;
    std::array<int, 6> cols{};
    std::array<double, 6> vals{};
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

/// Weighted residual r = (raw residual) / sigma of a single measurement.
/// The angle residual wraps the difference of the two arctangent terms into
/// (-pi, pi] before subtracting the observed value.
double eval_residual(const Measurement& m, const Eigen::VectorXd& x);

/// Analytic gradient row of the weighted residual. Throws EvaluationError on
/// degenerate geometry (coincident points, zero-length line).
JacobianRow eval_residual_gradient(const Measurement& m, const Eigen::VectorXd& x);

Eigen::VectorXd eval_R(const Problem& p, const Eigen::VectorXd& x);
SparseJacobian eval_J(const Problem& p, const Eigen::VectorXd& x);

/// F(x) = 0.5 * ||R(x)||^2
double eval_F(const Problem& p, const Eigen::VectorXd& x);

/// g(x) = J(x)^T R(x)
Eigen::VectorXd eval_gradient(const Problem& p, const Eigen::VectorXd& x);

}  // namespace pilm
