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

#include "pilm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace pilm {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

void sort_row(JacobianRow& row) {
    // Insertion sort; rows have at most 6 entries.
    for (int a = 1; a < row.count; ++a) {
        const int c = row.cols[a];
        const double v = row.vals[a];
        int b = a - 1;
        while (b >= 0 && row.cols[b] > c) {
            row.cols[b + 1] = row.cols[b];
            row.vals[b + 1] = row.vals[b];
            --b;
        }
        row.cols[b + 1] = c;
        row.vals[b + 1] = v;
    }
}

void push(JacobianRow& row, int col, double val) {
    row.cols[row.count] = col;
    row.vals[row.count] = val;
    ++row.count;
}

[[noreturn]] void degenerate(const std::string& what) {
    throw EvaluationError("degenerate geometry: " + what);
}

}  // namespace

double wrap_angle(double theta) {
    double t = std::fmod(theta, two_pi);
    if (t <= -std::numbers::pi) {
        t += two_pi;
    } else if (t > std::numbers::pi) {
        t -= two_pi;
    }
    return t;
}

int involved_points(const Measurement& m, std::array<int, 3>& out) {
    return std::visit(
        [&out](const auto& v) -> int {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DistanceMeasurement>) {
                out = {v.i, v.j, -1};
                return 2;
            } else if constexpr (std::is_same_v<T, AngleMeasurement>) {
                out = {v.i, v.j, v.k};
                return 3;
            } else if constexpr (std::is_same_v<T, PointLineMeasurement>) {
                out = {v.k, v.i, v.j};
                return 3;
            } else {
                out = {v.i, -1, -1};
                return 1;
            }
        },
        m);
}

int involved_variables(const Measurement& m, std::array<int, 6>& out) {
    std::array<int, 3> pts{};
    const int np = involved_points(m, pts);
    if (const auto* c = std::get_if<CoordinateMeasurement>(&m)) {
        out[0] = 2 * c->i + (c->axis == Axis::X ? 0 : 1);
        return 1;
    }
    int n = 0;
    for (int a = 0; a < np; ++a) {
        out[n++] = 2 * pts[a];
        out[n++] = 2 * pts[a] + 1;
    }
    std::sort(out.begin(), out.begin() + n);
    return n;
}

double measurement_sigma(const Measurement& m) {
    return std::visit([](const auto& v) { return v.sigma; }, m);
}

void validate(const Problem& p) {
    if (p.n_points <= 0) {
        throw InvalidArgument("problem has no points");
    }
    if (p.ground_truth && static_cast<int>(p.ground_truth->size()) != p.n_vars()) {
        throw InvalidArgument("ground truth size does not match 2*n_points");
    }
    std::vector<char> seen(static_cast<size_t>(p.n_points), 0);
    for (int idx = 0; idx < p.n_measurements(); ++idx) {
        const Measurement& m = p.measurements[static_cast<size_t>(idx)];
        std::array<int, 3> pts{};
        const int np = involved_points(m, pts);
        for (int a = 0; a < np; ++a) {
            if (pts[a] < 0 || pts[a] >= p.n_points) {
                throw InvalidArgument("measurement " + std::to_string(idx) +
                                      ": point index out of range");
            }
            for (int b = 0; b < a; ++b) {
                if (pts[a] == pts[b]) {
                    throw InvalidArgument("measurement " + std::to_string(idx) +
                                          ": repeated point index");
                }
            }
            seen[static_cast<size_t>(pts[a])] = 1;
        }
        if (!(measurement_sigma(m) > 0.0)) {
            throw InvalidArgument("measurement " + std::to_string(idx) +
                                  ": sigma must be positive");
        }
    }
    for (int i = 0; i < p.n_points; ++i) {
        if (!seen[static_cast<size_t>(i)]) {
            throw InvalidArgument("point " + std::to_string(i) +
                                  " is not referenced by any measurement");
        }
    }
}

namespace {

double raw_distance(const DistanceMeasurement& m, const Eigen::VectorXd& x) {
    const double dx = x[2 * m.i] - x[2 * m.j];
    const double dy = x[2 * m.i + 1] - x[2 * m.j + 1];
    return std::sqrt(dx * dx + dy * dy) - m.value;
}

double raw_angle(const AngleMeasurement& m, const Eigen::VectorXd& x) {
    const double t1 = std::atan2(x[2 * m.k + 1] - x[2 * m.j + 1],
                                 x[2 * m.k] - x[2 * m.j]);
    const double t2 = std::atan2(x[2 * m.k + 1] - x[2 * m.i + 1],
                                 x[2 * m.k] - x[2 * m.i]);
    return wrap_angle(t1 - t2) - m.value;
}

double raw_point_line(const PointLineMeasurement& m, const Eigen::VectorXd& x) {
    const double xi = x[2 * m.i], yi = x[2 * m.i + 1];
    const double xj = x[2 * m.j], yj = x[2 * m.j + 1];
    const double xk = x[2 * m.k], yk = x[2 * m.k + 1];
    const double num = xi * (yk - yj) + xj * (yi - yk) + xk * (yj - yi);
    const double dx = xi - xj;
    const double dy = yi - yj;
    const double den = std::sqrt(dx * dx + dy * dy);
    if (!(den > 0.0)) {
        degenerate("line endpoints coincide");
    }
    return std::abs(num) / den - m.value;
}

}  // namespace

double eval_residual(const Measurement& m, const Eigen::VectorXd& x) {
    return std::visit(
        [&x](const auto& v) -> double {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DistanceMeasurement>) {
                return raw_distance(v, x) / v.sigma;
            } else if constexpr (std::is_same_v<T, AngleMeasurement>) {
                return raw_angle(v, x) / v.sigma;
            } else if constexpr (std::is_same_v<T, PointLineMeasurement>) {
                return raw_point_line(v, x) / v.sigma;
            } else {
                const int col = 2 * v.i + (v.axis == Axis::X ? 0 : 1);
                return (x[col] - v.value) / v.sigma;
            }
        },
        m);
}

namespace {

JacobianRow grad_distance(const DistanceMeasurement& m, const Eigen::VectorXd& x) {
    const double dx = x[2 * m.i] - x[2 * m.j];
    const double dy = x[2 * m.i + 1] - x[2 * m.j + 1];
    const double d = std::sqrt(dx * dx + dy * dy);
    if (!(d > 0.0)) {
        degenerate("distance endpoints coincide");
    }
    const double w = 1.0 / m.sigma;
    JacobianRow row;
    push(row, 2 * m.i, w * dx / d);
    push(row, 2 * m.i + 1, w * dy / d);
    push(row, 2 * m.j, -w * dx / d);
    push(row, 2 * m.j + 1, -w * dy / d);
    return row;
}

JacobianRow grad_angle(const AngleMeasurement& m, const Eigen::VectorXd& x) {
    // d/du atan2(v, u) = -v / (u^2 + v^2), d/dv atan2(v, u) = u / (u^2 + v^2)
    const double u1 = x[2 * m.k] - x[2 * m.j];
    const double v1 = x[2 * m.k + 1] - x[2 * m.j + 1];
    const double u2 = x[2 * m.k] - x[2 * m.i];
    const double v2 = x[2 * m.k + 1] - x[2 * m.i + 1];
    const double q1 = u1 * u1 + v1 * v1;
    const double q2 = u2 * u2 + v2 * v2;
    if (!(q1 > 0.0) || !(q2 > 0.0)) {
        degenerate("angle ray endpoints coincide");
    }
    const double w = 1.0 / m.sigma;
    // r = w (t1 - t2); i appears only in t2's arguments and negated, j only
    // in t1's arguments and negated, k in both with unit sign.
    JacobianRow row;
    push(row, 2 * m.i, -w * v2 / q2);
    push(row, 2 * m.i + 1, w * u2 / q2);
    push(row, 2 * m.j, w * v1 / q1);
    push(row, 2 * m.j + 1, -w * u1 / q1);
    push(row, 2 * m.k, w * (-v1 / q1 + v2 / q2));
    push(row, 2 * m.k + 1, w * (u1 / q1 - u2 / q2));
    return row;
}

JacobianRow grad_point_line(const PointLineMeasurement& m, const Eigen::VectorXd& x) {
    const double xi = x[2 * m.i], yi = x[2 * m.i + 1];
    const double xj = x[2 * m.j], yj = x[2 * m.j + 1];
    const double xk = x[2 * m.k], yk = x[2 * m.k + 1];
    const double num = xi * (yk - yj) + xj * (yi - yk) + xk * (yj - yi);
    const double dx = xi - xj;
    const double dy = yi - yj;
    const double den2 = dx * dx + dy * dy;
    const double den = std::sqrt(den2);
    if (!(den > 0.0)) {
        degenerate("line endpoints coincide");
    }
    const double s = num >= 0.0 ? 1.0 : -1.0;
    const double a = std::abs(num);
    const double w = 1.0 / m.sigma;
    // d(|N| / D) = s * dN / D - |N| * dD / D^2; D depends on i and j only.
    JacobianRow row;
    push(row, 2 * m.i, w * (s * (yk - yj) / den - a * dx / (den2 * den)));
    push(row, 2 * m.i + 1, w * (s * (xj - xk) / den - a * dy / (den2 * den)));
    push(row, 2 * m.j, w * (s * (yi - yk) / den + a * dx / (den2 * den)));
    push(row, 2 * m.j + 1, w * (s * (xk - xi) / den + a * dy / (den2 * den)));
    push(row, 2 * m.k, w * s * (yj - yi) / den);
    push(row, 2 * m.k + 1, w * s * (xi - xj) / den);
    return row;
}

}  // namespace

JacobianRow eval_residual_gradient(const Measurement& m, const Eigen::VectorXd& x) {
    JacobianRow row = std::visit(
        [&x](const auto& v) -> JacobianRow {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DistanceMeasurement>) {
                return grad_distance(v, x);
            } else if constexpr (std::is_same_v<T, AngleMeasurement>) {
                return grad_angle(v, x);
            } else if constexpr (std::is_same_v<T, PointLineMeasurement>) {
                return grad_point_line(v, x);
            } else {
                JacobianRow r;
                push(r, 2 * v.i + (v.axis == Axis::X ? 0 : 1), 1.0 / v.sigma);
                return r;
            }
        },
        m);
    sort_row(row);
    return row;
}

Eigen::VectorXd eval_R(const Problem& p, const Eigen::VectorXd& x) {
    Eigen::VectorXd r(p.n_measurements());
    for (int i = 0; i < p.n_measurements(); ++i) {
        try {
            r[i] = eval_residual(p.measurements[static_cast<size_t>(i)], x);
        } catch (const EvaluationError& e) {
            throw EvaluationError(e.what(), i);
        }
    }
    return r;
}

SparseJacobian eval_J(const Problem& p, const Eigen::VectorXd& x) {
    SparseJacobian jac;
    jac.rows = p.n_measurements();
    jac.cols = p.n_vars();
    jac.row_ptr.resize(static_cast<size_t>(jac.rows) + 1, 0);
    jac.col_idx.reserve(static_cast<size_t>(jac.rows) * 6);
    jac.values.reserve(static_cast<size_t>(jac.rows) * 6);
    for (int i = 0; i < jac.rows; ++i) {
        JacobianRow row;
        try {
            row = eval_residual_gradient(p.measurements[static_cast<size_t>(i)], x);
        } catch (const EvaluationError& e) {
            throw EvaluationError(e.what(), i);
        }
        for (int a = 0; a < row.count; ++a) {
            jac.col_idx.push_back(row.cols[a]);
            jac.values.push_back(row.vals[a]);
        }
        jac.row_ptr[static_cast<size_t>(i) + 1] = static_cast<int>(jac.col_idx.size());
    }
    return jac;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> SparseJacobian::to_eigen() const {
    using Map = Eigen::Map<const Eigen::SparseMatrix<double, Eigen::RowMajor, int>>;
    return Map(rows, cols, static_cast<int>(values.size()), row_ptr.data(),
               col_idx.data(), values.data());
}

double eval_F(const Problem& p, const Eigen::VectorXd& x) {
    double f = 0.0;
    for (int i = 0; i < p.n_measurements(); ++i) {
        double r = 0.0;
        try {
            r = eval_residual(p.measurements[static_cast<size_t>(i)], x);
        } catch (const EvaluationError& e) {
            throw EvaluationError(e.what(), i);
        }
        f += r * r;
    }
    return 0.5 * f;
}

Eigen::VectorXd eval_gradient(const Problem& p, const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p.n_vars());
    for (int i = 0; i < p.n_measurements(); ++i) {
        const Measurement& m = p.measurements[static_cast<size_t>(i)];
        double r = 0.0;
        JacobianRow row;
        try {
            r = eval_residual(m, x);
            row = eval_residual_gradient(m, x);
        } catch (const EvaluationError& e) {
            throw EvaluationError(e.what(), i);
        }
        for (int a = 0; a < row.count; ++a) {
            g[row.cols[a]] += row.vals[a] * r;
        }
    }
    return g;
}

}  // namespace pilm
