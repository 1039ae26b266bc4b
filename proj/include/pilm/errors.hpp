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

#include <stdexcept>
#include <string>

namespace pilm {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed problem, invalid configuration, bad CLI args.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A residual or derivative evaluated to a non-finite value. Usually caused
/// by degenerate geometry: coincident points or a zero-length line.
class EvaluationError : public Error {
public:
    EvaluationError(const std::string& msg, int measurement_index = -1)
        : Error(msg), measurement_index_(measurement_index) {}

    int measurement_index() const { return measurement_index_; }

private:
    int measurement_index_;
};

/// Numerical failure in a per-block factorization or solve.
class NumericalError : public Error {
public:
    NumericalError(const std::string& msg, int block_index = -1)
        : Error(msg), block_index_(block_index) {}

    int block_index() const { return block_index_; }

private:
    int block_index_;
};

/// A residual assigned to block i references a variable outside block i.
class PartitionConsistencyError : public Error {
public:
    using Error::Error;
};

/// Backtracking line search underflowed the step-size floor.
class StallError : public Error {
public:
    StallError(const std::string& msg, double last_alpha, double f, double grad_norm)
        : Error(msg), last_alpha_(last_alpha), f_(f), grad_norm_(grad_norm) {}

    double last_alpha() const { return last_alpha_; }
    double f() const { return f_; }
    double grad_norm() const { return grad_norm_; }

private:
    double last_alpha_;
    double f_;
    double grad_norm_;
};

}  // namespace pilm
