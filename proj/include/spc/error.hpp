#pragma once

#include <stdexcept>
#include <string>

namespace spc {

/// Malformed or inconsistent input (problem files, trees, certificates).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure inside a KKT solve.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace spc
