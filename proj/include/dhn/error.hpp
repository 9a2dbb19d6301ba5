#pragma once

#include <stdexcept>
#include <string>

namespace dhn {

/// Malformed input: files, specs, graphs or arguments.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A model evaluation that cannot be carried out (singular system, divergence).
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A design or problem that cannot satisfy its constraints.
class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dhn
