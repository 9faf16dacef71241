#pragma once

#include <stdexcept>
#include <string>

namespace cfbound {

/// Malformed input file or query description.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Structurally invalid model (cycles, bad tables, unknown names, ...).
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Evidence with zero probability under the current model.
/// The EM driver treats this as a failed initialisation and re-seeds.
class ZeroProbabilityEvidence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A state-space enumeration or cardinality exceeded its configured cap.
class CapacityExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure: non-finite intermediate, quadrature or optimiser
/// not converging, every restart failing.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the documented domain of a numerical routine.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace cfbound
