#pragma once

#include <stdexcept>
#include <string>

namespace pefcoh {

// Runtime failure: I/O, metric preconditions, infeasible generator specs.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input files violate a schema or a cross-file invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

} // namespace pefcoh
