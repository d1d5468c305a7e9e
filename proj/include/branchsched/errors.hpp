#pragma once

#include <stdexcept>
#include <string>

namespace branchsched {

// Caller passed an argument outside the documented contract (bad fraction,
// empty list, malformed schedule, ...).
class ParameterError : public std::invalid_argument {
public:
    explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

// A knob value or contention level lies outside its domain. The message
// names the offending knob.
class DomainViolationError : public std::invalid_argument {
public:
    explicit DomainViolationError(const std::string& what) : std::invalid_argument(what) {}
};

// Least-squares system is rank deficient and no regularization was requested.
class SingularFitError : public std::runtime_error {
public:
    explicit SingularFitError(const std::string& what) : std::runtime_error(what) {}
};

// A model was queried with the wrong arity or feature set, or a required
// model is missing from a bundle.
class ModelMisuseError : public std::runtime_error {
public:
    explicit ModelMisuseError(const std::string& what) : std::runtime_error(what) {}
};

// The contention sensor has no reference log entries for the active branch.
class SensorUnavailableError : public std::runtime_error {
public:
    explicit SensorUnavailableError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace branchsched
