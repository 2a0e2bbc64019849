#pragma once

#include <stdexcept>
#include <string>

namespace prodlaw {

/// Base class for every failure raised by the library. The CLI maps the
/// concrete subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// No root of the self-consistent cubic lies in the upper half-plane.
class NoValidBranch : public Error {
public:
    using Error::Error;
};

/// m or 1+m underflowed while evaluating a derived quantity.
class DegeneratePoint : public Error {
public:
    using Error::Error;
};

class QuadratureFailure : public Error {
public:
    using Error::Error;
};

/// Requested asymptotic regime or scan region does not contain the point.
class RegimeMismatch : public Error {
public:
    using Error::Error;
};

class SingularGamma : public Error {
public:
    using Error::Error;
};

class InvalidConfig : public Error {
public:
    using Error::Error;
};

/// LAPACK reported non-convergence or an illegal argument.
class BackendFailure : public Error {
public:
    using Error::Error;
};

class MissingVectors : public Error {
public:
    using Error::Error;
};

} // namespace prodlaw
