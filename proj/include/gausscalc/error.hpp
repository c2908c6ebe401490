#ifndef GAUSSCALC_ERROR_HPP
#define GAUSSCALC_ERROR_HPP

#include <stdexcept>
#include <string>

namespace gausscalc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Model or numerical parameter outside its admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A time that is required to be a grid node is not one.
class GridAlignmentError : public Error {
public:
    using Error::Error;
};

/// Order, dimension or length mismatch between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// The Gram matrix is too close to singular for the requested operation.
class ConditioningError : public Error {
public:
    using Error::Error;
};

/// Raised when a construction only exists for non-martingale splits.
class MartingaleCaseError : public Error {
public:
    using Error::Error;
};

/// Split at r = 0 or r = T where one of the two blocks is empty.
class DegenerateSplitError : public Error {
public:
    using Error::Error;
};

class IntervalError : public Error {
public:
    using Error::Error;
};

/// Special function evaluated outside its convergence regime.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Operation leaves the closed Wick-term algebra or is otherwise not offered.
class UnsupportedOperation : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace gausscalc

#endif  // GAUSSCALC_ERROR_HPP
