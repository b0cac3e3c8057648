#pragma once

#include <stdexcept>
#include <string>

namespace qainit {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree, or a rank is out of range.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, or an iterative method that did not converge.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A linear system stayed singular after every jitter escalation.
class SingularSystemError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Calibration statistics carry no information (no samples, no damping).
class DegenerateStatisticsError : public NumericError {
public:
    using NumericError::NumericError;
};

/// A parameter is outside its documented domain.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed packed data or container file.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A report has no applicable rows to aggregate.
class EmptyReportError : public Error {
public:
    using Error::Error;
};

} // namespace qainit
