#ifndef REGIMETEST_ERRORS_HPP
#define REGIMETEST_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace regimetest {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed configuration (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

// Invalid or inconsistent input data (CLI exit code 2).
struct DataError : Error {
  using Error::Error;
};

// Numerical failure during an analysis (CLI exit code 3).
struct NumericError : Error {
  using Error::Error;
};

// Syntax error in the rule DSL or a condition expression.
struct ParseError : ConfigError {
  int line;
  int column;
  ParseError(const std::string& msg, int line_, int column_)
      : ConfigError(msg + " (line " + std::to_string(line_) + ", column " +
                    std::to_string(column_) + ")"),
        line(line_),
        column(column_) {}
};

// No event times at or before the truncation time L.
struct EmptyGridError : NumericError {
  using NumericError::NumericError;
};

// A required treatment-assignment probability is zero.
struct PositivityViolation : NumericError {
  using NumericError::NumericError;
};

// A stratum contains no subjects at its decision point.
struct EmptyStratumError : DataError {
  using DataError::DataError;
};

// All subjects in a stratum received the same option.
struct DegenerateStratumError : DataError {
  using DataError::DataError;
};

// Monotone likelihood detected while fitting a logistic model.
struct SeparationError : NumericError {
  using NumericError::NumericError;
};

// Newton iterations failed to converge.
struct NonConvergenceError : NumericError {
  using NumericError::NumericError;
};

// Covariance matrix has no positive eigenvalues.
struct AllZeroMatrixError : NumericError {
  using NumericError::NumericError;
};

// Closed-form hazard requested at a parameterization where it is undefined.
struct SingularParameterizationError : NumericError {
  using NumericError::NumericError;
};

}  // namespace regimetest

#endif
