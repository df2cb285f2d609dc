#pragma once

#include <stdexcept>
#include <string>

namespace twolevel {

// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument, parameter combination or configuration value.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A test function produced a non-finite value at some evaluation point.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// A quadrature grid or integrator step could not reach the requested accuracy.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

// A density without tail metadata was handed to the long-time classifier.
class UnclassifiableError : public Error {
 public:
  using Error::Error;
};

}  // namespace twolevel
