#pragma once

#include <stdexcept>
#include <string>

namespace gamp {

// Base of every error the library throws. Callers that only need a message
// can catch this; the subclasses exist so tests and the CLI can tell
// failure classes apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced by a numerical routine (gradients, losses).
class NumericError : public Error {
 public:
  using Error::Error;
};

// The physics integrator produced a non-finite coordinate.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, int coordinate)
      : Error(what), coordinate_(coordinate) {}
  int coordinate() const { return coordinate_; }

 private:
  int coordinate_;
};

}  // namespace gamp
