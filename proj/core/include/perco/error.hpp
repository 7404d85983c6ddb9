#pragma once

#include <stdexcept>
#include <string>

namespace perco {

// All library failures derive from perco::Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class TopologyError : public Error {
 public:
  using Error::Error;
};

// Raised when a region contains no open edge at all.
class EmptyClusterError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ConstructionError : public Error {
 public:
  using Error::Error;
};

// The top-scale cube(s) of the working box are bad, so no partition exists.
class UnresolvableRegionError : public ConstructionError {
 public:
  using ConstructionError::ConstructionError;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

// Iterative solve did not reach the requested residual.
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace perco
