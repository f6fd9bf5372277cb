#pragma once

#include <stdexcept>
#include <string>

namespace tvpgo {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Too few correspondences / samples for the requested estimation.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// RANSAC finished without a model reaching the inlier requirement.
class NoConsensusError : public Error {
 public:
  using Error::Error;
};

/// Geometry too close to a singular configuration (parallel rays,
/// zero-norm translation, ...).
class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

/// Triangulation rays too close to parallel to intersect meaningfully.
class DegenerateParallaxError : public DegenerateGeometryError {
 public:
  using DegenerateGeometryError::DegenerateGeometryError;
};

/// Essential-matrix cheirality vote did not single out one candidate.
class AmbiguousDecompositionError : public Error {
 public:
  using Error::Error;
};

/// Graph structure violation (dangling endpoint, duplicate node, ...).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameter value (nonpositive scale, bad threshold, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values encountered during numerical work.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed file, unknown key, unparsable line.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Trajectory evaluation could not be carried out (too few associations).
class EvaluationError : public Error {
 public:
  using Error::Error;
};

}  // namespace tvpgo
