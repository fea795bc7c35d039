// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <stdexcept>
#include <string>

namespace mgrecon {

// Base class for every error thrown by this library. Hot paths avoid
// exceptions and return std::optional instead; throwing is reserved for
// contract violations and unusable inputs.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

// Geometric preconditions (projection behind camera, degenerate rays, ...).
class GeometryError : public Error {
public:
  using Error::Error;
};

class BehindCamera : public GeometryError {
public:
  using GeometryError::GeometryError;
};

class NonPositiveDepth : public GeometryError {
public:
  using GeometryError::GeometryError;
};

class DegenerateRays : public GeometryError {
public:
  using GeometryError::GeometryError;
};

class NegativeConfidence : public Error {
public:
  using Error::Error;
};

class NoPredictionsForView : public Error {
public:
  using Error::Error;
};

class MissingArtifact : public IoError {
public:
  using IoError::IoError;
};

class UncoveredView : public Error {
public:
  using Error::Error;
};

class InsufficientSupport : public Error {
public:
  using Error::Error;
};

class ZeroPredictedDepthSum : public Error {
public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
public:
  using Error::Error;
};

class DimensionMismatch : public Error {
public:
  using Error::Error;
};

class EmptyCloud : public Error {
public:
  using Error::Error;
};

class DegenerateRegion : public Error {
public:
  using Error::Error;
};

class PipelineError : public Error {
public:
  using Error::Error;
};

} // namespace mgrecon
