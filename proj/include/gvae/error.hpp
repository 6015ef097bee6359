#pragma once

#include <stdexcept>
#include <string>

namespace gvae {

// Exit codes surfaced by the CLI. Every library error maps onto one of these.
enum class ErrorCode : int {
  kParse = 2,
  kShape = 3,
  kDiverged = 4,
  kSingularGeometry = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }
  virtual const char* kind() const noexcept = 0;

 private:
  ErrorCode code_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorCode::kParse, what) {}
  const char* kind() const noexcept override { return "parse"; }
};

// Dimension mismatches, chart-domain violations, bad parameters.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCode::kShape, what) {}
  const char* kind() const noexcept override { return "shape"; }
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCode::kShape, what) {}
  const char* kind() const noexcept override { return "domain"; }
};

class DivergedTrainingError : public Error {
 public:
  explicit DivergedTrainingError(const std::string& what) : Error(ErrorCode::kDiverged, what) {}
  const char* kind() const noexcept override { return "diverged"; }
};

class SingularGeometryError : public Error {
 public:
  explicit SingularGeometryError(const std::string& what)
      : Error(ErrorCode::kSingularGeometry, what) {}
  const char* kind() const noexcept override { return "singular_geometry"; }
};

}  // namespace gvae
