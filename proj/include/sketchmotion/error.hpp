#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sketchmotion {

enum class ErrorCode {
  parse,
  unsupported_feature,
  empty_sketch,
  validation,
  shape_mismatch,
  domain,
  not_found,
  conflict,
  io,
  version,
  remote,
  non_finite,
};

const char* to_string(ErrorCode code);

/// Base for every error the engine raises. `field()` carries a JSON-pointer
/// style path when the error concerns a specific input field.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = {})
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t offset)
      : Error(ErrorCode::parse, message + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedFeature : public Error {
 public:
  explicit UnsupportedFeature(std::string feature)
      : Error(ErrorCode::unsupported_feature, "unsupported SVG feature: " + feature),
        feature_(std::move(feature)) {}

  const std::string& feature() const noexcept { return feature_; }

 private:
  std::string feature_;
};

class ValidationError : public Error {
 public:
  ValidationError(const std::string& message, std::string field = {})
      : Error(ErrorCode::validation, message, std::move(field)) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error(ErrorCode::shape_mismatch, message) {}
};

}  // namespace sketchmotion
