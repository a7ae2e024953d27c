#pragma once

#include <stdexcept>
#include <string>

namespace scriptbmi {

// Rank/extent disagreements between tensors or layer parameters.
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Scalar argument outside its documented domain (rates, factors, sigmas...).
struct RangeError : std::invalid_argument {
  explicit RangeError(const std::string& what) : std::invalid_argument(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed file contents (bad magic, truncated stream, unparsable CSV).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid model/run configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Dataset-level problems: empty splits, bad labels, count mismatches.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Manifest structure violations (orphan images, duplicate classes).
struct ManifestError : std::runtime_error {
  explicit ManifestError(const std::string& what) : std::runtime_error(what) {}
};

// Stored values failing cross-validation (e.g. BMI vs height/weight).
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss during optimization; message names epoch and step.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace scriptbmi
