#pragma once

#include <stdexcept>
#include <string>

namespace pvg {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset problems: the manifest or a file it names is missing or unreadable.
class ManifestMissing : public IoError {
 public:
  using IoError::IoError;
};

class BadPose : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TimestampDisorder : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SpecInvalid : public std::invalid_argument {
 public:
  SpecInvalid(const std::string& field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class VersionMismatch : public IoError {
 public:
  using IoError::IoError;
};

class ChecksumMismatch : public IoError {
 public:
  using IoError::IoError;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pvg
