#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sketchfill {

/// Bad argument, shape or dimension mismatch.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated file. `offset` is the byte position where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// A well-formed edit request that violates a semantic rule (empty mask, geometry outside the
/// image). `field` names the offending part, e.g. `pen[1].points[3]`.
class RequestError : public InvalidArgument {
 public:
  RequestError(const std::string& field, const std::string& what) : InvalidArgument(what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A payload that does not match the request schema (wrong type, missing key, bad base64).
class PayloadError : public InvalidArgument {
 public:
  PayloadError(const std::string& field, const std::string& what) : InvalidArgument(what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pupil search found no usable gradients.
class NoPupilError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loss or activation became NaN/Inf during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sketchfill
