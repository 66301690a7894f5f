#pragma once

#include <stdexcept>
#include <string>

namespace despeckle {

/// Base of every error raised by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter or argument violates its documented range.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input data breaks an operation's contract: mismatched dimensions,
/// degenerate (constant) volumes, negative intensities where forbidden.
class DataContractError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing a volume file failed, including malformed headers.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace despeckle
