#pragma once

#include <stdexcept>
#include <string>

namespace edgeseg {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor extents or layer wiring do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument is out of its legal range.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A network configuration violates its invariants. The message lists every
/// offending node, one per line.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data (labels, palette colors, image contents) is invalid.
class DataError : public Error {
 public:
  using Error::Error;
};

/// An API was called out of sequence or with mismatched state.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A serialized file does not start with the expected magic/layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A serialized file has an unsupported version.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// A serialized file fails its integrity checksum.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Decoded file contents disagree with each other (e.g. tensor shapes vs the
/// embedded config).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// I/O failure (missing file, unreadable directory).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace edgeseg
