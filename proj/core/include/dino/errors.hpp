#pragma once

#include <stdexcept>
#include <string>

namespace dino {

/// Bad argument values: shape mismatches, out-of-range attributes, negative energies.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The caller asked for something the object cannot do (e.g. a disc stream on
/// an unbranched network, an unknown config mode).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Filesystem and serialization failures. The message always carries the path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace dino
