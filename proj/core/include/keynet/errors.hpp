#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace keynet {

// Root of every error thrown by the library. The CLI maps subclasses onto
// exit codes, so keep the hierarchy flat.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A configuration value is outside its documented range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A documented precondition on an otherwise well-formed value was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

class UnsupportedLayer : public Error {
 public:
  explicit UnsupportedLayer(const std::string& kind);
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// An encoded image was produced under a different image key than the one
// the keyed network was built for.
class WrongSensor : public Error {
 public:
  WrongSensor(const std::string& expected, const std::string& actual);
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data.
class FormatError : public Error {
 public:
  using Error::Error;
};

// On-disk data whose recorded digest does not match its content.
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what,
                          std::optional<std::size_t> layer = std::nullopt)
      : Error(what), layer_(layer) {}

  // Offending layer index when the data is a keynet container.
  std::optional<std::size_t> layer() const { return layer_; }

 private:
  std::optional<std::size_t> layer_;
};

}  // namespace keynet
