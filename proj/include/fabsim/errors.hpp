#pragma once

#include <stdexcept>
#include <string>

namespace fabsim {

// Base for every error raised by the library. Outcomes that are part of a
// model (lost packets, denied handshakes, refused docking) are values, not
// exceptions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchedulingInPast : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class UnknownCurve : public Error {
 public:
  using Error::Error;
};

class RateUnavailable : public Error {
 public:
  using Error::Error;
};

class UnknownEndpoint : public Error {
 public:
  using Error::Error;
};

class NoRouteAvailable : public Error {
 public:
  using Error::Error;
};

class UnknownProfile : public Error {
 public:
  using Error::Error;
};

// Scenario file problems. `where` is "line N" and/or a dotted field path.
class ConfigInvalid : public Error {
 public:
  ConfigInvalid(std::string where, const std::string& what)
      : Error(where.empty() ? what : where + ": " + what),
        where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

class IoFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace fabsim
