#pragma once

#include <stdexcept>
#include <string>

namespace mrdn {

// Base of every error the toolkit throws. The subclasses map onto the CLI
// exit codes (usage = 1, data = 2, checkpoint = 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace mrdn
