#pragma once

#include <stdexcept>
#include <string>

namespace effortgen {

// Malformed input text (JSON syntax, wrong field types).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint absent, unreadable, or incompatible with the requested run.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

} // namespace effortgen
