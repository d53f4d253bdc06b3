#pragma once

#include <stdexcept>
#include <string>

namespace tvtsyn {

// Base of every error thrown by the library. The CLI maps the concrete
// subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent configuration, shape mismatch between weights and layer specs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad user input: wrong chunk length, unsupported WAV, mismatched sequences.
class InputError : public Error {
 public:
  using Error::Error;
};

// Malformed weight container or audio file.
class FormatError : public InputError {
 public:
  using InputError::InputError;
};

// Operation not allowed in the current session state (e.g. feed after flush).
class StateError : public Error {
 public:
  using Error::Error;
};

// A library invariant was violated at run time.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace tvtsyn
