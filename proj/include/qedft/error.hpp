// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace qedft {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: a violated precondition or malformed argument.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Bad or incomplete configuration (config files, parameter tables).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver failed to converge or a computation became
/// ill-conditioned.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// A requested combination of options is not supported.
class Unsupported : public Error {
 public:
  using Error::Error;
};

}  // namespace qedft
