#pragma once

#include <stdexcept>
#include <string>

namespace schrodctl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad input: violated precondition, malformed config, missing file.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// A well-posed request that the numerics could not satisfy.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// The linearization at the base state is not invertible (two-mode
/// states whose weighted diagonal couplings balance).
class ObstructedState : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// Regularized Gram system of the moment fit is too ill-conditioned.
class IllConditioned : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class Diverged : public NumericalError {
public:
  using NumericalError::NumericalError;
};

namespace detail {
inline void require(bool ok, const std::string &what) {
  if (!ok)
    throw ValidationError(what);
}
} // namespace detail

} // namespace schrodctl
