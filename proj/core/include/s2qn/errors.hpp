#ifndef S2QN_ERRORS_HPP
#define S2QN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace s2qn {

// Base class for every failure the library raises. Callers that only need
// "did it work" can catch this; the engine's retry loop catches the precise
// types below.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A factorization pivot fell below tolerance, or a solve produced a
// non-descent direction: the regularized system is not positive definite at
// the current shift. The step loop reacts by raising lambda and retrying.
class NotPositiveDefinite : public Error {
public:
  using Error::Error;
};

// Operand shapes are inconsistent (matrix products, Kronecker factors,
// block slices).
class DimensionMismatch : public Error {
public:
  using Error::Error;
};

// A square matrix that must be invertible is numerically singular.
class Singular : public Error {
public:
  using Error::Error;
};

// The compact-form middle matrix P could not be inverted even after the
// drop-oldest retries.
class SingularP : public Error {
public:
  using Error::Error;
};

// U^T Lambda U in the block update is rank deficient; the caller is expected
// to prune dependent columns and retry.
class RankDeficientU : public Error {
public:
  using Error::Error;
};

// A model was asked for a quantity it cannot provide (e.g. exact per-sample
// Hessians of a net).
class UnsupportedModel : public Error {
public:
  using Error::Error;
};

// A Kronecker-factored operation was requested for a layer kind that has no
// factored form.
class LayerUnsupported : public Error {
public:
  using Error::Error;
};

// The parameter step between two iterates is exactly zero; no curvature pair
// can be formed from it.
class ZeroStep : public Error {
public:
  using Error::Error;
};

// A forward cache required for pair extraction is missing or empty.
class EmptyCache : public Error {
public:
  using Error::Error;
};

// Text input could not be parsed. Carries a 1-based line number.
class ParseError : public Error {
public:
  ParseError(const std::string& what, long line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

private:
  long line_;
};

// Feature indices in a sparse row are not strictly increasing.
class IndexOrderError : public Error {
public:
  using Error::Error;
};

// A forward pass produced a non-finite activation.
class NonFiniteActivation : public Error {
public:
  using Error::Error;
};

// The training loss became non-finite.
class NonFiniteLoss : public Error {
public:
  using Error::Error;
};

// Tensor/grid shapes disagree (conv layers, autoencoder targets).
class ShapeMismatch : public Error {
public:
  using Error::Error;
};

// An iterative reference computation failed to reach its tolerance.
class NotConverged : public Error {
public:
  using Error::Error;
};

// The step loop exhausted its lambda-doubling retries.
class SolveFailed : public Error {
public:
  using Error::Error;
};

// Run configuration is invalid (unknown keys, incompatible method/base, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace s2qn

#endif  // S2QN_ERRORS_HPP
