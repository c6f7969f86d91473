#pragma once

#include <stdexcept>
#include <string>

namespace kac {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

#define KAC_DEFINE_ERROR(Name, tag)                      \
  class Name : public Error {                            \
   public:                                               \
    using Error::Error;                                  \
    const char* kind() const noexcept override { return tag; } \
  };

/// Invalid argument value or violated precondition.
KAC_DEFINE_ERROR(ArgumentError, "argument")
/// Grid or truncation settings cannot resolve the requested object.
KAC_DEFINE_ERROR(ConfigurationError, "configuration")
/// A quadrature or truncation tail check failed.
KAC_DEFINE_ERROR(AccuracyError, "accuracy")
/// A query outside the tabulated range.
KAC_DEFINE_ERROR(RangeError, "range")
/// An object lacks data required by the operation (e.g. a ladder level).
KAC_DEFINE_ERROR(StateError, "state")
/// A rejection sampler exceeded its trial budget.
KAC_DEFINE_ERROR(SamplingError, "sampling")
/// Gram matrix too ill-conditioned for the requested basis.
KAC_DEFINE_ERROR(ConditioningError, "conditioning")
/// Time stepping produced too much negative mass.
KAC_DEFINE_ERROR(StabilityError, "stability")
/// Statistically degenerate input (e.g. a constant test function).
KAC_DEFINE_ERROR(DegenerateError, "degenerate")

#undef KAC_DEFINE_ERROR

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ArgumentError(msg);
}

}  // namespace kac
