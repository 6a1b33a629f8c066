#pragma once

#include <stdexcept>
#include <string>

namespace aop {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not line up for the requested operation.
class DimensionError : public Error {
  public:
    using Error::Error;
};

/// A mask expected to have at least one foreground pixel is empty.
class EmptyMaskError : public Error {
  public:
    using Error::Error;
};

/// Elimination statistics were requested without any reference mask.
class NoReferenceMasksError : public Error {
  public:
    using Error::Error;
};

/// Malformed, truncated or missing on-disk data.
class FormatError : public Error {
  public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingDivergenceError : public Error {
  public:
    using Error::Error;
};

/// Scene generation could not satisfy its spec.
class GenerationError : public Error {
  public:
    using Error::Error;
};

/// A metric is undefined for its inputs (e.g. no ground truth).
class UndefinedMetricError : public Error {
  public:
    using Error::Error;
};

/// Inconsistent configuration or run set.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// The mask provider failed while answering a query.
class ProviderError : public Error {
  public:
    using Error::Error;
};

} // namespace aop
