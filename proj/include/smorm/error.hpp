#pragma once

#include <stdexcept>
#include <string>

namespace smorm {

// Every failure raised by the library derives from Error. The kind string is
// stable and is what the CLI emits in its machine-readable error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define SMORM_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  }

SMORM_DEFINE_ERROR(DimensionMismatch);
SMORM_DEFINE_ERROR(EmptyInput);
SMORM_DEFINE_ERROR(NotSquare);
SMORM_DEFINE_ERROR(NoConvergence);
SMORM_DEFINE_ERROR(SingularMatrix);
SMORM_DEFINE_ERROR(NotScalar);
SMORM_DEFINE_ERROR(ShapeMismatch);
SMORM_DEFINE_ERROR(InvalidArgument);
SMORM_DEFINE_ERROR(ConstructionFailed);
SMORM_DEFINE_ERROR(IoError);
SMORM_DEFINE_ERROR(SchemaMismatch);
SMORM_DEFINE_ERROR(EmptyBatch);
SMORM_DEFINE_ERROR(MissingGating);
SMORM_DEFINE_ERROR(MissingEnsembleMembers);
SMORM_DEFINE_ERROR(MissingMultiHead);
SMORM_DEFINE_ERROR(InsufficientSamples);
SMORM_DEFINE_ERROR(SingularCovariance);
SMORM_DEFINE_ERROR(SingularFisher);
SMORM_DEFINE_ERROR(InvalidN);
SMORM_DEFINE_ERROR(LengthMismatch);
SMORM_DEFINE_ERROR(NonFiniteLoss);
SMORM_DEFINE_ERROR(TooShort);
SMORM_DEFINE_ERROR(BadPartition);
SMORM_DEFINE_ERROR(ConfigError);

#undef SMORM_DEFINE_ERROR

// ParseError carries the 1-based line number of the offending input line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("ParseError", "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace smorm
