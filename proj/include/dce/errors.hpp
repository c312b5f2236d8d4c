#pragma once

#include <stdexcept>
#include <string>

namespace dce {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DCE_DEFINE_ERROR(Name)        \
  class Name : public Error {         \
   public:                            \
    using Error::Error;               \
  }

DCE_DEFINE_ERROR(FrozenError);
DCE_DEFINE_ERROR(WeightDomainError);
DCE_DEFINE_ERROR(UnknownSymbolError);
DCE_DEFINE_ERROR(IndexError);
DCE_DEFINE_ERROR(ChainError);
DCE_DEFINE_ERROR(BuiltinPositionError);
DCE_DEFINE_ERROR(UnknownPredicateError);
DCE_DEFINE_ERROR(NoBaseCaseError);
DCE_DEFINE_ERROR(ConfigError);
DCE_DEFINE_ERROR(OracleBudgetError);
DCE_DEFINE_ERROR(NormalizationError);
DCE_DEFINE_ERROR(EmptySupportError);
DCE_DEFINE_ERROR(NumericalError);
DCE_DEFINE_ERROR(DivergenceError);
DCE_DEFINE_ERROR(IngestError);
DCE_DEFINE_ERROR(SplitError);

#undef DCE_DEFINE_ERROR

/// Syntax error in rule text; carries a 1-based source position.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, int column)
      : Error(what + " at " + std::to_string(line) + ":" + std::to_string(column)),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// An atom with other than two arguments.
class ArityError : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace dce
